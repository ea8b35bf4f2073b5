"""End-to-end acceptance checks, one test per criterion.

Each test records its criterion label and the measured numbers; the
terminal summary hook in conftest.py prints one PASS/FAIL line per
criterion. The training criteria (4, 5, 6) take several minutes each at
the default configuration.
"""
import numpy as np
import pytest
from scipy import stats

from modeswitch import comms, dqn, env, experiments, intent, nn, trajectories
from modeswitch.config import load_config
from modeswitch.dqn import ReplayBuffer, Transition

from test_nn import grad_check

pytestmark = pytest.mark.acceptance

PSI = 0.85


@pytest.fixture(scope="module")
def exp():
    return load_config()


@pytest.fixture(scope="module")
def dataset(exp):
    return trajectories.generate_dataset(**exp.dataset_kwargs())


@pytest.fixture(scope="module")
def trained_dqn(exp):
    cfg = exp.episode_config()
    res = experiments.train_dqn(exp, cfg)
    ev = dqn.evaluate(res.net, cfg, int(exp["dqn"]["eval_episodes"]), seed=exp.seed + 1)
    return res, ev


def label(record_property, n, name, detail):
    record_property("criterion", f"{n} {name}")
    record_property("detail", detail)


def test_c1_formula_fidelity(record_property):
    eps = np.logspace(-9, np.log10(0.5), 400)
    worst = max(abs(comms.q_function(comms.q_inverse(e)) - e) / e for e in eps)
    ch = comms.ChannelConfig(1.0, 1.0, 3e-8, 1e-14, 1e6, 256e-6)
    rate = comms.achievable_rate(ch, 1e-5)
    label(record_property, 1, "formula fidelity",
          f"q_inverse round trip rel err {worst:.2e}, rate {rate:.5f} bits/s/Hz")
    assert worst < 1e-6
    assert abs(rate - 1.6276) <= 1e-3


def test_c2_probability_model(exp, record_property):
    cfg = exp.episode_config()
    rows = []
    for i, pt in enumerate((0.0, 0.5, 0.7, 1.0)):
        prop, _ = experiments.monte_carlo(cfg, pt, 100_000, seed=exp.seed, point=i,
                                          batch=exp["sweeps"]["batch"])
        mc, se = experiments._mean_se(prop.success)
        rows.append((pt, mc, se, env.threshold_success_exact(cfg, pt)))
    label(record_property, 2, "probability model", "; ".join(
        f"P^t {pt}: MC {mc:.4f} analytic {a:.4f} ({abs(mc - a) / se:.1f} SE)" for pt, mc, se, a in rows))
    for pt, mc, se, a in rows:
        assert abs(mc - a) < 3 * se, pt
    assert rows[-1][3] == pytest.approx(0.8499830, abs=5e-8)


def test_c3_load_reduction(exp, trained_dqn, record_property):
    e = load_config()
    e.doc["sweeps"]["pt_grid"] = [0.5]
    row = experiments.sweep_pt(e)[0]
    _, ev = trained_dqn
    label(record_property, 3, "load reduction",
          f"P^t 0.5 load {row.load:g} vs {row.conventional_load:g}; DQN load {ev.load:.1f} "
          f"({ev.load / 256:.1%}) success {ev.success:.4f}")
    assert row.load == 128.0 and row.conventional_load == 256.0
    assert ev.load <= 0.6 * row.conventional_load
    assert ev.success > PSI


def test_c4_intention_recognition(exp, dataset, record_property):
    _, acc, _ = experiments.train_intent(exp, dataset)
    fr = sorted(float(f) for f in exp["classifier"]["eval_fractions"])
    mean = dict(zip(fr, acc.mean(axis=0)))
    label(record_property, 4, "intention recognition",
          ", ".join(f"{f:g}:{a:.3f}" for f, a in mean.items()) + f" over {len(acc)} seeds")
    assert len(acc) == 5
    assert all(a > 0.9 for f, a in mean.items() if f >= 0.6)
    assert mean[1.0] >= mean[0.3]


def test_c5_trajectory_prediction(exp, dataset, record_property):
    _, rows, _ = experiments.train_traj(exp, dataset)
    table = {(k, f): te for f, _, te, k in rows}
    fr = sorted({f for f, *_ in rows})
    lstm = [table["lstm", f] for f in fr]
    cnn = [table["cnn", f] for f in fr]
    label(record_property, 5, "trajectory prediction",
          "test RRMSE % lstm " + " ".join(f"{v:.2f}" for v in lstm)
          + " | cnn " + " ".join(f"{v:.2f}" for v in cnn) + f" at fractions {fr}")
    assert len(exp["predictor"]["seeds"]) == 5
    assert all(np.diff(lstm) < 0) and all(np.diff(cnn) < 0)
    assert all(a <= b for a, b in zip(lstm, cnn))


def test_c6_dqn_convergence(exp, trained_dqn, record_property):
    res, _ = trained_dqn
    curve = np.array([r[1] for r in res.curve])
    k = max(1, len(curve) // 10)
    first, last = curve[:k].mean(), curve[-k:].mean()
    steps = res.curve[-1][0]
    label(record_property, 6, "DQN convergence",
          f"moving-average success first 10% {first:.3f}, final 10% {last:.3f} by step {steps}")
    assert steps <= 200_000
    assert last > PSI
    assert last - first >= 0.2


def test_c7_interior_maximum(exp, record_property):
    coupled = experiments.sweep_pt(exp)
    best = max(coupled, key=lambda r: r.success)
    flat = exp.episode_config(eps_c=intent.AccuracyCurve.constant(0.05),
                              eps_t=intent.AccuracyCurve.constant(0.02))
    rows = experiments.sweep_pt(exp, flat, key_offset=500)
    p_mu, p_sigma = rows[-1].analytic, rows[0].analytic
    z = [abs(r.success - (r.x * p_mu + (1 - r.x) * p_sigma)) / r.success_se for r in rows]
    label(record_property, 7, "interior maximum",
          f"coupled best P^t {best.x:g} (success {best.success:.4f}); "
          f"constant curves max deviation from line {max(z):.2f} SE")
    assert best.x not in (coupled[0].x, coupled[-1].x)
    assert max(z) < 3


def test_c8_resilience_crossovers(exp, record_property):
    assert exp["sweeps"]["episodes"] >= 10_000
    loss = {r.x: r for r in experiments.sweep_loss(exp)}
    lo, hi = loss[1e-5], loss[0.1]
    op = {r.x: r for r in experiments.sweep_operator(exp)}[0.6]
    label(record_property, 8, "resilience crossovers",
          f"eps_d 1e-5 gap {lo.success - lo.conventional:+.4f}; eps_d 0.1 gap "
          f"{hi.success - hi.conventional:+.4f}; rho 0.6 gap {op.success - op.conventional:+.4f}")
    assert abs(lo.success - lo.conventional) <= 0.05
    assert hi.success - hi.conventional > 0.05
    assert op.x == 0.6 and exp["sweeps"]["proposed_pt"] == 0.7
    assert op.success - op.conventional > 0.05


def _tiny_classifier_bytes(ds):
    cfg = intent.ClassifierConfig(filters=8, dense=(8,), max_epochs=2)
    return nn.checkpoint.to_bytes(intent.train_classifier(ds, cfg, seed=1).net)


def test_c9_substrate_soundness(small_ds, record_property):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 6, 3))
    mask = np.ones((3, 6))
    mask[1, 4:] = 0
    errs = [
        grad_check(nn.Network([nn.Dense(4, 6, "tanh", rng), nn.Dense(6, 3, "linear", rng)], 4),
                   rng.standard_normal((5, 4))),
        grad_check(nn.Network([nn.Conv1D(3, 4, 3, "leaky_relu", rng), nn.GlobalAvgPool(),
                               nn.Dense(4, 2, "linear", rng)], 3), x, mask),
        grad_check(nn.Network([nn.LSTM(3, 5, rng), nn.Dense(5, 2, "linear", rng)], 3), x, mask),
    ]
    same = _tiny_classifier_bytes(small_ds) == _tiny_classifier_bytes(small_ds)
    buf = ReplayBuffer(10, 1)
    for i in range(10):
        buf.store(Transition(np.zeros(1), 0, float(i), np.zeros(1), False))
    r = np.random.default_rng(0)
    draws = np.concatenate([buf.sample(10, r).rewards for _ in range(10_000)]).astype(int)
    p = stats.chisquare(np.bincount(draws, minlength=10)).pvalue
    label(record_property, 9, "substrate soundness",
          f"worst gradient rel err {max(errs):.1e}; checkpoints byte-identical {same}; "
          f"buffer chi-square p {p:.3f}")
    assert max(errs) < 1e-4
    assert same
    assert p > 0.01
