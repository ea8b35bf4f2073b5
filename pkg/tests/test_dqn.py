import numpy as np
import pytest
from scipy import stats

from modeswitch import dqn, env, nn
from modeswitch.dqn import Batch, DQNHyperparams, ReplayBuffer, Transition
from modeswitch.intent import AccuracyCurve

flat = AccuracyCurve.constant


def tr(i, terminal=False):
    return Transition(np.full(3, float(i)), i % 2, float(i), np.full(3, i + 0.5), terminal)


def test_buffer_fifo_eviction():
    buf = ReplayBuffer(3, 3)
    for i in range(4):
        buf.store(tr(i))
    assert len(buf) == 3
    assert [buf[k].reward for k in range(3)] == [1.0, 2.0, 3.0]


def test_buffer_sampling_uniform():
    buf = ReplayBuffer(10, 3)
    for i in range(10):
        buf.store(tr(i))
    rng = np.random.default_rng(0)
    draws = np.concatenate([buf.sample(10, rng).rewards for _ in range(10_000)]).astype(int)
    counts = np.bincount(draws, minlength=10)
    assert counts.sum() == 100_000
    assert stats.chisquare(counts).pvalue > 0.01


def test_buffer_sample_reproducible():
    buf = ReplayBuffer(8, 3)
    for i in range(8):
        buf.store(tr(i))
    a = buf.sample(8, np.random.default_rng(5))
    b = buf.sample(8, np.random.default_rng(5))
    assert np.array_equal(a.rewards, b.rewards) and np.array_equal(a.states, b.states)
    with pytest.raises(ValueError):
        buf.sample(9, np.random.default_rng(0))


class ConstNet:
    def __init__(self, q):
        self.q = np.asarray(q, dtype=float)

    def forward(self, x, mask=None):
        return np.tile(self.q, (np.atleast_2d(x).shape[0], 1))


def batch(rewards, terminals):
    n = len(rewards)
    return Batch(np.zeros((n, 7)), np.zeros(n, dtype=int), np.asarray(rewards, dtype=float),
                 np.zeros((n, 7)), np.asarray(terminals, dtype=bool))


def test_bellman_target_examples():
    tgt = ConstNet([50.0, 10.0])
    assert dqn.bellman_target(batch([70.0], [True]), tgt, 0.99)[0] == 70.0
    assert np.array_equal(dqn.bellman_target(batch([1.0, 2.0], [False, False]), tgt, 0.0), [1.0, 2.0])
    assert dqn.bellman_target(batch([1.0], [False]), tgt, 0.99)[0] == pytest.approx(50.5)
    with pytest.raises(ValueError):
        dqn.bellman_target(batch([], []), tgt, 0.9)


def _net(seed=0):
    return dqn.build_q_network(7, (16, 16), np.random.default_rng(seed))


def test_train_step_zero_when_q_equals_target():
    net = _net()
    x = np.random.default_rng(1).random((5, 7))
    q = net.forward(x)
    b = Batch(x, np.array([0, 1, 0, 1, 1]), q[np.arange(5), [0, 1, 0, 1, 1]], x, np.ones(5, bool))
    before = net.get_weights()
    loss = dqn.train_step(net, net.clone(), b, 0.99, nn.SGD(0.1))
    assert loss == pytest.approx(0.0, abs=1e-20)
    assert all(np.allclose(a, c) for a, c in zip(before, net.get_weights()))


def _losses(seed):
    rng = np.random.default_rng(seed)
    net = _net(seed)
    tgt = net.clone()
    b = Batch(rng.random((32, 7)), rng.integers(0, 2, 32), rng.random(32) * 10,
              rng.random((32, 7)), rng.random(32) < 0.3)
    opt = nn.Adam(1e-3)
    return [dqn.train_step(net, tgt, b, 0.9, opt) for _ in range(100)]


def test_train_step_reduces_loss_and_is_deterministic():
    a = _losses(3)
    assert a[-1] < 0.5 * a[0]
    assert a == _losses(3)


def test_gradient_only_through_taken_action():
    net = _net()
    x = np.random.default_rng(2).random((4, 7))
    b = Batch(x, np.zeros(4, dtype=int), np.full(4, 5.0), x, np.ones(4, bool))
    before = net.forward(x)
    dqn.train_step(net, net.clone(), b, 0.9, nn.SGD(1e-3))
    # a tiny step on action 0 only; the last layer row for action 1 is untouched
    w_last = net.layers[-1].params["W"]
    assert np.allclose(net.layers[-1].grads["W"][1], 0.0)
    assert w_last.shape == (2, 16)
    assert not np.allclose(before[:, 0], net.forward(x)[:, 0])


def test_sync_target():
    main, tgt = _net(0), _net(1)
    x = np.random.default_rng(0).random((6, 7))
    assert not np.allclose(main.forward(x), tgt.forward(x))
    dqn.sync_target(main, tgt)
    assert np.array_equal(main.forward(x), tgt.forward(x))
    dqn.sync_target(main, tgt)
    assert np.array_equal(main.forward(x), tgt.forward(x))
    with pytest.raises(ValueError):
        dqn.sync_target(main, dqn.build_q_network(7, (8,), np.random.default_rng(0)))


def test_select_action():
    rng = np.random.default_rng(0)
    assert dqn.select_action(ConstNet([0.0, 1.0]), np.zeros(7), 0.0, rng) == 1
    assert dqn.select_action(ConstNet([1.0, 1.0]), np.zeros(7), 0.0, rng) == 0
    picks = [dqn.select_action(ConstNet([5.0, 0.0]), np.zeros(7), 1.0, rng) for _ in range(10_000)]
    assert abs(np.mean(picks) - 0.5) < 0.02
    with pytest.raises(ValueError):
        dqn.select_action(ConstNet([0, 0]), np.zeros(7), 1.5, rng)


def test_epsilon_schedule():
    hp = DQNHyperparams(total_steps=1000, eps_decay_fraction=0.2)
    assert hp.epsilon(0) == 1.0
    assert hp.epsilon(100) == pytest.approx(0.5 * (1 + hp.eps_end))
    assert hp.epsilon(200) == pytest.approx(hp.eps_end)
    assert hp.epsilon(999) == pytest.approx(hp.eps_end)
    with pytest.raises(ValueError):
        DQNHyperparams(gamma=1.0)
    with pytest.raises(ValueError):
        DQNHyperparams(min_fill=10, batch_size=64)


def test_state_encoding_shapes():
    enc = dqn.StateEncoding(4)
    s = env.ModeSwitchEnv(env.EpisodeConfig(Z=20)).reset(0)
    v = enc.encode(s)
    assert v.shape == (7,) and v[4] == 0 and v[5] == 1 and v[6] == 0
    net = dqn.build_q_network(enc.dim)
    assert net.forward(v[None]).shape == (1, 2)


SHORT = DQNHyperparams(total_steps=3000, min_fill=200, log_every=500, target_sync=250,
                       hidden=(16, 16))


def test_training_reproducible():
    cfg = env.EpisodeConfig(Z=20)
    a = dqn.train(lambda: env.ModeSwitchEnv(cfg), SHORT, seed=4)
    b = dqn.train(lambda: env.ModeSwitchEnv(cfg), SHORT, seed=4)
    assert a.curve == b.curve
    assert [r[0] for r in a.curve] == list(range(500, 3001, 500))


def test_policy_checkpoint_round_trip(tmp_path):
    net = _net()
    dqn.save_policy(net, tmp_path / "p.ckpt", SHORT)
    back, meta = dqn.load_policy(tmp_path / "p.ckpt")
    assert meta["state_encoding"]["dim"] == 7
    x = np.random.default_rng(0).random((3, 7))
    assert np.array_equal(net.forward(x), back.forward(x))
    nn.checkpoint.save(net, tmp_path / "bare.ckpt")
    with pytest.raises(nn.checkpoint.CheckpointError):
        dqn.load_policy(tmp_path / "bare.ckpt")


def test_collapse_flagged():
    net = _net()
    net.layers[-1].params["W"][:] = 0
    net.layers[-1].params["b"][:] = [1.0, 0.0]
    warn = dqn.collapse_warnings(net, dqn.StateEncoding(4))
    assert warn and "collapse" in warn[0]
    assert dqn.collapse_warnings(ConstNet([0.0, 1.0]), dqn.StateEncoding(4))


def test_curve_csv(tmp_path):
    dqn.write_curve([(1000, 0.5, 0.9, 1.25, 0.3)], tmp_path / "c.csv", ["seed: 0"])
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "# seed: 0"
    assert lines[1] == ",".join(dqn.CURVE_HEADER)


DEGEN = DQNHyperparams(total_steps=30_000, min_fill=500, log_every=500, target_sync=500)


@pytest.mark.slow
def test_perfect_autonomy_switches_at_once():
    cfg = env.EpisodeConfig(Z=20, eps_c=flat(0.0), eps_t=flat(0.0))
    res = dqn.train(lambda: env.ModeSwitchEnv(cfg), DEGEN, seed=0)
    ev = dqn.evaluate(res.net, cfg, 1000, seed=1)
    assert ev.tele_share < 0.1
    assert ev.success > 0.95


@pytest.mark.slow
def test_failing_autonomy_learns_nothing_beats_zero():
    # every launch fails, and a full-teleop success pays (Z - Z)/Z * 100 = 0:
    # all policies return 0, so the learner can only be checked for that value
    cfg = env.EpisodeConfig(Z=20, eps_c=flat(0.0), eps_t=flat(1.0))
    res = dqn.train(lambda: env.ModeSwitchEnv(cfg), DEGEN, seed=0)
    ev = dqn.evaluate(res.net, cfg, 500, seed=1)
    assert ev.reward == 0.0
    probe = np.random.default_rng(0).random((64, 7))
    assert np.max(np.abs(res.net.forward(probe))) < 5.0
