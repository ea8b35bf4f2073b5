"""Sweeps and training drivers behind the command-line tool.

Monte Carlo points draw their tapes from seeds derived as
SeedSequence(seed, spawn_key=(point, batch)), so results do not depend on
the worker count or on which other points are in the grid.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import dqn, env, intent, trajpred
from .config import ExperimentConfig
from .trajectories import Dataset

SWEEP_HEADER = ["x", "pt_measured", "success", "success_se", "conventional", "conventional_se",
                "load", "conventional_load", "episodes", "analytic"]


@dataclass
class SweepRow:
    x: float  # the swept value: P^t target, decoding error or rho
    pt_measured: float
    success: float
    success_se: float
    conventional: float
    conventional_se: float
    load: float  # bits/slot
    conventional_load: float
    episodes: int
    analytic: float  # exact threshold-policy success, see env.threshold_success_exact

    def __post_init__(self):
        for name in ("success", "conventional"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.episodes > 1 and not (self.success_se > 0 or self.success in (0.0, 1.0)):
            raise ValueError("standard error must be positive")

    def as_list(self):
        return [repr(float(getattr(self, k))) if k != "episodes" else str(self.episodes)
                for k in SWEEP_HEADER]


def derived_seed(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))


def _mc_chunk(args):
    cfg, theta, seed, key, n = args
    tapes = env.make_tapes(np.random.default_rng(derived_seed(seed, *key)), n, cfg.Z)
    out = env.simulate_threshold(cfg, theta, tapes)
    base = env.simulate_threshold(cfg, 1.0, tapes)
    return out, base


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()), float("nan")
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def monte_carlo(cfg: env.EpisodeConfig, theta: float, episodes: int, seed: int, point: int = 0,
                batch: int = 5000, workers: int = 1) -> tuple[env.BatchOutcome, env.BatchOutcome]:
    """Threshold-policy rollouts plus the always-TELE baseline on the same tapes."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    jobs = []
    for b, start in enumerate(range(0, episodes, batch)):
        jobs.append((cfg, theta, seed, (point, b), min(batch, episodes - start)))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_mc_chunk, jobs))
    else:
        parts = [_mc_chunk(j) for j in jobs]
    return (env.BatchOutcome.concat([p[0] for p in parts]),
            env.BatchOutcome.concat([p[1] for p in parts]))


def _row(cfg, x, theta, episodes, seed, point, batch, workers) -> SweepRow:
    prop, conv = monte_carlo(cfg, theta, episodes, seed, point, batch, workers)
    s, se = _mean_se(prop.success)
    c, cse = _mean_se(conv.success)
    return SweepRow(float(x), float(prop.d.mean() / cfg.Z), s, se, c, cse,
                    float(np.mean(_loads(cfg, prop.d))),
                    float(np.mean(_loads(cfg, conv.d))), int(len(prop)),
                    env.threshold_success_exact(cfg, theta))


def _loads(cfg, d):
    # load depends on d only; evaluate once per distinct value
    vals, counts = np.unique(np.asarray(d), return_counts=True)
    return np.repeat([cfg.load(int(v)) for v in vals], counts)


def _sweep_args(exp, episodes, seed, workers):
    sw = exp["sweeps"]
    return (episodes or sw["episodes"], exp.seed if seed is None else seed,
            workers or exp.workers, sw["batch"])


def sweep_pt(exp: ExperimentConfig, cfg=None, episodes=None, seed=None, workers=None,
             key_offset: int = 0) -> list[SweepRow]:
    """Success and load vs the forced teleoperation share P^t."""
    n, seed, workers, batch = _sweep_args(exp, episodes, seed, workers)
    cfg = cfg or exp.episode_config()
    return [_row(cfg, pt, pt, n, seed, key_offset + i, batch, workers)
            for i, pt in enumerate(exp["sweeps"]["pt_grid"])]


def sweep_pt_rho(exp: ExperimentConfig, cfg=None, episodes=None, seed=None,
                 workers=None) -> list[tuple[float, SweepRow]]:
    """The P^t sweep repeated for every operator coefficient on the rho grid."""
    cfg = cfg or exp.episode_config()
    out = []
    for j, rho in enumerate(exp["sweeps"]["rho_grid"]):
        # keys offset past the main sweep so the two never share tapes
        rows = sweep_pt(exp, cfg.with_(rho=rho), episodes, seed, workers, 1000 * (j + 1))
        out += [(float(rho), r) for r in rows]
    return out


def sweep_loss(exp: ExperimentConfig, cfg=None, episodes=None, seed=None,
               workers=None) -> list[SweepRow]:
    """Conventional (P^t = 1) vs proposed (P^t = proposed_pt) over the packet-loss grid."""
    n, seed, workers, batch = _sweep_args(exp, episodes, seed, workers)
    cfg = cfg or exp.episode_config()
    pt = exp["sweeps"]["proposed_pt"]
    return [_row(cfg.with_(budget=exp.budget(decoding_error=loss)), loss, pt, n, seed, i, batch,
                 workers)
            for i, loss in enumerate(exp["sweeps"]["loss_grid"])]


def sweep_operator(exp: ExperimentConfig, cfg=None, episodes=None, seed=None,
                   workers=None) -> list[SweepRow]:
    n, seed, workers, batch = _sweep_args(exp, episodes, seed, workers)
    cfg = cfg or exp.episode_config()
    pt = exp["sweeps"]["proposed_pt"]
    return [_row(cfg.with_(rho=rho), rho, pt, n, seed, i, batch, workers)
            for i, rho in enumerate(exp["sweeps"]["rho_grid"])]


def write_rows(rows, path, header, comments: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(r.as_list() if hasattr(r, "as_list") else r)


def write_sweep(rows: list[SweepRow], path, comments: list[str], x_name: str = "x") -> None:
    write_rows(rows, path, [x_name] + SWEEP_HEADER[1:], comments)


def read_csv(path) -> tuple[list[str], list[list[str]], list[str]]:
    """(header, rows, comment lines without the leading '# ')."""
    comments, body = [], []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                comments.append(line[1:].strip())
            else:
                body.append(line)
    rows = list(csv.reader(body))
    return rows[0], rows[1:], comments


# ------------------------------------------------------------- training

def train_intent(exp: ExperimentConfig, ds: Dataset, seeds=None, log_fn=None):
    """Classifiers over several seeds. Returns (classifiers, per-seed accuracy rows, mean error curve)."""
    sec = exp["classifier"]
    seeds = list(sec["seeds"] if seeds is None else seeds)
    fr = sorted(float(f) for f in sec["eval_fractions"])
    cfg = exp.classifier_config()
    clfs, acc = [], []
    test = ds.split("test")
    for s in seeds:
        clf = intent.train_classifier(ds, cfg, seed=s, log_fn=log_fn)
        curve = intent.accuracy_curve(clf, test, fr)
        clfs.append(clf)
        acc.append(1.0 - curve.errors)
    acc = np.array(acc)
    mean_err = intent.AccuracyCurve(fr, np.clip(1.0 - acc.mean(axis=0), 0.0, 1.0))
    return clfs, acc, mean_err


def accuracy_rows(fractions, acc: np.ndarray, seeds) -> tuple[list[str], list[list[str]]]:
    header = ["fraction", "accuracy_mean"] + [f"accuracy_seed{s}" for s in seeds]
    rows = [[repr(float(f)), repr(float(acc[:, j].mean()))] + [repr(float(a)) for a in acc[:, j]]
            for j, f in enumerate(fractions)]
    return header, rows


def train_traj(exp: ExperimentConfig, ds: Dataset, seeds=None, kinds=None, fractions=None,
               log_fn=None):
    """Predictors per (kind, fraction, seed).

    Returns (predictors[kind][fraction] for the first seed, table rows,
    per-kind eps_t curves extended below the grid).
    """
    sec = exp["predictor"]
    seeds = list(sec["seeds"] if seeds is None else seeds)
    kinds = list(sec["kinds"] if kinds is None else kinds)
    fractions = sorted(float(f) for f in (sec["fractions"] if fractions is None else fractions))
    train, test = ds.split("train"), ds.split("test")
    theta = float(sec["theta_traj"])
    first, rows, curves = {}, [], {}
    for kind in kinds:
        pcfg = exp.predictor_config(kind)
        first[kind] = {}
        shares = []
        for f in fractions:
            tr_rr, te_rr, share = [], [], []
            for s in seeds:
                p = trajpred.train_predictor(ds, pcfg, f, seed=s, log_fn=log_fn)
                te = trajpred.evaluate_rrmse(p, test)
                tr_rr.append(float(trajpred.evaluate_rrmse(p, train).mean()))
                te_rr.append(float(te.mean()))
                share.append(float(np.mean(te > theta)))
                first[kind].setdefault(f, p)
            rows.append((f, float(np.mean(tr_rr)), float(np.mean(te_rr)), kind))
            shares.append(float(np.mean(share)))
        base = trajpred.TrajErrorCurve(fractions, shares, theta)
        curves[kind] = trajpred.extend_below_grid(base, float(sec["below_grid_error"]))
    return first, rows, curves


def train_dqn(exp: ExperimentConfig, cfg: env.EpisodeConfig | None = None, seed=None, log_fn=None):
    cfg = cfg or exp.episode_config()
    seed = exp.seed if seed is None else seed
    res = dqn.train(lambda: env.ModeSwitchEnv(cfg), exp.dqn_hyperparams(), seed=seed, log_fn=log_fn)
    return res


def threshold_rewards(cfg: env.EpisodeConfig, thetas, episodes: int, seed: int) -> dict:
    """Mean cumulative reward of each scripted threshold policy (shared tapes)."""
    tapes = env.make_tapes(np.random.default_rng(seed), episodes, cfg.Z)
    out = {}
    for th in thetas:
        o = env.simulate_threshold(cfg, th, tapes)
        bonus = np.where(o.success, (cfg.Z - o.d) / cfg.Z * 100.0, 0.0)
        out[float(th)] = float(np.mean(o.n_auto + bonus))
    return out
