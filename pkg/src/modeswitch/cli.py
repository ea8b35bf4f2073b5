"""``modeswitch`` command-line tool.

Every subcommand writes CSVs into ``--out`` whose first lines are
``# config_sha256: ...`` and ``# seed: ...``. Failures exit with status 1
and print a single JSON object on stderr: {"error": <kind>, "message": ...}.

CSV schemas
  gen-data        dataset.bin, dataset_summary.csv: split,label,count
  train-intent    intent_accuracy.csv: fraction,accuracy_mean,accuracy_seed<k>...
                  eps_c.csv: fraction,error ; intent_seed<k>.ckpt
  train-traj      rrmse_table.csv: fraction,train_rrmse,test_rrmse,kind
                  eps_t.csv and eps_t_<kind>.csv: fraction,epsilon_t ; traj_<kind>_<f>.ckpt
  train-dqn       dqn_curve.csv: step,moving_avg_success,mean_dZ,loss,epsilon
                  dqn_eval.csv: episodes,success,success_se,tele_share,load,reward,detections
                  dqn_policy.ckpt
  sweep-pt        sweep_pt.csv: pt,<sweep columns> ; sweep_pt_rho.csv: rho,pt,<sweep columns>
  sweep-loss      sweep_loss.csv: decoding_error,<sweep columns>
  sweep-operator  sweep_operator.csv: rho,<sweep columns>
  trace           trace.csv: slot,mode,action,reward,argmax_intention,cause,mode_after

<sweep columns> = pt_measured,success,success_se,conventional,conventional_se,
load,conventional_load,episodes,analytic. "conventional" is the always-teleoperate
policy on the same episodes.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import dqn, env, experiments, intent, trajectories, trajpred
from .config import ConfigError, load_config

MAX_TRACE_SCAN = 10_000


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


def _common(p):
    p.add_argument("--config", type=Path, help="YAML file overlaid on the defaults")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, help="output directory (default: out_dir from config)")
    p.add_argument("--episodes", type=int, help="Monte Carlo / evaluation episodes per point")
    p.add_argument("--workers", type=int)


def _curve_flags(p):
    p.add_argument("--eps-c", type=Path, help="eps_c CSV from train-intent (replaces config curve)")
    p.add_argument("--eps-t", type=Path, help="eps_t CSV from train-traj (replaces config curve)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="modeswitch", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    for name in ("gen-data", "train-intent", "train-traj", "train-dqn", "sweep-pt",
                 "sweep-loss", "sweep-operator", "trace"):
        p = sub.add_parser(name)
        _common(p)
        if name in ("train-intent", "train-traj"):
            p.add_argument("--data", type=Path, help="dataset file (default: <out>/dataset.bin)")
        if name in ("train-dqn", "sweep-pt", "sweep-loss", "sweep-operator", "trace"):
            _curve_flags(p)
        if name == "trace":
            p.add_argument("--policy", choices=("threshold", "dqn"), default="threshold")
            p.add_argument("--pt", type=float, help="threshold policy P^t (default sweeps.proposed_pt)")
            p.add_argument("--checkpoint", type=Path, help="DQN policy (default: <out>/dqn_policy.ckpt)")
            p.add_argument("--find-detection", action="store_true",
                           help="scan seeds upward from --seed for an episode with a detector revert")
    return ap


# ------------------------------------------------------------ helpers

def _setup(args):
    exp = load_config(args.config, seed=args.seed, workers=args.workers)
    if args.out is not None:
        exp = exp.with_overrides(out_dir=str(args.out))
    if args.episodes is not None and args.episodes < 1:
        raise CliError("bad-argument", "--episodes must be >= 1")
    out = exp.out_dir
    out.mkdir(parents=True, exist_ok=True)
    return exp, out


def _require(path: Path, what: str, hint: str) -> Path:
    if not path.is_file():
        raise CliError("missing-input", f"{what} not found: {path} ({hint})")
    return path


def _episode_config(exp, args, **kw):
    if getattr(args, "eps_c", None) is not None:
        kw["eps_c"] = intent.AccuracyCurve.from_csv(_require(args.eps_c, "eps_c curve", "run train-intent"))
    if getattr(args, "eps_t", None) is not None:
        c = trajpred.TrajErrorCurve.from_csv(_require(args.eps_t, "eps_t curve", "run train-traj"))
        c.theta = float(exp["predictor"]["theta_traj"])
        kw["eps_t"] = c
    return exp.episode_config(**kw)


def _dataset(args, out):
    path = args.data if args.data is not None else out / "dataset.bin"
    return trajectories.load_dataset(_require(path, "dataset", "run gen-data first"))


def _say(msg):
    print(msg, file=sys.stderr, flush=True)


# ----------------------------------------------------------- commands

def cmd_gen_data(args):
    exp, out = _setup(args)
    kw = exp.dataset_kwargs()
    if args.seed is not None:
        kw["seed"] = args.seed
    ds = trajectories.generate_dataset(**kw, workers=exp.workers)
    trajectories.save_dataset(ds, out / "dataset.bin")
    rows = []
    for split in ("train", "val", "test"):
        labels = np.array([t.label for t in ds.split(split)])
        rows += [[split, c, int(np.sum(labels == c))] for c in range(ds.n_classes)]
    experiments.write_rows(rows, out / "dataset_summary.csv", ["split", "label", "count"],
                           exp.csv_comments(kw["seed"]))
    _say(f"wrote {len(ds)} trajectories to {out / 'dataset.bin'}")


def cmd_train_intent(args):
    exp, out = _setup(args)
    ds = _dataset(args, out)
    seeds = [args.seed] if args.seed is not None else list(exp["classifier"]["seeds"])
    clfs, acc, curve = experiments.train_intent(exp, ds, seeds)
    fr = curve.fractions
    header, rows = experiments.accuracy_rows(fr, acc, seeds)
    experiments.write_rows(rows, out / "intent_accuracy.csv", header, exp.csv_comments())
    curve.to_csv(out / "eps_c.csv", exp.csv_comments())
    for s, clf in zip(seeds, clfs):
        clf.save(out / f"intent_seed{s}.ckpt")
    _say("accuracy by fraction: " + ", ".join(f"{f:g}:{a:.3f}" for f, a in zip(fr, acc.mean(axis=0))))


def cmd_train_traj(args):
    exp, out = _setup(args)
    ds = _dataset(args, out)
    seeds = [args.seed] if args.seed is not None else None
    preds, rows, curves = experiments.train_traj(exp, ds, seeds)
    trajpred.write_rrmse_table(rows, out / "rrmse_table.csv", exp.csv_comments())
    for kind, c in curves.items():
        c.to_csv(out / f"eps_t_{kind}.csv", exp.csv_comments())
        for f, p in preds[kind].items():
            p.save(out / f"traj_{kind}_{f:g}.ckpt")
    kind = exp["predictor"]["curve_kind"]
    if kind in curves:
        curves[kind].to_csv(out / "eps_t.csv", exp.csv_comments())
    for f, tr_, te, k in rows:
        _say(f"{k} f={f:g} train={tr_:.3f} test={te:.3f}")


def cmd_train_dqn(args):
    exp, out = _setup(args)
    cfg = _episode_config(exp, args)
    res = experiments.train_dqn(exp, cfg, log_fn=lambda step, ma, dz, loss, eps: _say(
        f"step {step} success {ma:.3f} dZ {dz:.3f} loss {loss:.4g} eps {eps:.3f}")
        if step % 10_000 == 0 else None)
    comments = exp.csv_comments()
    dqn.write_curve(res.curve, out / "dqn_curve.csv", comments)
    dqn.save_policy(res.net, out / "dqn_policy.ckpt", exp.dqn_hyperparams(), cfg.n_classes)
    n_eval = args.episodes or int(exp["dqn"]["eval_episodes"])
    ev = dqn.evaluate(res.net, cfg, n_eval, seed=exp.seed + 1)
    experiments.write_rows(
        [[ev.episodes, repr(ev.success), repr(ev.success_se), repr(ev.tele_share), repr(ev.load),
          repr(ev.reward), repr(ev.detections)]],
        out / "dqn_eval.csv",
        ["episodes", "success", "success_se", "tele_share", "load", "reward", "detections"],
        comments + [f"best_step: {res.best_step}"])
    for w in res.warnings:
        _say(f"warning: {w}")
    _say(f"greedy success {ev.success:.4f} +- {ev.success_se:.4f}, P^t {ev.tele_share:.3f}, "
         f"load {ev.load:.1f} bits/slot")


def cmd_sweep_pt(args):
    exp, out = _setup(args)
    cfg = _episode_config(exp, args)
    rows = experiments.sweep_pt(exp, cfg, args.episodes)
    experiments.write_sweep(rows, out / "sweep_pt.csv", exp.csv_comments(), "pt")
    rho_rows = [[repr(rho)] + r.as_list() for rho, r in experiments.sweep_pt_rho(exp, cfg, args.episodes)]
    experiments.write_rows(rho_rows, out / "sweep_pt_rho.csv",
                           ["rho", "pt"] + experiments.SWEEP_HEADER[1:], exp.csv_comments())
    best = max(rows, key=lambda r: r.success)
    _say(f"best P^t {best.x:g}: success {best.success:.4f}, load {best.load:.1f} bits/slot")


def _report(rows, xname):
    for r in rows:
        _say(f"{xname}={r.x:g}: proposed {r.success:.4f} conventional {r.conventional:.4f}")


def cmd_sweep_loss(args):
    exp, out = _setup(args)
    rows = experiments.sweep_loss(exp, _episode_config(exp, args), args.episodes)
    experiments.write_sweep(rows, out / "sweep_loss.csv", exp.csv_comments(), "decoding_error")
    _report(rows, "decoding_error")


def cmd_sweep_operator(args):
    exp, out = _setup(args)
    rows = experiments.sweep_operator(exp, _episode_config(exp, args), args.episodes)
    experiments.write_sweep(rows, out / "sweep_operator.csv", exp.csv_comments(), "rho")
    _report(rows, "rho")


def cmd_trace(args):
    exp, out = _setup(args)
    cfg = _episode_config(exp, args)
    if args.policy == "dqn":
        ck = args.checkpoint or out / "dqn_policy.ckpt"
        net, _ = dqn.load_policy(_require(ck, "DQN checkpoint", "run train-dqn"))
        policy = dqn.policy_fn(net, cfg.n_classes)
    else:
        pt = exp["sweeps"]["proposed_pt"] if args.pt is None else args.pt
        if not 0.0 <= pt <= 1.0:
            raise CliError("bad-argument", f"--pt must lie in [0, 1], got {pt}")
        policy = env.threshold_policy(pt)
    seed = exp.seed
    res = env.run_episode(cfg, policy, rng=seed, trace=True)
    if args.find_detection:
        for seed in range(exp.seed, exp.seed + MAX_TRACE_SCAN):
            res = env.run_episode(cfg, policy, rng=seed, trace=True)
            if res.n_detections > 0 and res.success and res.trace[-1][1] == "AUTO":
                break
        else:
            raise CliError("not-found", f"no episode with a detector revert in {MAX_TRACE_SCAN} seeds")
    comments = exp.csv_comments(seed) + [
        f"success: {int(res.success)}", f"tele_share: {res.tele_share!r}",
        f"load: {res.load!r}", f"detections: {res.n_detections}"]
    env.write_trace(res, out / "trace.csv", comments)
    _say(f"seed {seed}: success={res.success} d={res.d} detections={res.n_detections}")


COMMANDS = {
    "gen-data": cmd_gen_data, "train-intent": cmd_train_intent, "train-traj": cmd_train_traj,
    "train-dqn": cmd_train_dqn, "sweep-pt": cmd_sweep_pt, "sweep-loss": cmd_sweep_loss,
    "sweep-operator": cmd_sweep_operator, "trace": cmd_trace,
}


def _fail(kind, message) -> int:
    print(json.dumps({"error": kind, "message": " ".join(str(message).split())}), file=sys.stderr)
    return 1


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.cmd](args)
    except CliError as exc:
        return _fail(exc.kind, exc)
    except ConfigError as exc:
        return _fail("config", exc)
    except trajectories.DatasetFormatError as exc:
        return _fail("dataset-format", exc)
    except (ValueError, OSError) as exc:
        return _fail(type(exc).__name__, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
