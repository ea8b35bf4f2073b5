"""Trajectory-level prediction: regress the remaining motion from the
observed prefix and the task label.

Each predictor is tied to one observation fraction. It reads the prefix
(z-scored, subsampled by ``input_stride``) with the one-hot label and a
prefix-length feature appended to every step, and emits the suffix at
``knots`` evenly spaced points as a displacement from the last observed
sample (in z-score units); the output is de-normalised, re-anchored and
linearly interpolated to the true suffix length.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .intent import AccuracyCurve, channel_stats, pad_batch
from .nn import checkpoint
from .trajectories import MEAN_LENGTH, N_CHANNELS, Dataset, ObservationWindow, Trajectory, window

KINDS = ("lstm", "cnn")
DEFAULT_GRID = (0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass
class PredictorConfig:
    kind: str = "lstm"
    layers: int = 1
    cells: int = 128
    batch_size: int = 128
    optimizer: str = "adam"
    lr: float = 5e-3
    max_epochs: int = 1000
    patience: int = 20
    knots: int = 32
    input_stride: int = 32
    cnn_width: int = 5
    cnn_pool: str = "avg"  # "avg" over the prefix or "last" valid step

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown predictor kind {self.kind!r}")
        if self.cnn_pool not in ("avg", "last"):
            raise ValueError(f"unknown cnn_pool {self.cnn_pool!r}")
        if self.layers != 1:
            raise ValueError("only single-layer predictors are supported")
        if min(self.cells, self.batch_size, self.max_epochs, self.patience, self.knots,
               self.input_stride) < 1:
            raise ValueError("predictor sizes must be positive")

    @property
    def activation(self) -> str:
        return "tanh" if self.kind == "lstm" else "relu"


class TrajErrorCurve(AccuracyCurve):
    """Failure probability of trajectory prediction vs switch fraction."""

    value_name = "epsilon_t"

    def __init__(self, fractions, errors, theta: float | None = None):
        super().__init__(fractions, errors)
        self.theta = theta


@dataclass
class Predictor:
    net: nn.Network
    cfg: PredictorConfig
    fraction: float
    mean: np.ndarray
    std: np.ndarray
    n_classes: int
    log: list = field(default_factory=list)  # (epoch, train mse, val rrmse)

    def _inputs(self, prefixes, labels):
        seqs = []
        for w, label in zip(prefixes, labels):
            z = (w - self.mean) / self.std
            # keep the last observed sample; stride backwards from it
            z = z[::-1][::self.cfg.input_stride][::-1]
            extra = np.zeros((z.shape[0], self.n_classes + 1))
            extra[:, label] = 1.0
            extra[:, -1] = w.shape[0] / MEAN_LENGTH
            seqs.append(np.hstack([z, extra]))
        return pad_batch(seqs)

    def predict_knots(self, prefixes, labels) -> np.ndarray:
        x, mask = self._inputs(prefixes, labels)
        return self.net.forward(x, mask).reshape(len(prefixes), self.cfg.knots, N_CHANNELS)

    def predict(self, prefixes, labels, suffix_lengths) -> list[np.ndarray]:
        out = []
        for k, w, n in zip(self.predict_knots(prefixes, labels), prefixes, suffix_lengths):
            out.append(knots_to_suffix(k, n) * self.std + w[-1])
        return out

    def save(self, path):
        meta = {"kind": self.cfg.kind, "fraction": self.fraction, "mean": self.mean.tolist(),
                "std": self.std.tolist(), "n_classes": self.n_classes,
                "config": {k: getattr(self.cfg, k) for k in self.cfg.__dataclass_fields__}}
        checkpoint.save(self.net, path, meta)

    @classmethod
    def load(cls, path):
        net, meta = checkpoint.load(path)
        return cls(net, PredictorConfig(**meta["config"]), float(meta["fraction"]),
                   np.array(meta["mean"]), np.array(meta["std"]), int(meta["n_classes"]))


def suffix_to_knots(suffix: np.ndarray, knots: int) -> np.ndarray:
    n = suffix.shape[0]
    pos = np.linspace(0.0, n - 1, knots)
    idx = np.arange(n)
    return np.column_stack([np.interp(pos, idx, suffix[:, c]) for c in range(suffix.shape[1])])


def knots_to_suffix(k: np.ndarray, n: int) -> np.ndarray:
    pos = np.linspace(0.0, n - 1, k.shape[0])
    idx = np.arange(n)
    return np.column_stack([np.interp(idx, pos, k[:, c]) for c in range(k.shape[1])])


def build_predictor_net(cfg: PredictorConfig, n_in: int, rng) -> nn.Network:
    n_out = cfg.knots * N_CHANNELS
    if cfg.kind == "lstm":
        layers = [nn.LSTM(n_in, cfg.cells, rng), nn.Dense(cfg.cells, n_out, "linear", rng)]
    else:
        pool = nn.GlobalAvgPool() if cfg.cnn_pool == "avg" else nn.LastStepPool()
        layers = [nn.Conv1D(n_in, cfg.cells, cfg.cnn_width, "relu", rng), pool,
                  nn.Dense(cfg.cells, n_out, "linear", rng)]
    return nn.Network(layers, n_in)


def rrmse(predicted, truth) -> float:
    """100 * RMS(error) / RMS(truth), pooled over samples and channels."""
    p = np.asarray(predicted, dtype=float)
    y = np.asarray(truth, dtype=float)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {y.shape}")
    denom = np.sqrt(np.mean(y * y)) if y.size else 0.0
    if denom == 0.0:
        raise ValueError("rrmse undefined for an all-zero truth")
    return float(100.0 * np.sqrt(np.mean((p - y) ** 2)) / denom)


def _windows(trajs, fraction):
    ws = [window(t, fraction) for t in trajs]
    for t, w in zip(trajs, ws):
        if w.suffix.shape[0] < 1:
            raise ValueError(f"fraction {fraction} leaves no suffix on a length-{t.length} trajectory")
    return ws


def _rrmse_all(pred, ws) -> np.ndarray:
    outs = pred.predict([w.samples for w in ws], [w.label for w in ws],
                        [w.suffix.shape[0] for w in ws])
    return np.array([rrmse(o, w.suffix) for o, w in zip(outs, ws)])


def train_predictor(ds: Dataset, cfg: PredictorConfig | None = None, fraction: float = 0.5,
                    seed: int = 0, log_fn=None) -> Predictor:
    cfg = cfg or PredictorConfig()
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train, val = ds.split("train"), ds.split("val")
    mean, std = channel_stats(train)
    net = build_predictor_net(cfg, N_CHANNELS + ds.n_classes + 1, rng)
    pred = Predictor(net, cfg, float(fraction), mean, std, ds.n_classes)
    tw = _windows(train, fraction)
    vw = _windows(val, fraction) if val else []
    x_all, mask_all = pred._inputs([w.samples for w in tw], [w.label for w in tw])
    y_all = np.stack([suffix_to_knots((w.suffix - w.samples[-1]) / std, cfg.knots).ravel()
                      for w in tw])
    opt = nn.make_optimizer(cfg.optimizer, cfg.lr)
    stopper = nn.EarlyStopping(cfg.patience, mode="min")
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(tw))
        losses = []
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            # trim padding to this batch's longest window
            t_max = int(mask_all[idx].sum(axis=1).max())
            out = net.forward(x_all[idx, :t_max], mask_all[idx, :t_max])
            loss = nn.mse(out, y_all[idx])
            nn.optim.check_finite_loss(loss, f"{cfg.kind} predictor epoch {epoch}")
            net.backward(nn.mse_grad(out, y_all[idx]))
            opt.step(net)
            losses.append(loss)
        score = float(np.mean(_rrmse_all(pred, vw))) if vw else float(np.mean(losses))
        pred.log.append((epoch, float(np.mean(losses)), score))
        if log_fn:
            log_fn(epoch, float(np.mean(losses)), score)
        if stopper.update(score, net, epoch):
            break
    stopper.restore(net)
    return pred


def predict_remaining(p: Predictor, w: ObservationWindow, label: int | None = None) -> np.ndarray:
    if w.samples.shape[0] < 1:
        raise ValueError("observation window is empty")
    n = w.total_length - w.samples.shape[0]
    if n < 1:
        raise ValueError("nothing left to predict: the window covers the whole trajectory")
    label = w.label if label is None else label
    return p.predict([w.samples], [label], [n])[0]


def evaluate_rrmse(p: Predictor, trajs: list[Trajectory]) -> np.ndarray:
    """Per-trajectory RRMSE (%) at the predictor's own fraction."""
    if not trajs:
        raise ValueError("empty split")
    return _rrmse_all(p, _windows(trajs, p.fraction))


def traj_error_curve(predictors: dict, test: list[Trajectory], theta: float = 10.0) -> TrajErrorCurve:
    """eps_t(f) = share of test suffixes whose RRMSE exceeds theta (percent)."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    if not test:
        raise ValueError("empty test split")
    fr = sorted(predictors)
    eps = [float(np.mean(evaluate_rrmse(predictors[f], test) > theta)) for f in fr]
    return TrajErrorCurve(fr, eps, theta)


def curve_from_rrmse(rr: dict, theta: float) -> TrajErrorCurve:
    """Same rule as traj_error_curve, on precomputed per-trajectory RRMSE arrays."""
    fr = sorted(rr)
    return TrajErrorCurve(fr, [float(np.mean(np.asarray(rr[f]) > theta)) for f in fr], theta)


def extend_below_grid(curve: AccuracyCurve, floor_error: float = 0.99, gap: float = 0.05) -> TrajErrorCurve:
    """Prepend a flat high-error region for switch fractions below the predictor grid."""
    lo = curve.fractions[0]
    f = [0.0, max(lo - gap, 0.0)] if lo - gap > 0 else [0.0]
    e = [floor_error] * len(f)
    return TrajErrorCurve(f + list(curve.fractions), e + list(curve.errors),
                          getattr(curve, "theta", None))


TABLE_HEADER = ["fraction", "train_rrmse", "test_rrmse", "kind"]


def write_rrmse_table(rows, path, comments: list[str] | None = None) -> None:
    """rows: (fraction, train_rrmse, test_rrmse, kind) tuples."""
    with open(path, "w", newline="") as fh:
        for line in comments or []:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(TABLE_HEADER)
        for f, tr_, te, kind in rows:
            w.writerow([repr(float(f)), repr(float(tr_)), repr(float(te)), kind])
