"""Task-level prediction: a 1-D CNN over observation windows, plus a
calibrated stochastic oracle that mimics a classifier's error curve."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .nn import checkpoint
from .trajectories import CHANNELS, N_CHANNELS, Dataset, ObservationWindow, Trajectory, window

PROB_TOL = 1e-9


@dataclass(frozen=True)
class IntentionEstimate:
    probabilities: np.ndarray
    observation_fraction: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise ValueError("need a probability vector over at least two classes")
        if np.any(p < 0) or abs(p.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"not a probability vector: {p}")
        object.__setattr__(self, "probabilities", p)

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.probabilities))

    @property
    def n_classes(self) -> int:
        return self.probabilities.size

    @classmethod
    def uniform(cls, n_classes: int) -> "IntentionEstimate":
        return cls(np.full(n_classes, 1.0 / n_classes), 0.0)


class AccuracyCurve:
    """Piecewise-linear error-vs-observation-fraction curve, flat outside its knots.

    Used for both the task-level error and the trajectory error curve.
    """

    value_name = "error"

    def __init__(self, fractions, errors):
        f = np.asarray(fractions, dtype=float)
        e = np.asarray(errors, dtype=float)
        if f.ndim != 1 or f.shape != e.shape or f.size == 0:
            raise ValueError("fractions and errors must be equal-length, non-empty 1-D sequences")
        if np.any(np.diff(f) <= 0):
            raise ValueError("fractions must be strictly increasing")
        if f[0] < 0 or f[-1] > 1:
            raise ValueError("fractions must lie in [0, 1]")
        if np.any(e < 0) or np.any(e > 1):
            raise ValueError("error probabilities must lie in [0, 1]")
        self.fractions, self.errors = f, e

    def __call__(self, fraction):
        return np.interp(fraction, self.fractions, self.errors)

    def __eq__(self, other):
        return (type(self) is type(other) and np.array_equal(self.fractions, other.fractions)
                and np.array_equal(self.errors, other.errors))

    def __repr__(self):
        pairs = ", ".join(f"{f:g}:{e:g}" for f, e in zip(self.fractions, self.errors))
        return f"{type(self).__name__}({pairs})"

    @classmethod
    def constant(cls, value: float):
        return cls([0.0, 1.0], [value, value])

    def to_dict(self) -> dict:
        return {float(f): float(e) for f, e in zip(self.fractions, self.errors)}

    @classmethod
    def from_dict(cls, d: dict):
        items = sorted((float(k), float(v)) for k, v in d.items())
        return cls([k for k, _ in items], [v for _, v in items])

    def to_csv(self, path, comments: list[str] | None = None) -> None:
        with open(path, "w", newline="") as fh:
            for line in comments or []:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["fraction", self.value_name])
            for f, e in zip(self.fractions, self.errors):
                w.writerow([repr(float(f)), repr(float(e))])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
        header, body = rows[0], rows[1:]
        if header != ["fraction", cls.value_name]:
            raise ValueError(f"unexpected curve header {header}")
        return cls([float(r[0]) for r in body], [float(r[1]) for r in body])


# ----------------------------------------------------------------- oracle

def _confidence_shape(eps_c: float, n_classes: int) -> float:
    # Beta(a, 1) draw for the argmax's excess mass; its mean tracks the accuracy
    m = (1.0 - eps_c - 1.0 / n_classes) / (1.0 - 1.0 / n_classes)
    m = min(max(m, 0.02), 0.98)
    return m / (1.0 - m)


def oracle_probabilities(label: int, eps_c: float, latent: float, wrong_draw: float,
                         conf_draw: float, n_classes: int) -> np.ndarray:
    """Deterministic map from uniform draws to an intention vector.

    The estimate is correct iff ``latent >= eps_c``; otherwise the argmax is
    the wrong class picked by ``wrong_draw``.
    """
    if latent >= eps_c:
        top = label
    else:
        w = min(int(wrong_draw * (n_classes - 1)), n_classes - 2)
        top = w + 1 if w >= label else w
    # floor keeps the argmax strict, so it always equals ``top``
    x = max(conf_draw ** (1.0 / _confidence_shape(eps_c, n_classes)), 1e-6)
    peak = 1.0 / n_classes + (1.0 - 1.0 / n_classes) * x
    p = np.full(n_classes, (1.0 - peak) / (n_classes - 1))
    p[top] = peak
    p /= p.sum()
    return p


def oracle_predict(true_label: int, fraction: float, curve: AccuracyCurve,
                   rng: np.random.Generator, n_classes: int = 4) -> IntentionEstimate:
    eps_c = float(curve(fraction))
    u = rng.random(3)
    return IntentionEstimate(oracle_probabilities(true_label, eps_c, u[0], u[1], u[2], n_classes),
                             float(fraction))


# -------------------------------------------------------------- classifier

@dataclass
class ClassifierConfig:
    conv_layers: int = 2
    filters: int = 128
    widths: tuple = (5, 3)
    dense: tuple = (64,)
    leaky_slope: float = 0.01
    batch_size: int = 64
    patience: int = 10
    max_epochs: int = 100
    lr: float = 1e-3
    optimizer: str = "adam"
    min_fraction: float = 0.2
    val_fractions: tuple = (0.2, 0.4, 0.6, 0.8, 1.0)

    def __post_init__(self):
        if self.conv_layers < 1 or self.filters < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("classifier sizes must be positive")
        if len(self.widths) != self.conv_layers:
            raise ValueError("need one kernel width per conv layer")
        if not 0 < self.min_fraction <= 1:
            raise ValueError("min_fraction must lie in (0, 1]")


@dataclass
class Classifier:
    net: nn.Network
    mean: np.ndarray
    std: np.ndarray
    n_classes: int
    log: list = field(default_factory=list)  # (epoch, train loss, val accuracy)

    def _normalize(self, x):
        return (x - self.mean) / self.std

    def predict_proba(self, windows: list[np.ndarray]) -> np.ndarray:
        """Probabilities for a list of (length, 5) prefixes."""
        x, mask = pad_batch([self._normalize(w) for w in windows])
        return nn.softmax(self.net.forward(x, mask))

    def save(self, path):
        checkpoint.save(self.net, path, {"mean": self.mean.tolist(), "std": self.std.tolist(),
                                         "n_classes": self.n_classes, "channels": list(CHANNELS)})

    @classmethod
    def load(cls, path):
        net, meta = checkpoint.load(path)
        return cls(net, np.array(meta["mean"]), np.array(meta["std"]), int(meta["n_classes"]))


def pad_batch(seqs: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad variable-length (len, C) arrays to (B, max_len, C) plus a mask."""
    if not seqs:
        raise ValueError("empty batch")
    n = max(s.shape[0] for s in seqs)
    c = seqs[0].shape[1]
    x = np.zeros((len(seqs), n, c))
    mask = np.zeros((len(seqs), n))
    for i, s in enumerate(seqs):
        x[i, :s.shape[0]] = s
        mask[i, :s.shape[0]] = 1.0
    return x, mask


def channel_stats(trajs: list[Trajectory]) -> tuple[np.ndarray, np.ndarray]:
    allx = np.concatenate([t.samples for t in trajs])
    std = allx.std(axis=0)
    return allx.mean(axis=0), np.where(std > 0, std, 1.0)


def build_classifier_net(cfg: ClassifierConfig, n_classes: int, rng) -> nn.Network:
    layers = []
    c_in = N_CHANNELS
    for width in cfg.widths:
        layers.append(nn.Conv1D(c_in, cfg.filters, width, "leaky_relu", rng, cfg.leaky_slope))
        c_in = cfg.filters
    layers.append(nn.GlobalAvgPool())
    for width in cfg.dense:
        layers.append(nn.Dense(c_in, width, "leaky_relu", rng, cfg.leaky_slope))
        c_in = width
    layers.append(nn.Dense(c_in, n_classes, "linear", rng))
    return nn.Network(layers, N_CHANNELS)


def _accuracy(clf, trajs, fractions, batch=128):
    hits = total = 0
    for f in fractions:
        for s in range(0, len(trajs), batch):
            chunk = trajs[s:s + batch]
            probs = clf.predict_proba([window(t, f).samples for t in chunk])
            hits += int(np.sum(probs.argmax(axis=1) == [t.label for t in chunk]))
            total += len(chunk)
    return hits / total


def train_classifier(ds: Dataset, cfg: ClassifierConfig | None = None, seed: int = 0,
                     log_fn=None) -> Classifier:
    cfg = cfg or ClassifierConfig()
    if ds.n_classes < 2 or len(set(ds.labels[ds.train].tolist())) < 2:
        raise ValueError("training split needs at least two classes")
    rng = np.random.default_rng(seed)
    train, val = ds.split("train"), ds.split("val")
    mean, std = channel_stats(train)
    net = build_classifier_net(cfg, ds.n_classes, rng)
    clf = Classifier(net, mean, std, ds.n_classes)
    opt = nn.make_optimizer(cfg.optimizer, cfg.lr)
    stopper = nn.EarlyStopping(cfg.patience, mode="max")
    labels = np.array([t.label for t in train])
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(train))
        losses = []
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            frac = rng.uniform(cfg.min_fraction, 1.0)
            x, mask = pad_batch([clf._normalize(window(train[i], frac).samples) for i in idx])
            logits = net.forward(x, mask)
            loss, grad = nn.softmax_cross_entropy(logits, labels[idx])
            nn.optim.check_finite_loss(loss, f"classifier epoch {epoch}")
            net.backward(grad)
            opt.step(net)
            losses.append(loss)
        val_acc = _accuracy(clf, val, cfg.val_fractions) if val else 0.0
        clf.log.append((epoch, float(np.mean(losses)), val_acc))
        if log_fn:
            log_fn(epoch, float(np.mean(losses)), val_acc)
        if stopper.update(val_acc, net, epoch):
            break
    stopper.restore(net)
    return clf


def predict_intention(clf: Classifier, w: ObservationWindow) -> IntentionEstimate:
    samples = np.asarray(w.samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != N_CHANNELS:
        raise ValueError(f"window must have {N_CHANNELS} channels, got shape {samples.shape}")
    if samples.shape[0] < 1:
        raise ValueError("window is empty")
    p = clf.predict_proba([samples])[0]
    return IntentionEstimate(p / p.sum(), w.fraction)


def accuracy_curve(clf: Classifier, test: list[Trajectory], fractions) -> AccuracyCurve:
    if not test:
        raise ValueError("empty test split")
    fractions = sorted(float(f) for f in fractions)
    errors = [1.0 - _accuracy(clf, test, [f]) for f in fractions]
    return AccuracyCurve(fractions, errors)


def default_fraction_grid(step: float = 0.1) -> list[float]:
    n = int(round(1.0 / step))
    return [round((k + 1) * step, 10) for k in range(n)]

