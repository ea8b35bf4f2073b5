from __future__ import annotations

import numpy as np


class TrainingDiverged(RuntimeError):
    """Raised when a loss or gradient becomes non-finite."""


def check_finite_loss(loss, where="training"):
    if not np.isfinite(loss):
        raise TrainingDiverged(f"{where}: non-finite loss {loss!r}")


def _check_grads(net):
    for key, g in net.gradients():
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise TrainingDiverged(f"non-finite gradient in parameter {key} ({bad} entries)")


class SGD:
    def __init__(self, lr=1e-3):
        if not lr > 0:
            raise ValueError("learning rate must be positive")
        self.lr = lr

    def step(self, net):
        _check_grads(net)
        for (_, p), (_, g) in zip(net.parameters(), net.gradients()):
            p -= self.lr * g


class Adam:
    """Adam with bias-corrected first and second moments."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if not lr > 0:
            raise ValueError("learning rate must be positive")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, net):
        _check_grads(net)
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for (key, p), (_, g) in zip(net.parameters(), net.gradients()):
            if key not in self.m:
                self.m[key] = np.zeros_like(p)
                self.v[key] = np.zeros_like(p)
            m, v = self.m[key], self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(name: str, lr: float):
    name = name.lower()
    if name == "adam":
        return Adam(lr)
    if name == "sgd":
        return SGD(lr)
    raise ValueError(f"unknown optimizer {name!r}")


class EarlyStopping:
    """Tracks the best metric and its weights; stops after ``patience`` stale epochs."""

    def __init__(self, patience=10, mode="max", min_delta=0.0):
        if mode not in ("max", "min"):
            raise ValueError("mode must be 'max' or 'min'")
        self.patience, self.mode, self.min_delta = patience, mode, min_delta
        self.best = None
        self.best_epoch = -1
        self.best_weights = None
        self.stale = 0

    def _improved(self, value):
        if self.best is None:
            return True
        if self.mode == "max":
            return value > self.best + self.min_delta
        return value < self.best - self.min_delta

    def update(self, value, net, epoch) -> bool:
        """Record an epoch; returns True when training should stop."""
        if self._improved(value):
            self.best, self.best_epoch = value, epoch
            self.best_weights = net.get_weights()
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience

    def restore(self, net):
        if self.best_weights is not None:
            net.set_weights(self.best_weights)
