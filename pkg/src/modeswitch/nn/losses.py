import numpy as np

from .activations import softmax

LOG_EPS = 1e-12


def cross_entropy(probs, onehot):
    """Mean categorical cross-entropy. Probabilities are clamped at 1e-12."""
    probs = np.atleast_2d(probs)
    onehot = np.atleast_2d(onehot)
    return float(-np.mean(np.sum(onehot * np.log(np.clip(probs, LOG_EPS, 1.0)), axis=1)))


def softmax_cross_entropy(logits, labels):
    """Loss and d(loss)/d(logits) for integer labels, batch mean."""
    logits = np.atleast_2d(logits)
    labels = np.asarray(labels)
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -log_p[np.arange(n), labels].mean()
    grad = softmax(logits)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def mse(pred, target):
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def mse_grad(pred, target):
    return 2.0 * (pred - target) / pred.size
