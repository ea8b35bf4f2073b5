import numpy as np

LEAKY_SLOPE = 0.01


def relu(x):
    return np.maximum(x, 0.0)


def leaky_relu(x, slope=LEAKY_SLOPE):
    return np.where(x > 0, x, slope * x)


def tanh(x):
    return np.tanh(x)


def softmax(x, axis=-1):
    """Overflow-safe softmax; rows sum to 1."""
    x = np.asarray(x, dtype=float)
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


ACTIVATIONS = ("linear", "relu", "leaky_relu", "tanh")


def apply(name, x, slope=LEAKY_SLOPE):
    if name == "linear":
        return x
    if name == "relu":
        return relu(x)
    if name == "leaky_relu":
        return leaky_relu(x, slope)
    if name == "tanh":
        return np.tanh(x)
    raise ValueError(f"unknown activation {name!r}")


def grad(name, x, y, dy, slope=LEAKY_SLOPE):
    """dL/dx given pre-activation x, output y and upstream dy."""
    if name == "linear":
        return dy
    if name == "relu":
        return dy * (x > 0)
    if name == "leaky_relu":
        return dy * np.where(x > 0, 1.0, slope)
    if name == "tanh":
        return dy * (1.0 - y * y)
    raise ValueError(f"unknown activation {name!r}")
