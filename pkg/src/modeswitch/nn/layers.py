"""Layers with explicit forward/backward passes.

Sequence tensors are (batch, time, channels). Variable-length batches are
right-padded and carry a (batch, time) 0/1 mask; sequence layers zero their
padded outputs so "same" padding behaves per sequence.
"""
from __future__ import annotations

import numpy as np

from .. import kernels
from . import activations as act


def he_uniform(rng, fan_in, shape):
    lim = np.sqrt(6.0 / fan_in)
    return rng.uniform(-lim, lim, size=shape)


def xavier_uniform(rng, fan_in, fan_out, shape):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


def _init_weights(rng, activation, fan_in, fan_out, shape):
    if activation in ("relu", "leaky_relu"):
        return he_uniform(rng, fan_in, shape)
    return xavier_uniform(rng, fan_in, fan_out, shape)


class Layer:
    """Base class. Subclasses fill ``params`` and, after backward, ``grads``."""

    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x, mask=None):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def config(self) -> dict:
        return {}

    def output_dim(self, input_dim):
        return input_dim

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in, n_out, activation="linear", rng=None, leaky_slope=act.LEAKY_SLOPE):
        super().__init__()
        if activation not in act.ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = np.random.default_rng() if rng is None else rng
        self.n_in, self.n_out = int(n_in), int(n_out)
        self.activation = activation
        self.leaky_slope = leaky_slope
        self.params["W"] = _init_weights(rng, activation, n_in, n_out, (n_out, n_in))
        self.params["b"] = np.zeros(n_out)

    def config(self):
        return {"n_in": self.n_in, "n_out": self.n_out, "activation": self.activation,
                "leaky_slope": self.leaky_slope}

    def output_dim(self, input_dim):
        if input_dim != self.n_in:
            raise ValueError(f"dense layer expects {self.n_in} inputs, got {input_dim}")
        return self.n_out

    def forward(self, x, mask=None):
        if x.shape[-1] != self.n_in:
            raise ValueError(f"dense layer expects {self.n_in} inputs, got {x.shape[-1]}")
        self._x = x
        self._z = x @ self.params["W"].T + self.params["b"]
        self._y = act.apply(self.activation, self._z, self.leaky_slope)
        return self._y

    def backward(self, dy):
        dz = act.grad(self.activation, self._z, self._y, dy, self.leaky_slope)
        self.grads["W"] = dz.T @ self._x
        self.grads["b"] = dz.sum(axis=0)
        return dz @ self.params["W"]


class Conv1D(Layer):
    """Stride-1 convolution over time with "same" zero padding."""

    kind = "conv1d"

    def __init__(self, in_channels, filters, width, activation="leaky_relu", rng=None,
                 leaky_slope=act.LEAKY_SLOPE):
        super().__init__()
        if width < 1:
            raise ValueError("kernel width must be >= 1")
        if activation not in act.ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = np.random.default_rng() if rng is None else rng
        self.in_channels, self.filters, self.width = int(in_channels), int(filters), int(width)
        self.activation = activation
        self.leaky_slope = leaky_slope
        fan_in = in_channels * width
        self.params["W"] = _init_weights(rng, activation, fan_in, filters * width,
                                         (filters, in_channels, width))
        self.params["b"] = np.zeros(filters)

    @property
    def _left(self):
        return (self.width - 1) // 2

    def config(self):
        return {"in_channels": self.in_channels, "filters": self.filters, "width": self.width,
                "activation": self.activation, "leaky_slope": self.leaky_slope}

    def output_dim(self, input_dim):
        if input_dim != self.in_channels:
            raise ValueError(f"conv layer expects {self.in_channels} channels, got {input_dim}")
        return self.filters

    def forward(self, x, mask=None):
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ValueError(f"conv layer expects (batch, time, {self.in_channels}), got {x.shape}")
        b, t, c = x.shape
        left = self._left
        x_pad = np.zeros((b, t + self.width - 1, c))
        x_pad[:, left:left + t] = x
        cols = kernels.im2col(x_pad, self.width)
        wm = self.params["W"].reshape(self.filters, -1)
        z = cols.reshape(b * t, -1) @ wm.T
        z = z.reshape(b, t, self.filters) + self.params["b"]
        y = act.apply(self.activation, z, self.leaky_slope)
        if mask is not None:
            y = y * mask[:, :, None]
        self._cols, self._z, self._y, self._mask = cols, z, y, mask
        return y

    def backward(self, dy):
        if self._mask is not None:
            dy = dy * self._mask[:, :, None]
        dz = act.grad(self.activation, self._z, self._y, dy, self.leaky_slope)
        b, t, f = dz.shape
        dz2 = dz.reshape(b * t, f)
        cols2 = self._cols.reshape(b * t, -1)
        self.grads["W"] = (dz2.T @ cols2).reshape(self.params["W"].shape)
        self.grads["b"] = dz2.sum(axis=0)
        dcols = (dz2 @ self.params["W"].reshape(f, -1)).reshape(b, t, -1)
        dx_pad = kernels.col2im(dcols, self.width, self.in_channels)
        return dx_pad[:, self._left:self._left + t]


class GlobalAvgPool(Layer):
    """Mean over valid time steps: (batch, time, ch) -> (batch, ch)."""

    kind = "global_avg_pool"

    def forward(self, x, mask=None):
        if x.shape[1] == 0:
            raise ValueError("cannot pool an empty sequence")
        if mask is None:
            mask = np.ones(x.shape[:2])
        lengths = mask.sum(axis=1)
        if np.any(lengths == 0):
            raise ValueError("cannot pool a sequence with no valid steps")
        self._mask, self._lengths = mask, lengths
        return (x * mask[:, :, None]).sum(axis=1) / lengths[:, None]

    def backward(self, dy):
        return dy[:, None, :] * self._mask[:, :, None] / self._lengths[:, None, None]


class LastStepPool(Layer):
    """Features at each sequence's last valid step: (batch, time, ch) -> (batch, ch)."""

    kind = "last_step_pool"

    def forward(self, x, mask=None):
        if x.shape[1] == 0:
            raise ValueError("cannot pool an empty sequence")
        if mask is None:
            mask = np.ones(x.shape[:2])
        lengths = mask.sum(axis=1).astype(np.int64)
        if np.any(lengths == 0):
            raise ValueError("cannot pool a sequence with no valid steps")
        self._shape, self._last = x.shape, lengths - 1
        return x[np.arange(x.shape[0]), self._last]

    def backward(self, dy):
        dx = np.zeros(self._shape)
        dx[np.arange(self._shape[0]), self._last] = dy
        return dx


class LSTM(Layer):
    """Single LSTM layer returning the hidden state at each sequence's last valid step.

    Gate order in the stacked weights is (input, forget, cell, output).
    """

    kind = "lstm"

    def __init__(self, input_size, hidden_size=128, rng=None, forget_bias=1.0):
        super().__init__()
        rng = np.random.default_rng() if rng is None else rng
        self.input_size, self.hidden_size = int(input_size), int(hidden_size)
        self.forget_bias = float(forget_bias)
        h = self.hidden_size
        self.params["Wx"] = xavier_uniform(rng, input_size, h, (input_size, 4 * h))
        self.params["Wh"] = xavier_uniform(rng, h, h, (h, 4 * h))
        b = np.zeros(4 * h)
        b[h:2 * h] = forget_bias
        self.params["b"] = b

    def config(self):
        return {"input_size": self.input_size, "hidden_size": self.hidden_size,
                "forget_bias": self.forget_bias}

    def output_dim(self, input_dim):
        if input_dim != self.input_size:
            raise ValueError(f"lstm expects {self.input_size} inputs, got {input_dim}")
        return self.hidden_size

    def forward(self, x, mask=None):
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise ValueError(f"lstm expects (batch, time, {self.input_size}), got {x.shape}")
        b, t, _ = x.shape
        hs = self.hidden_size
        wh = self.params["Wh"]
        xw = (x.reshape(b * t, -1) @ self.params["Wx"]).reshape(b, t, 4 * hs) + self.params["b"]
        h = np.zeros((b, hs))
        c = np.zeros((b, hs))
        cache = []
        for k in range(t):
            z = xw[:, k] + h @ wh
            i, f, g, o, c_new, tc, h_new = kernels.lstm_cell_forward(z, c)
            if mask is not None:
                m = mask[:, k, None]
                cache.append((i, f, g, o, c, tc, h, m))
                h = m * h_new + (1.0 - m) * h
                c = m * c_new + (1.0 - m) * c
            else:
                cache.append((i, f, g, o, c, tc, h, None))
                h, c = h_new, c_new
        self._x, self._cache = x, cache
        return h

    def backward(self, dy):
        x = self._x
        b, t, n_in = x.shape
        hs = self.hidden_size
        wh = self.params["Wh"]
        dxw = np.empty((b, t, 4 * hs))
        dwh = np.zeros_like(wh)
        dh = dy
        dc = np.zeros((b, hs))
        for k in range(t - 1, -1, -1):
            i, f, g, o, c_prev, tc, h_prev, m = self._cache[k]
            if m is not None:
                dz, dc_prev = kernels.lstm_cell_backward(dh * m, dc * m, i, f, g, o, c_prev, tc)
                dh_carry = dh * (1.0 - m)
                dc = dc * (1.0 - m) + dc_prev
            else:
                dz, dc = kernels.lstm_cell_backward(dh, dc, i, f, g, o, c_prev, tc)
                dh_carry = 0.0
            dxw[:, k] = dz
            dwh += h_prev.T @ dz
            dh = dh_carry + dz @ wh.T
        dxw2 = dxw.reshape(b * t, 4 * hs)
        self.grads["Wx"] = x.reshape(b * t, n_in).T @ dxw2
        self.grads["Wh"] = dwh
        self.grads["b"] = dxw2.sum(axis=0)
        return (dxw2 @ self.params["Wx"].T).reshape(b, t, n_in)


LAYER_TYPES = {cls.kind: cls for cls in (Dense, Conv1D, GlobalAvgPool, LastStepPool, LSTM)}
