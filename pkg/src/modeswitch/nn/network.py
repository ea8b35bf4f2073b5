from __future__ import annotations

import copy

import numpy as np

from .layers import Layer


class Network:
    """An ordered stack of layers."""

    def __init__(self, layers: list[Layer], input_dim: int | None = None):
        self.layers = list(layers)
        self.input_dim = input_dim
        if input_dim is not None:
            dim = input_dim
            for layer in self.layers:
                dim = layer.output_dim(dim)
            self.output_dim = dim

    def forward(self, x, mask=None):
        for layer in self.layers:
            x = layer.forward(x, mask)
        return x

    __call__ = forward

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self):
        """(key, array) pairs in a fixed order; keys look like "2.W"."""
        for idx, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield f"{idx}.{name}", layer.params[name]

    def gradients(self):
        for idx, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield f"{idx}.{name}", layer.grads[name]

    @property
    def n_params(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    def get_weights(self) -> list[np.ndarray]:
        return [p.copy() for _, p in self.parameters()]

    def set_weights(self, weights: list[np.ndarray]) -> None:
        params = list(self.parameters())
        if len(params) != len(weights):
            raise ValueError(f"expected {len(params)} arrays, got {len(weights)}")
        for (key, p), w in zip(params, weights):
            if p.shape != w.shape:
                raise ValueError(f"shape mismatch for {key}: {p.shape} vs {w.shape}")
            p[...] = w

    def copy_from(self, other: "Network") -> None:
        self.set_weights(other.get_weights())

    def clone(self) -> "Network":
        twin = copy.deepcopy(self)
        for layer in twin.layers:
            # drop cached activations
            for attr in [a for a in vars(layer) if a.startswith("_")]:
                delattr(layer, attr)
        return twin
