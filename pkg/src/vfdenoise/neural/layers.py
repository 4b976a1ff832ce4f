"""Dense layers with explicit forward and backward passes.

All parameters of a network live in one flat float64 vector; each layer's
weights and bias are views into it.  Gradients are written into a flat
vector of the same layout, which keeps the optimizer a handful of
vector operations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RELU = "relu"
IDENTITY = "identity"


@dataclass
class Dense:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = RELU

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


def dense_forward(layer: Dense, x: np.ndarray):
    """Return ``(y, cache)`` for a batch ``x`` of shape (batch, in)."""
    if x.shape[-1] != layer.in_dim:
        raise ValueError(f"expected input width {layer.in_dim}, got {x.shape[-1]}")
    pre = x @ layer.weights.T + layer.bias
    y = np.maximum(pre, 0.0) if layer.activation == RELU else pre
    return y, (x, pre)


def dense_backward(layer: Dense, cache, grad_y: np.ndarray, grad_w: np.ndarray, grad_b: np.ndarray):
    """Accumulate parameter gradients into ``grad_w``/``grad_b``; return dL/dx."""
    x, pre = cache
    g = grad_y * (pre > 0.0) if layer.activation == RELU else grad_y
    grad_w += g.T @ x
    grad_b += g.sum(axis=0)
    return g @ layer.weights


class ParamSpace:
    """Flat parameter storage shared by a set of named layer stacks."""

    def __init__(self, spec: dict[str, list[tuple[int, int, str]]]):
        self.spec = {k: list(v) for k, v in spec.items()}
        sizes = [o * i + o for stack in self.spec.values() for (i, o, _) in stack]
        self.size = int(sum(sizes))
        self.flat = np.zeros(self.size)
        self.grad = np.zeros(self.size)
        self.stacks: dict[str, list[Dense]] = {}
        self.grad_views: dict[str, list[tuple[np.ndarray, np.ndarray]]] = {}
        pos = 0
        for name, stack in self.spec.items():
            layers, gviews = [], []
            for i, o, act in stack:
                w = self.flat[pos:pos + o * i].reshape(o, i)
                gw = self.grad[pos:pos + o * i].reshape(o, i)
                pos += o * i
                b = self.flat[pos:pos + o]
                gb = self.grad[pos:pos + o]
                pos += o
                layers.append(Dense(w, b, act))
                gviews.append((gw, gb))
            self.stacks[name] = layers
            self.grad_views[name] = gviews

    def layer_names(self):
        """(stack, position, layer) triples in storage order."""
        for name, layers in self.stacks.items():
            for j, layer in enumerate(layers):
                yield name, j, layer

    def init_glorot(self, rng: np.random.Generator) -> None:
        for _, _, layer in self.layer_names():
            lim = np.sqrt(6.0 / (layer.in_dim + layer.out_dim))
            layer.weights[...] = rng.uniform(-lim, lim, layer.weights.shape)
            layer.bias[...] = 0.0

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def copy(self) -> "ParamSpace":
        new = ParamSpace(self.spec)
        new.flat[...] = self.flat
        return new


def mlp_forward(layers: list[Dense], x: np.ndarray):
    caches = []
    for layer in layers:
        x, c = dense_forward(layer, x)
        caches.append(c)
    return x, caches


def mlp_backward(layers: list[Dense], grads, caches, grad_y: np.ndarray) -> np.ndarray:
    for layer, (gw, gb), c in zip(reversed(layers), reversed(grads), reversed(caches)):
        grad_y = dense_backward(layer, c, grad_y, gw, gb)
    return grad_y
