"""Adam and a reduce-on-plateau learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int, **kw) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), **kw)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    b1, b2 = state.beta1, state.beta2
    t = state.step + 1
    m = b1 * state.m + (1.0 - b1) * grads
    v = b2 * state.v + (1.0 - b2) * grads * grads
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, AdamState(m, v, t, b1, b2, state.eps)


@dataclass
class ReduceOnPlateau:
    """Multiply the learning rate by ``factor`` once the monitored loss
    has failed to improve for more than ``patience`` consecutive epochs."""

    lr: float
    factor: float = 0.1
    patience: int = 5
    best: float = float("inf")
    bad_epochs: int = 0
    history: list = field(default_factory=list)

    def step(self, loss: float) -> float:
        if loss < self.best:
            self.best = loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs > self.patience:
                self.lr *= self.factor
                self.bad_epochs = 0
        self.history.append(self.lr)
        return self.lr
