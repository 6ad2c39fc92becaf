"""Parameter update rules."""

from __future__ import annotations

import numpy as np

from .tensor import Array, NonFiniteError


def _grad_of(name: str, p: Array) -> np.ndarray | None:
    if p.grad is None:
        return None
    if not np.all(np.isfinite(p.grad)):
        raise NonFiniteError(f"non-finite gradient for parameter '{name}'")
    return p.grad


class SGD:
    def __init__(self, params: dict[str, Array], lr: float, momentum: float = 0.0):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self._velocity = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        for name, p in self.params.items():
            g = _grad_of(name, p)
            if g is None:
                continue
            v = self._velocity[name]
            v *= self.momentum
            v -= self.lr * g
            p.data = p.data + v

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


class Adam:
    def __init__(self, params: dict[str, Array], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self._t = {k: 0 for k in params}

    def step(self) -> None:
        for name, p in self.params.items():
            g = _grad_of(name, p)
            if g is None:
                continue
            self._t[name] += 1
            t = self._t[name]
            m = self._m[name] = self.beta1 * self._m[name] + (1 - self.beta1) * g
            v = self._v[name] = self.beta2 * self._v[name] + (1 - self.beta2) * g * g
            mhat = m / (1 - self.beta1 ** t)
            vhat = v / (1 - self.beta2 ** t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
