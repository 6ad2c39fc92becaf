"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Array, Tape


def grad_check(f, inputs: list[Array], eps: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    f must be scalar-valued and the inputs 64-bit. Relative error per
    coordinate is |a - n| / max(1, |a|, |n|).
    """
    for inp in inputs:
        if inp.dtype != np.float64:
            raise ValueError("grad_check requires float64 inputs")
        inp.requires_grad = True
        inp.zero_grad()

    with Tape() as tape:
        out = f(*inputs)
        if out.size != 1:
            raise ValueError("grad_check requires a scalar-valued function")
        tape.backward(out)

    worst = 0.0
    for inp in inputs:
        analytic = inp.grad if inp.grad is not None else np.zeros_like(inp.data)
        flat = inp.data.reshape(-1)
        aflat = np.asarray(analytic).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f(*inputs).data)
            flat[i] = orig - eps
            lo = float(f(*inputs).data)
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * eps)
            err = abs(aflat[i] - numeric) / max(1.0, abs(aflat[i]), abs(numeric))
            worst = max(worst, err)
    return worst
