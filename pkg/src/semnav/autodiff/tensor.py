"""Dense array with reverse-mode gradients recorded on an explicit tape."""

from __future__ import annotations

import numpy as np


class NonFiniteError(FloatingPointError):
    """A forward or backward pass produced NaN or Inf."""


_CHECK_FINITE = True


def set_check_finite(flag: bool) -> None:
    """Toggle NaN/Inf screening of op outputs (on for tests, off for speed)."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(flag)


def check_finite_enabled() -> bool:
    return _CHECK_FINITE


class Array:
    """Row-major float array plus a same-shape gradient accumulator."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Array":
        """Same values, cut from any tape (no copy)."""
        return Array(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        # Additive accumulation: a value used k times receives k contributions.
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype)
        else:
            self.grad = self.grad + g

    def __repr__(self):
        return f"Array(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of executed ops; backward replays in exact reverse order."""

    _stack: list["Tape"] = []

    def __init__(self):
        self._records: list[tuple[Array, object]] = []

    def __enter__(self) -> "Tape":
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc):
        Tape._stack.pop()
        return False

    @classmethod
    def current(cls):
        return cls._stack[-1] if cls._stack else None

    def record(self, out: Array, backward_fn) -> None:
        self._records.append((out, backward_fn))

    def __len__(self):
        return len(self._records)

    def backward(self, loss: Array) -> None:
        if loss.size != 1:
            raise ValueError("backward() expects a scalar loss")
        loss.grad = np.ones_like(loss.data)
        for out, fn in reversed(self._records):
            if out.grad is None:
                continue
            fn(out.grad)
        if _CHECK_FINITE:
            for out, _ in self._records:
                if out.grad is not None and not np.all(np.isfinite(out.grad)):
                    raise NonFiniteError("non-finite gradient encountered in backward pass")


def as_array(x, dtype=None) -> Array:
    if isinstance(x, Array):
        return x
    return Array(x, dtype=dtype)


def make_output(data: np.ndarray, parents: tuple[Array, ...], backward_fn) -> Array:
    """Wrap an op result, registering it on the active tape when needed."""
    if _CHECK_FINITE and not np.all(np.isfinite(data)):
        raise NonFiniteError("non-finite value produced in forward pass")
    requires = any(p.requires_grad for p in parents)
    out = Array(data, requires_grad=requires)
    tape = Tape.current()
    if tape is not None and requires:
        tape.record(out, backward_fn)
    return out
