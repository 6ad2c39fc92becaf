"""Versioned binary container of named parameter arrays.

Layout (little-endian): magic "SNVC", u32 format version, u32 entry count,
then per entry a u16 name length, utf-8 name, u8 ndim, u32 extents and the
row-major float32 payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SNVC"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_arrays(path, named: dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(named)))
        for name, arr in named.items():
            # note: ascontiguousarray would promote 0-dim arrays to 1-dim
            data = np.asarray(arr, dtype="<f4")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def _read(fh, n: int, path) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise CheckpointError(f"{path}: truncated checkpoint")
    return raw


def load_arrays(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError(f"{path}: bad magic, not a semnav checkpoint")
        version, count = struct.unpack("<II", _read(fh, 8, path))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", _read(fh, 2, path))
            name = _read(fh, nlen, path).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read(fh, 1, path))
            shape = struct.unpack(f"<{ndim}I", _read(fh, 4 * ndim, path))
            n = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(_read(fh, 4 * n, path), dtype="<f4")
            out[name] = data.reshape(shape).copy()
    return out
