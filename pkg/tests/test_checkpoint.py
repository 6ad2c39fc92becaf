"""Checkpoint container format."""

import struct

import numpy as np
import pytest

from semnav.autodiff.checkpoint import (CheckpointError, MAGIC, VERSION,
                                        load_arrays, save_arrays)


def test_round_trip(tmp_path):
    arrays = {
        "w": np.random.default_rng(0).normal(size=(3, 4)).astype(np.float32),
        "b": np.zeros(7, dtype=np.float32),
        "scalar": np.array(2.5, dtype=np.float32),
    }
    path = tmp_path / "c.ckpt"
    save_arrays(path, arrays)
    loaded = load_arrays(path)
    assert set(loaded) == set(arrays)
    for name in arrays:
        assert loaded[name].dtype == np.float32
        assert np.array_equal(loaded[name], arrays[name].astype(np.float32))


def test_float64_saved_as_32(tmp_path):
    path = tmp_path / "c.ckpt"
    save_arrays(path, {"x": np.array([1.0, 2.0], dtype=np.float64)})
    out = load_arrays(path)["x"]
    assert out.dtype == np.float32


def test_header_layout(tmp_path):
    path = tmp_path / "c.ckpt"
    save_arrays(path, {"x": np.ones(2, dtype=np.float32)})
    raw = path.read_bytes()
    assert raw[:4] == MAGIC
    version, count = struct.unpack("<II", raw[4:12])
    assert version == VERSION
    assert count == 1
    # little-endian payload: last 8 bytes are two float32 ones
    assert np.frombuffer(raw[-8:], dtype="<f4").tolist() == [1.0, 1.0]


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "c.ckpt"
    path.write_bytes(b"XXXX" + b"\x00" * 16)
    with pytest.raises(CheckpointError):
        load_arrays(path)


def test_truncated_rejected(tmp_path):
    path = tmp_path / "c.ckpt"
    save_arrays(path, {"x": np.ones(10, dtype=np.float32)})
    raw = path.read_bytes()
    path.write_bytes(raw[:-4])
    with pytest.raises(CheckpointError):
        load_arrays(path)
