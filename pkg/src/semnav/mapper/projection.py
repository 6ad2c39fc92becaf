"""Ground projection: unproject depth pixels to the camera-frame floor plane
and pool per-pixel values into the egocentric grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff.tensor import Array, as_array, make_output


@dataclass
class ModalityGrid:
    grid: np.ndarray      # (u', v', k)
    observed: np.ndarray  # (u', v') bool


def floor_bin(x, z, u_prime: int, v_prime: int, x_b: float, z_b: float):
    """Grid coordinates of camera-frame floor points:
    x_g = floor(x / x_b) + (u'-1)/2, z_g = floor(z / z_b) + (v'-1)/2."""
    if x_b <= 0 or z_b <= 0:
        raise ValueError("bin sizes must be positive")
    xg = np.floor(np.asarray(x, dtype=np.float64) / x_b).astype(np.int64) \
        + (u_prime - 1) // 2
    zg = np.floor(np.asarray(z, dtype=np.float64) / z_b).astype(np.int64) \
        + (v_prime - 1) // 2
    return xg, zg


def bin_cells(depth: np.ndarray, cols: np.ndarray, fx: float, cx: float,
              sentinel: float, u_prime: int, v_prime: int,
              x_b: float, z_b: float):
    """Grid coordinates for unprojected pixels.

    Points bin via x_g = floor(x / x_b) + (u'-1)/2 (likewise z); out-of-grid
    and max-range pixels are dropped. Returns (flat cell index, valid mask).
    """
    z = depth
    x = (cols - cx) / fx * z
    xg, zg = floor_bin(x, z, u_prime, v_prime, x_b, z_b)
    valid = (z > 0) & (z < sentinel) & \
        (xg >= 0) & (xg < u_prime) & (zg >= 0) & (zg < v_prime)
    return xg * v_prime + zg, valid


def unproject_and_bin(depth: np.ndarray, values: np.ndarray, fx: float, cx: float,
                      sentinel: float, u_prime: int, v_prime: int,
                      x_b: float, z_b: float, pooling: str,
                      n_labels: int | None = None) -> ModalityGrid:
    """Pool per-pixel values into the egocentric grid.

    pooling: 'max' or 'mean' for (h, w, k) value images, 'distribution' for
    (h, w) integer label images (per-cell normalized histogram).
    """
    h, w = depth.shape
    cols = np.broadcast_to(np.arange(w, dtype=np.float64), (h, w))
    flat, valid = bin_cells(depth, cols, fx, cx, sentinel, u_prime, v_prime, x_b, z_b)
    flat, n_cells = flat[valid], u_prime * v_prime
    counts = np.bincount(flat, minlength=n_cells)
    observed = (counts > 0).reshape(u_prime, v_prime)

    if pooling == "distribution":
        if n_labels is None:
            raise ValueError("distribution pooling needs n_labels")
        labels = values[valid].astype(np.int64)
        hist = np.bincount(flat * n_labels + labels,
                           minlength=n_cells * n_labels).astype(np.float64)
        hist = hist.reshape(n_cells, n_labels)
        denom = np.maximum(counts, 1)[:, None]
        grid = (hist / denom).reshape(u_prime, v_prime, n_labels)
    elif pooling in ("max", "mean"):
        vals = values[valid]  # (P, k)
        k = vals.shape[1]
        if pooling == "max":
            grid = np.full((n_cells, k), -np.inf)
            np.maximum.at(grid, flat, vals)
            grid[counts == 0] = 0.0
        else:
            grid = np.zeros((n_cells, k))
            np.add.at(grid, flat, vals)
            grid /= np.maximum(counts, 1)[:, None]
        grid = grid.reshape(u_prime, v_prime, k)
    else:
        raise ValueError(f"unknown pooling {pooling!r}")
    return ModalityGrid(grid.astype(np.float64), observed)


def scatter_max(features, cell_onehot: np.ndarray) -> Array:
    """Differentiable per-cell max pooling of (P, k) point features.

    cell_onehot is a fixed (P, n_cells) assignment; unassigned cells are 0.
    Gradients flow to the winning point per (cell, channel).
    """
    features = as_array(features)
    p, k = features.shape
    n_cells = cell_onehot.shape[1]
    # dense (P, n_cells, k) intermediate; point counts here are small
    expanded = np.where(cell_onehot[:, :, None] > 0, features.data[:, None, :], -np.inf)
    winners = expanded.argmax(axis=0)  # (n_cells, k)
    out_data = np.take_along_axis(expanded, winners[None], axis=0)[0]
    empty = cell_onehot.sum(axis=0) == 0
    out_data[empty] = 0.0

    def backward(g):
        dfeat = np.zeros_like(features.data)
        gmask = np.where(empty[:, None], 0.0, g)
        np.add.at(dfeat.reshape(-1),
                  (winners * k + np.arange(k)[None, :]).reshape(-1),
                  gmask.reshape(-1))
        features.accumulate_grad(dfeat)

    return make_output(out_data, (features,), backward)
