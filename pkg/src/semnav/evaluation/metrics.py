"""Localization metrics: average position error and the uniform-belief baseline."""

from __future__ import annotations

import numpy as np

from ..mapper import ProjectionConfig, SpatialMapper, index_to_world


def compute_ape(predicted_xy, ground_truth_xy) -> float:
    """Mean 2-D Euclidean distance in mm between pose sequences."""
    pred = np.asarray(predicted_xy, dtype=np.float64)
    gt = np.asarray(ground_truth_xy, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError("pose sequence length mismatch")
    if len(pred) == 0:
        raise ValueError("empty pose sequence")
    return float(np.hypot(*(pred - gt).T).mean())


def uniform_baseline_ape(config: ProjectionConfig,
                         gt_indices: list[tuple[int, int, int]]) -> float:
    """APE of a uniform belief over map cells: its expected position error is
    the mean distance from the ground-truth cell to every cell, analytically."""
    cu, cv = config.center
    xs = (np.arange(config.u) - cu) * config.x_b
    zs = (np.arange(config.v) - cv) * config.z_b
    X, Z = np.meshgrid(xs, zs, indexing="ij")
    errs = []
    for i, j, _ in gt_indices:
        gx, gz = (i - cu) * config.x_b, (j - cv) * config.z_b
        errs.append(np.hypot(X - gx, Z - gz).mean())
    return float(np.mean(errs))


def belief_position(belief: np.ndarray, config: ProjectionConfig) -> tuple[float, float]:
    """(x, z) mm of the belief's argmax cell."""
    i, j, b = np.unravel_index(int(belief.argmax()), belief.shape)
    x, z, _ = index_to_world((int(i), int(j), int(b)), config)
    return x, z


def episode_ape(mapper: SpatialMapper,
                observations, gt_indices: list[tuple[int, int, int]]) -> float:
    """APE of belief-argmax positions over one episode (t = 0 included; its
    registration is forced to the exact start pose)."""
    cfg = mapper.config
    mapper.reset()
    pred, gt = [], []
    for obs, idx in zip(observations, gt_indices):
        step = mapper.step(obs)
        pred.append(belief_position(step.belief.data, cfg))
        gx, gz, _ = index_to_world(idx, cfg)
        gt.append((gx, gz))
    return compute_ape(pred, gt)
