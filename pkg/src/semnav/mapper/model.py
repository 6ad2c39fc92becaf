"""Allocentric semantic map: embedding, correlation localization, weighted
registration and the shared per-cell recurrent update."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from ..autodiff import (Array, RecurrentCellParams, add, concat, conv2d,
                        correlate_stack, cross_entropy, load_arrays, lstm_step,
                        matmul, mul, place_weighted, relu, reshape,
                        rotate_stack, scale, softmax)
from ..world.graph import Pose, heading_angle
from ..world.render import Observation
from .config import ProjectionConfig
from .projection import bin_cells, scatter_max, unproject_and_bin

ENCODER_STRIDE = 8  # three stride-2 conv layers


class MapBoundsError(ValueError):
    """Ground-truth pose fell outside the map; increase u, v."""


def _conv_init(rng, k, cin, cout, dtype):
    w = rng.normal(0.0, 1.0 / np.sqrt(k * k * cin), (k, k, cin, cout))
    return Array(w.astype(dtype), requires_grad=True)


def _bias_init(cout, dtype):
    return Array(np.zeros(cout, dtype=dtype), requires_grad=True)


@dataclass
class MapperParams:
    config: ProjectionConfig
    encoder: list[tuple[Array, Array]]        # image encoder conv stages
    phi: dict[str, tuple[Array, Array, Array, Array]]  # k1, b1, k2, b2
    cell: RecurrentCellParams

    @classmethod
    def create(cls, rng: np.random.Generator, config: ProjectionConfig,
               dtype=np.float64) -> "MapperParams":
        encoder = []
        if "rgb" in config.modalities:
            dims = (3, 16, 32, config.n_img_feat)
            for cin, cout in zip(dims[:-1], dims[1:]):
                encoder.append((_conv_init(rng, 3, cin, cout, dtype),
                                _bias_init(cout, dtype)))
        phi = {}
        for m in config.modalities:
            cin = config.modality_input_dim(m)
            l_out = config.embedding_dim(m)
            phi[m] = (_conv_init(rng, 3, cin, config.phi_hidden, dtype),
                      _bias_init(config.phi_hidden, dtype),
                      _conv_init(rng, 3, config.phi_hidden, l_out, dtype),
                      _bias_init(l_out, dtype))
        cell = RecurrentCellParams.create(rng, config.n, config.n, dtype)
        return cls(config, encoder, phi, cell)

    def arrays(self) -> dict[str, Array]:
        out = {}
        for i, (k, b) in enumerate(self.encoder):
            out[f"encoder.{i}.kernel"] = k
            out[f"encoder.{i}.bias"] = b
        for m, (k1, b1, k2, b2) in self.phi.items():
            out[f"phi.{m}.k1"] = k1
            out[f"phi.{m}.b1"] = b1
            out[f"phi.{m}.k2"] = k2
            out[f"phi.{m}.b2"] = b2
        for name, arr in self.cell.arrays().items():
            out[f"cell.{name}"] = arr
        return out

    def load_state(self, named: dict[str, np.ndarray]) -> None:
        own = self.arrays()
        if set(own) != set(named):
            raise ValueError("checkpoint parameter names do not match this config")
        for name, arr in own.items():
            arr.data = named[name].astype(arr.dtype).reshape(arr.shape)


def save_mapper(path, params: MapperParams) -> None:
    from ..autodiff import save_arrays
    save_arrays(path, {k: v.data for k, v in params.arrays().items()})
    Path(str(path) + ".yaml").write_text(yaml.safe_dump(params.config.to_dict()))


def load_mapper(path, dtype=np.float64) -> MapperParams:
    config = ProjectionConfig.from_dict(
        yaml.safe_load(Path(str(path) + ".yaml").read_text()))
    params = MapperParams.create(np.random.default_rng(0), config, dtype)
    params.load_state(load_arrays(path))
    return params


# ---------------------------------------------------------------------------
# pose bookkeeping: poses relative to p0 (map center, facing 'right' = the
# egocentric forward axis of the first frame)


def relative_pose_mm(start: Pose, pose: Pose, r_env: int,
                     cell_mm: float) -> tuple[float, float, int]:
    """(x_rel, z_rel) in mm within the map frame anchored at the start pose,
    plus the orientation bin relative to the start orientation."""
    sx, sz, so = start
    px, pz, po = pose
    theta = heading_angle(so, r_env)
    dx, dz = (px - sx) * cell_mm, (pz - sz) * cell_mm
    x_rel = dx * np.sin(theta) - dz * np.cos(theta)
    z_rel = dx * np.cos(theta) + dz * np.sin(theta)
    return float(x_rel), float(z_rel), (po - so) % r_env


def pose_to_index(start: Pose, pose: Pose, r_env: int,
                  config: ProjectionConfig) -> tuple[int, int, int]:
    """Map/orientation indices of a pose; nearest bin, ties toward lower."""
    if r_env != config.r:
        raise ValueError("map orientation bins must match the environment's")
    x_rel, z_rel, b = relative_pose_mm(start, pose, r_env, config.x_b)
    cu, cv = config.center
    i = cu + int(np.ceil(x_rel / config.x_b - 0.5))
    j = cv + int(np.ceil(z_rel / config.z_b - 0.5))
    if not (0 <= i < config.u and 0 <= j < config.v):
        raise MapBoundsError(
            f"pose {pose} maps outside the {config.u}x{config.v} grid; increase u, v")
    return i, j, b


def index_to_world(index: tuple[int, int, int],
                   config: ProjectionConfig) -> tuple[float, float, float]:
    """Map cell/orientation index -> mm offsets from p0 and heading degrees."""
    i, j, b = index
    cu, cv = config.center
    return ((i - cu) * config.x_b, (j - cv) * config.z_b, b * 360.0 / config.r)


def pose_onehot(index: tuple[int, int, int], config: ProjectionConfig) -> np.ndarray:
    t = np.zeros((config.u, config.v, config.r))
    t[index] = 1.0
    return t


# ---------------------------------------------------------------------------


@dataclass
class MapperStep:
    belief: Array          # (u, v, r); softmax for t >= 1, p0 one-hot at t = 0
    ego: Array             # (u', v', n)
    bootstrapped: bool


class SpatialMapper:
    """Per-episode owner of the map features and recurrent cell state."""

    def __init__(self, params: MapperParams):
        self.params = params
        self.config = params.config
        self.reset()

    def reset(self) -> None:
        cfg = self.config
        dtype = self.params.cell.w_i.dtype
        self.map_features = Array(np.zeros((cfg.u, cfg.v, cfg.n), dtype=dtype))
        self.cell_state = Array(np.zeros((cfg.u * cfg.v, cfg.n), dtype=dtype))
        self.t = 0

    def detach_state(self) -> None:
        """Cut gradient flow at a truncation boundary."""
        self.map_features = self.map_features.detach()
        self.cell_state = self.cell_state.detach()

    # -- per-frame pipeline ---------------------------------------------

    def encode_image(self, obs: Observation) -> Array:
        x = Array(obs.rgb.astype(self.params.cell.w_i.dtype))
        for k, b in self.params.encoder:
            x = relu(add(conv2d(x, k, pad=1, stride=2), b))
        return x

    def _image_bins(self, obs: Observation, fh: int, fw: int, dtype):
        """Cell assignment of encoded-feature patches; parameter-independent,
        so cached on the observation."""
        cfg = self.config
        key = ("img", cfg.u_prime, cfg.v_prime, cfg.x_b, cfg.z_b, fh, fw)
        cache = getattr(obs, "_projection_cache", None)
        if cache is None:
            cache = obs._projection_cache = {}
        if key not in cache:
            s = ENCODER_STRIDE
            patches = obs.depth[:fh * s, :fw * s].reshape(fh, s, fw, s)
            depth_ds = patches.min(axis=(1, 3))
            cols = np.broadcast_to(np.arange(fw) * s + (s - 1) / 2.0, (fh, fw))
            flat, valid = bin_cells(depth_ds, cols, obs.fx, obs.cx, obs.sentinel,
                                    cfg.u_prime, cfg.v_prime, cfg.x_b, cfg.z_b)
            n_cells = cfg.u_prime * cfg.v_prime
            onehot = np.zeros((int(valid.sum()), n_cells))
            onehot[np.arange(onehot.shape[0]), flat[valid]] = 1.0
            sel = np.flatnonzero(valid.reshape(-1))
            gather = np.zeros((len(sel), fh * fw), dtype=dtype)
            gather[np.arange(len(sel)), sel] = 1.0
            observed = (onehot.sum(axis=0) > 0).reshape(cfg.u_prime, cfg.v_prime)
            cache[key] = (onehot, gather, observed)
        return cache[key]

    def image_grid(self, obs: Observation):
        """Project encoded image features to the ego grid with max pooling."""
        cfg = self.config
        feat = self.encode_image(obs)
        fh, fw, _ = feat.shape
        onehot, gather, observed = self._image_bins(obs, fh, fw, feat.dtype)
        pts = reshape(feat, (fh * fw, cfg.n_img_feat))
        pts_valid = matmul(Array(gather), pts)
        grid = scatter_max(pts_valid, onehot)
        return reshape(grid, (cfg.u_prime, cfg.v_prime, cfg.n_img_feat)), observed

    def modality_grids(self, obs: Observation):
        cfg = self.config
        dtype = self.params.cell.w_i.dtype
        cache = getattr(obs, "_projection_cache", None)
        if cache is None:
            cache = obs._projection_cache = {}
        grids = {}
        if "rgb" in cfg.modalities:
            grids["rgb"] = self.image_grid(obs)
        if "det" in cfg.modalities:
            key = ("det", cfg.u_prime, cfg.v_prime, cfg.x_b, cfg.z_b)
            if key not in cache:
                det = np.moveaxis(obs.detections, 0, -1).astype(np.float64)
                mg = unproject_and_bin(obs.depth, det, obs.fx, obs.cx,
                                       obs.sentinel, cfg.u_prime, cfg.v_prime,
                                       cfg.x_b, cfg.z_b, "mean")
                cache[key] = (mg.grid.astype(dtype), mg.observed)
            grid, observed = cache[key]
            grids["det"] = (Array(grid), observed)
        if "seg" in cfg.modalities:
            key = ("seg", cfg.u_prime, cfg.v_prime, cfg.x_b, cfg.z_b, cfg.c_s)
            if key not in cache:
                mg = unproject_and_bin(obs.depth, obs.segmentation, obs.fx,
                                       obs.cx, obs.sentinel, cfg.u_prime,
                                       cfg.v_prime, cfg.x_b, cfg.z_b,
                                       "distribution", n_labels=cfg.c_s)
                cache[key] = (mg.grid.astype(dtype), mg.observed)
            grid, observed = cache[key]
            grids["seg"] = (Array(grid), observed)
        return grids

    def embed(self, obs: Observation) -> Array:
        """Per-modality two-layer embedding nets, concatenated; unobserved
        cells of each modality are zeroed after embedding."""
        cfg = self.config
        grids = self.modality_grids(obs)
        parts = []
        for m in cfg.modalities:
            grid, observed = grids[m]
            k1, b1, k2, b2 = self.params.phi[m]
            hidden = relu(add(conv2d(grid, k1, pad=1), b1))
            emb = add(conv2d(hidden, k2, pad=1), b2)
            mask = Array(observed[..., None].astype(emb.dtype))
            parts.append(mul(emb, mask))
        return concat(parts, axis=2) if len(parts) > 1 else parts[0]

    def localize(self, stack: Array) -> Array:
        """Dense correlation over all positions and rotations, one softmax."""
        scores = correlate_stack(self.map_features, stack)
        return softmax(scores)

    def step(self, obs: Observation) -> MapperStep:
        cfg = self.config
        ego = self.embed(obs)
        stack = rotate_stack(ego, cfg.r)
        if self.t == 0:
            # empty map: registration forced to the p0 one-hot at map center
            belief = Array(pose_onehot((*cfg.center, 0), cfg).astype(ego.dtype))
            bootstrapped = True
        else:
            belief = self.localize(stack)
            bootstrapped = False
        registered = place_weighted(stack, belief)
        x = reshape(registered, (cfg.u * cfg.v, cfg.n))
        h = reshape(self.map_features, (cfg.u * cfg.v, cfg.n))
        h_new, c_new = lstm_step(self.params.cell, x, h, self.cell_state)
        self.map_features = reshape(h_new, (cfg.u, cfg.v, cfg.n))
        self.cell_state = c_new
        self.t += 1
        return MapperStep(belief=belief, ego=ego, bootstrapped=bootstrapped)


def localization_loss(beliefs: list[Array], gt_indices: list[tuple[int, int, int]],
                      config: ProjectionConfig) -> Array:
    """Mean cross-entropy of per-step beliefs against ground-truth one-hots."""
    if len(beliefs) != len(gt_indices):
        raise ValueError("belief / ground-truth length mismatch")
    total = None
    for belief, idx in zip(beliefs, gt_indices):
        term = cross_entropy(belief, Array(pose_onehot(idx, config).astype(belief.dtype)))
        total = term if total is None else add(total, term)
    return scale(total, 1.0 / len(beliefs))


# ---------------------------------------------------------------------------
# snapshots


MAP_SNAPSHOT_VERSION = 1


def save_map_snapshot(path, mapper: SpatialMapper) -> None:
    from ..autodiff import save_arrays
    cfg = mapper.config
    save_arrays(path, {
        "version": np.array([MAP_SNAPSHOT_VERSION], dtype=np.float32),
        "dims": np.array([cfg.u, cfg.v, cfg.n], dtype=np.float32),
        "features": mapper.map_features.data,
    })


def dump_map_csv(path, mapper: SpatialMapper) -> None:
    """Per-cell argmax feature channel, for eyeballing the map layout."""
    feats = mapper.map_features.data
    arg = feats.argmax(axis=2)
    arg[np.abs(feats).sum(axis=2) < 1e-9] = -1
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in arg.T:  # z as rows to match the scene text layout
            writer.writerow(row.tolist())
