"""Column-raycast rendering of egocentric RGB / depth / segmentation /
detection observations from a scene pose."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import Pose, heading_angle
from .scene import Scene, WALL_HEIGHT_MM

SEG_VOID = 0
SEG_FLOOR = 1
SEG_WALL = 2
SEG_OBJECT_BASE = 3

_FLOOR_COLOR = np.array([0.42, 0.40, 0.38])
_VOID_COLOR = np.array([0.05, 0.05, 0.07])

# camera sits a hair inside its cell so rays never start on a boundary
_CAM_EPS_CELLS = 1e-6


@dataclass(frozen=True)
class NoiseConfig:
    p_seg_flip: float = 0.0
    p_det_miss: float = 0.0
    p_det_fp: float = 0.0
    box_jitter_px: int = 0
    seed: int = 0

    @property
    def any_noise(self) -> bool:
        return self.p_seg_flip > 0 or self.p_det_miss > 0 or self.p_det_fp > 0 \
            or self.box_jitter_px > 0


@dataclass(frozen=True)
class RenderConfig:
    image_h: int = 32
    image_w: int = 48
    hfov_deg: float = 90.0
    max_range_mm: float = 4500.0
    cam_height_mm: float = 1200.0
    n_object_classes: int = 5
    r_env: int = 4
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    @property
    def n_seg_classes(self) -> int:
        return SEG_OBJECT_BASE + self.n_object_classes

    @property
    def fx(self) -> float:
        return (self.image_w / 2.0) / np.tan(np.deg2rad(self.hfov_deg) / 2.0)

    @property
    def fy(self) -> float:
        return self.fx

    @property
    def cx(self) -> float:
        return (self.image_w - 1) / 2.0

    @property
    def cy(self) -> float:
        return (self.image_h - 1) / 2.0


@dataclass
class Observation:
    rgb: np.ndarray           # (h, w, 3) in [0, 1]
    depth: np.ndarray         # (h, w) plane depth in mm; sentinel = max range
    segmentation: np.ndarray  # (h, w) int16 class ids
    detections: np.ndarray    # (n_object_classes, h, w) binary box masks
    collision_bit: int
    fx: float
    fy: float
    cx: float
    cy: float
    max_range_mm: float

    @property
    def sentinel(self) -> float:
        return self.max_range_mm


def _wall_shade(ix: int, iz: int) -> float:
    h = (ix * 73856093) ^ (iz * 19349663) ^ 0x5BD1E995
    return 0.45 + 0.45 * ((h % 9973) / 9973.0)


def _march_ray(scene: Scene, px: float, pz: float, dx: float, dz: float,
               max_range: float):
    """Grid traversal: blocked cells pierced by the ray, nearest first,
    stopping at the first wall cell. Yields (entry distance mm, ix, iz)."""
    cell = scene.cell_size_mm
    ix, iz = int(np.floor(px / cell)), int(np.floor(pz / cell))
    step_x = 1 if dx > 0 else -1
    step_z = 1 if dz > 0 else -1
    t_max_x = (((ix + (step_x > 0)) * cell) - px) / dx if dx != 0 else np.inf
    t_max_z = (((iz + (step_z > 0)) * cell) - pz) / dz if dz != 0 else np.inf
    t_dx = abs(cell / dx) if dx != 0 else np.inf
    t_dz = abs(cell / dz) if dz != 0 else np.inf
    hits = []
    t = 0.0
    while t <= max_range:
        if t_max_x < t_max_z:
            t = t_max_x
            t_max_x += t_dx
            ix += step_x
        else:
            t = t_max_z
            t_max_z += t_dz
            iz += step_z
        if not (0 <= ix < scene.width and 0 <= iz < scene.height):
            break
        if t > max_range:
            break
        if scene.blocked[ix, iz]:
            hits.append((t, ix, iz))
            if scene.walls[ix, iz]:
                break
    return hits


def render_observation(scene: Scene, pose: Pose, cfg: RenderConfig) -> Observation:
    """Deterministic render given (scene, pose, noise seed)."""
    h, w = cfg.image_h, cfg.image_w
    fx, fy, cx, cy = cfg.fx, cfg.fy, cfg.cx, cfg.cy
    sentinel = cfg.max_range_mm
    ix0, iz0, o = pose
    cell = scene.cell_size_mm
    px = (ix0 + _CAM_EPS_CELLS) * cell
    pz = (iz0 + _CAM_EPS_CELLS) * cell

    rgb = np.empty((h, w, 3))
    rgb[:] = _VOID_COLOR
    depth = np.full((h, w), sentinel)
    seg = np.full((h, w), SEG_VOID, dtype=np.int16)
    inst = np.full((h, w), -1, dtype=np.int32)

    theta = heading_angle(o, cfg.r_env)
    rows = np.arange(h)
    # floor: plane depth depends only on the row
    floor_rows = rows[rows > cy]
    z_floor = fy * cfg.cam_height_mm / (floor_rows - cy)
    floor_ok = z_floor <= sentinel

    obj_lookup = {(ob.ix, ob.iz): (idx, ob) for idx, ob in enumerate(scene.objects)}

    for col in range(w):
        alpha = np.arctan2(col - cx, fx)  # positive to the camera's right
        ray_ang = theta - alpha  # right of forward = clockwise in (x, z)
        dx, dz = np.cos(ray_ang), np.sin(ray_ang)
        cos_a = np.cos(alpha)
        visible = floor_rows[floor_ok]
        depth[visible, col] = z_floor[floor_ok]
        seg[visible, col] = SEG_FLOOR
        rgb[visible, col] = _FLOOR_COLOR

        hits = _march_ray(scene, px, pz, dx, dz, sentinel / cos_a)
        for t, hx, hz in reversed(hits):  # paint far to near
            z = (t + 0.5) * cos_a
            if z > sentinel:
                continue
            if scene.walls[hx, hz]:
                height = WALL_HEIGHT_MM
                color = np.array([0.75, 0.68, 0.55]) * _wall_shade(hx, hz)
                sid, oid = SEG_WALL, -1
            else:
                idx, ob = obj_lookup[(hx, hz)]
                height = ob.height_mm
                color = np.asarray(ob.color)
                sid, oid = SEG_OBJECT_BASE + ob.class_id, idx
            top = cy - fy * (height - cfg.cam_height_mm) / z
            bottom = cy + fy * cfg.cam_height_mm / z
            r0 = max(0, int(np.ceil(top)))
            r1 = min(h - 1, int(np.floor(bottom)))
            if r1 < r0:
                continue
            depth[r0:r1 + 1, col] = z
            seg[r0:r1 + 1, col] = sid
            rgb[r0:r1 + 1, col] = color
            inst[r0:r1 + 1, col] = oid

    noise = cfg.noise
    rng = np.random.default_rng((noise.seed, ix0, iz0, o)) if noise.any_noise else None

    if rng is not None and noise.p_seg_flip > 0:
        flip = rng.random(seg.shape) < noise.p_seg_flip
        seg = np.where(flip, rng.integers(0, cfg.n_seg_classes, size=seg.shape).astype(np.int16), seg)

    detections = np.zeros((cfg.n_object_classes, h, w), dtype=np.float32)
    for idx, ob in enumerate(scene.objects):
        ys, xs = np.nonzero(inst == idx)
        if len(ys) == 0:
            continue
        if rng is not None and noise.p_det_miss > 0 and rng.random() < noise.p_det_miss:
            continue
        r0, r1 = int(ys.min()), int(ys.max())
        c0, c1 = int(xs.min()), int(xs.max())
        if rng is not None and noise.box_jitter_px > 0:
            j = noise.box_jitter_px
            r0 = int(np.clip(r0 + rng.integers(-j, j + 1), 0, h - 1))
            r1 = int(np.clip(r1 + rng.integers(-j, j + 1), r0, h - 1))
            c0 = int(np.clip(c0 + rng.integers(-j, j + 1), 0, w - 1))
            c1 = int(np.clip(c1 + rng.integers(-j, j + 1), c0, w - 1))
        detections[ob.class_id, r0:r1 + 1, c0:c1 + 1] = 1.0
    if rng is not None and noise.p_det_fp > 0 and rng.random() < noise.p_det_fp:
        cls = int(rng.integers(0, cfg.n_object_classes))
        r0, r1 = sorted(rng.integers(0, h, size=2).tolist())
        c0, c1 = sorted(rng.integers(0, w, size=2).tolist())
        detections[cls, r0:r1 + 1, c0:c1 + 1] = 1.0

    return Observation(rgb=rgb.astype(np.float32), depth=depth.astype(np.float64),
                       segmentation=seg, detections=detections, collision_bit=0,
                       fx=fx, fy=fy, cx=cx, cy=cy, max_range_mm=sentinel)
