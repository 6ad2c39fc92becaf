"""Procedural 2.5D indoor scenes on an occupancy grid."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCENE_FORMAT = "semnav-scene"
SCENE_VERSION = 1

# class ids 0..C-1 for objects; segmentation prepends void/floor/wall
CLASS_NAMES = ("table", "chair", "sofa", "tv", "plant", "shelf", "lamp", "crate")

WALL_HEIGHT_MM = 2400.0
OBJECT_HEIGHT_RANGE_MM = (900.0, 2100.0)

_CLASS_BASE_COLORS = np.array([
    (0.72, 0.45, 0.20),  # table
    (0.20, 0.35, 0.70),  # chair
    (0.65, 0.15, 0.15),  # sofa
    (0.10, 0.10, 0.12),  # tv
    (0.15, 0.55, 0.20),  # plant
    (0.55, 0.50, 0.30),  # shelf
    (0.85, 0.80, 0.30),  # lamp
    (0.50, 0.35, 0.55),  # crate
])


class SceneGenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SceneObject:
    class_id: int
    ix: int
    iz: int
    height_mm: float
    color: tuple[float, float, float]


@dataclass
class Scene:
    width: int
    height: int
    walls: np.ndarray  # bool (width, height), True = wall cell
    objects: list[SceneObject]
    target_classes: tuple[int, ...]
    cell_size_mm: float
    seed: int
    version: int = SCENE_VERSION
    _blocked: np.ndarray | None = field(default=None, repr=False)

    @property
    def blocked(self) -> np.ndarray:
        if self._blocked is None:
            b = self.walls.copy()
            for obj in self.objects:
                b[obj.ix, obj.iz] = True
            self._blocked = b
        return self._blocked

    @property
    def free(self) -> np.ndarray:
        return ~self.blocked

    def free_cells(self) -> list[tuple[int, int]]:
        xs, zs = np.nonzero(self.free)
        return list(zip(xs.tolist(), zs.tolist()))

    def object_at(self, ix: int, iz: int) -> SceneObject | None:
        for obj in self.objects:
            if obj.ix == ix and obj.iz == iz:
                return obj
        return None

    def instances_of(self, class_id: int) -> list[SceneObject]:
        return [o for o in self.objects if o.class_id == class_id]


def _connected(free: np.ndarray) -> bool:
    """Free space forms a single 4-connected component."""
    xs, zs = np.nonzero(free)
    if len(xs) == 0:
        return False
    seen = np.zeros_like(free)
    stack = [(int(xs[0]), int(zs[0]))]
    seen[stack[0]] = True
    count = 0
    while stack:
        x, z = stack.pop()
        count += 1
        for dx, dz in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx, nz = x + dx, z + dz
            if 0 <= nx < free.shape[0] and 0 <= nz < free.shape[1] \
                    and free[nx, nz] and not seen[nx, nz]:
                seen[nx, nz] = True
                stack.append((nx, nz))
    return count == len(xs)


def _carve_layout(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    walls = np.zeros((width, height), dtype=bool)
    walls[0, :] = walls[-1, :] = True
    walls[:, 0] = walls[:, -1] = True
    # rooms-and-corridors: up to two internal partitions with door gaps
    if min(width, height) >= 10:
        for _ in range(rng.integers(0, 3)):
            if rng.random() < 0.5:
                x = int(rng.integers(3, width - 3))
                walls[x, 1:-1] = True
                for _ in range(int(rng.integers(1, 3))):
                    walls[x, int(rng.integers(1, height - 1))] = False
            else:
                z = int(rng.integers(3, height - 3))
                walls[1:-1, z] = True
                for _ in range(int(rng.integers(1, 3))):
                    walls[int(rng.integers(1, width - 1)), z] = False
    return walls


def generate_scene(seed: int, width: int = 16, height: int = 16,
                   object_density: float = 0.06,
                   n_classes: int = 5,
                   target_classes: tuple[int, ...] | None = None,
                   cell_size_mm: float = 300.0,
                   max_retries: int = 50) -> Scene:
    """Deterministic scene for a seed: bordered floor plan, optional internal
    partitions, and wall-hugging objects that keep free space connected."""
    if width < 8 or height < 8:
        raise ValueError("scene must be at least 8x8 cells")
    if n_classes > len(CLASS_NAMES):
        raise ValueError(f"at most {len(CLASS_NAMES)} object classes supported")
    if target_classes is None:
        target_classes = tuple(range(min(5, n_classes)))
    rng = np.random.default_rng(seed)

    for _ in range(max_retries):
        walls = _carve_layout(rng, width, height)
        if not _connected(~walls):
            continue
        free_count = int((~walls).sum())
        n_objects = int(round(object_density * free_count))
        n_objects = max(n_objects, len(target_classes) if n_objects > 0 or object_density > 0 else 0)
        if object_density == 0:
            n_objects = 0

        # candidate cells: free and adjacent to a wall
        cand = []
        for x in range(width):
            for z in range(height):
                if walls[x, z]:
                    continue
                if any(walls[x + dx, z + dz] for dx, dz in ((1, 0), (-1, 0), (0, 1), (0, -1))
                       if 0 <= x + dx < width and 0 <= z + dz < height):
                    cand.append((x, z))
        rng.shuffle(cand)

        # every target class first, then round-robin over the full class set
        class_order = list(target_classes) + [int(c) for c in
                                              rng.integers(0, n_classes, size=max(0, n_objects - len(target_classes)))]
        occupied = walls.copy()
        objects: list[SceneObject] = []
        for class_id in class_order[:n_objects]:
            placed = False
            while cand:
                x, z = cand.pop()
                if occupied[x, z]:
                    continue
                trial = occupied.copy()
                trial[x, z] = True
                if not _connected(~trial):
                    continue
                occupied = trial
                h = float(rng.uniform(*OBJECT_HEIGHT_RANGE_MM))
                jitter = rng.uniform(-0.08, 0.08, size=3)
                color = tuple(np.clip(_CLASS_BASE_COLORS[class_id] + jitter, 0.0, 1.0).tolist())
                objects.append(SceneObject(int(class_id), x, z, h, color))
                placed = True
                break
            if not placed:
                break

        scene = Scene(width, height, walls, objects, tuple(target_classes),
                      cell_size_mm, seed)
        if n_objects > 0 and not all(scene.instances_of(c) for c in target_classes):
            continue
        if not _connected(scene.free):
            continue
        return scene
    raise SceneGenerationError(
        f"could not generate a valid scene for seed={seed} after {max_retries} attempts")


# ---------------------------------------------------------------------------
# serialization (versioned structured text)


def save_scene(scene: Scene, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{SCENE_FORMAT} {scene.version}",
             f"seed {scene.seed}",
             f"cellsize {scene.cell_size_mm:g}",
             f"size {scene.width} {scene.height}",
             "targets " + " ".join(str(c) for c in scene.target_classes),
             "grid"]
    for z in range(scene.height):
        lines.append("".join("#" if scene.walls[x, z] else "." for x in range(scene.width)))
    lines.append(f"objects {len(scene.objects)}")
    for o in scene.objects:
        col = ",".join(repr(float(c)) for c in o.color)
        lines.append(f"{o.class_id} {o.ix} {o.iz} {float(o.height_mm)!r} {col}")
    path.write_text("\n".join(lines) + "\n")


def load_scene(path) -> Scene:
    lines = Path(path).read_text().splitlines()
    it = iter(lines)
    fmt, version = next(it).split()
    if fmt != SCENE_FORMAT:
        raise ValueError(f"{path}: not a semnav scene file")
    if int(version) != SCENE_VERSION:
        raise ValueError(f"{path}: unsupported scene version {version}")
    seed = int(next(it).split()[1])
    cell = float(next(it).split()[1])
    _, w, h = next(it).split()
    width, height = int(w), int(h)
    targets = tuple(int(t) for t in next(it).split()[1:])
    assert next(it) == "grid"
    walls = np.zeros((width, height), dtype=bool)
    for z in range(height):
        row = next(it)
        for x in range(width):
            walls[x, z] = row[x] == "#"
    n_obj = int(next(it).split()[1])
    objects = []
    for _ in range(n_obj):
        parts = next(it).split()
        color = tuple(float(c) for c in parts[4].split(","))
        objects.append(SceneObject(int(parts[0]), int(parts[1]), int(parts[2]),
                                   float(parts[3]), color))
    return Scene(width, height, walls, objects, targets, cell, seed, int(version))
