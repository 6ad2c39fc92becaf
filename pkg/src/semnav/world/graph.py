"""Discrete pose graph over a scene: nodes are (cell, orientation) poses,
edges are actions, with BFS shortest-path distance tables per target class."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .scene import Scene

UNREACHABLE = -1


class Action(IntEnum):
    MOVE_FORWARD = 0
    ROTATE_LEFT = 1
    ROTATE_RIGHT = 2


ACTIONS = (Action.MOVE_FORWARD, Action.ROTATE_LEFT, Action.ROTATE_RIGHT)

Pose = tuple[int, int, int]  # (ix, iz, orientation index)


def heading_angle(orientation: int, r_env: int) -> float:
    """Heading in radians; bin 0 faces +x, bins increase counterclockwise."""
    return 2.0 * np.pi * orientation / r_env


def forward_delta(orientation: int, r_env: int) -> tuple[int, int]:
    """One-cell advance along the heading, rounded to the nearest cell step."""
    ang = heading_angle(orientation, r_env)
    return int(np.floor(np.cos(ang) + 0.5)), int(np.floor(np.sin(ang) + 0.5))


@dataclass
class EnvGraph:
    scene: Scene
    r_env: int
    goal_radius_cells: int = 2
    _distances: dict[int, np.ndarray] = field(default_factory=dict, repr=False)
    _goals: dict[int, frozenset[Pose]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if 360 % self.r_env != 0:
            raise ValueError("r_env must divide 360 into an integer angle")

    # -- nodes / edges ------------------------------------------------------

    def is_node(self, pose: Pose) -> bool:
        ix, iz, o = pose
        return (0 <= ix < self.scene.width and 0 <= iz < self.scene.height
                and 0 <= o < self.r_env and bool(self.scene.free[ix, iz]))

    def nodes(self) -> list[Pose]:
        return [(ix, iz, o) for ix, iz in self.scene.free_cells()
                for o in range(self.r_env)]

    def n_nodes(self) -> int:
        return int(self.scene.free.sum()) * self.r_env

    def step(self, pose: Pose, action: Action) -> tuple[Pose, int]:
        """Follow the edge; a blocked MoveForward keeps the pose, bit set."""
        ix, iz, o = pose
        if not self.is_node(pose):
            raise ValueError(f"invalid pose {pose}")
        if action == Action.ROTATE_LEFT:
            return (ix, iz, (o + 1) % self.r_env), 0
        if action == Action.ROTATE_RIGHT:
            return (ix, iz, (o - 1) % self.r_env), 0
        dx, dz = forward_delta(o, self.r_env)
        nx, nz = ix + dx, iz + dz
        if 0 <= nx < self.scene.width and 0 <= nz < self.scene.height \
                and self.scene.free[nx, nz]:
            return (nx, nz, o), 0
        return pose, 1

    def predecessors(self, pose: Pose):
        """Poses with a non-collision edge into this pose."""
        ix, iz, o = pose
        yield (ix, iz, (o - 1) % self.r_env), Action.ROTATE_LEFT
        yield (ix, iz, (o + 1) % self.r_env), Action.ROTATE_RIGHT
        dx, dz = forward_delta(o, self.r_env)
        px, pz = ix - dx, iz - dz
        if 0 <= px < self.scene.width and 0 <= pz < self.scene.height \
                and self.scene.free[px, pz]:
            yield (px, pz, o), Action.MOVE_FORWARD

    # -- goals / distances --------------------------------------------------

    def goal_poses(self, target_class: int) -> frozenset[Pose]:
        """Free poses within the goal radius of a target instance, oriented
        toward it within one orientation step."""
        cached = self._goals.get(target_class)
        if cached is not None:
            return cached
        instances = self.scene.instances_of(target_class)
        if not instances:
            raise ValueError(f"target class {target_class} absent from scene")
        step_ang = 2.0 * np.pi / self.r_env
        goals = set()
        for obj in instances:
            for ix in range(obj.ix - self.goal_radius_cells, obj.ix + self.goal_radius_cells + 1):
                for iz in range(obj.iz - self.goal_radius_cells, obj.iz + self.goal_radius_cells + 1):
                    if not (0 <= ix < self.scene.width and 0 <= iz < self.scene.height):
                        continue
                    if not self.scene.free[ix, iz]:
                        continue
                    to_obj = np.arctan2(obj.iz - iz, obj.ix - ix)
                    for o in range(self.r_env):
                        diff = (heading_angle(o, self.r_env) - to_obj + np.pi) % (2 * np.pi) - np.pi
                        if abs(diff) <= step_ang + 1e-9:
                            goals.add((ix, iz, o))
        result = frozenset(goals)
        self._goals[target_class] = result
        return result

    def distance_table(self, target_class: int) -> np.ndarray:
        """Multi-source BFS steps-to-goal per pose, UNREACHABLE where cut off.

        Indexed [ix, iz, o]; satisfies d=0 at goals and the Bellman property
        d(s) = 1 + min over non-collision successors elsewhere.
        """
        cached = self._distances.get(target_class)
        if cached is not None:
            return cached
        dist = np.full((self.scene.width, self.scene.height, self.r_env),
                       UNREACHABLE, dtype=np.int32)
        queue = deque()
        for pose in self.goal_poses(target_class):
            dist[pose] = 0
            queue.append(pose)
        while queue:
            pose = queue.popleft()
            d = dist[pose]
            for pred, _action in self.predecessors(pose):
                if dist[pred] == UNREACHABLE:
                    dist[pred] = d + 1
                    queue.append(pred)
        self._distances[target_class] = dist
        return dist

    def distance(self, pose: Pose, target_class: int) -> int:
        return int(self.distance_table(target_class)[pose])


def build_graph(scene: Scene, r_env: int = 12, goal_radius_cells: int = 2) -> EnvGraph:
    return EnvGraph(scene, r_env, goal_radius_cells)


def bfs_from_source(graph: EnvGraph, source: Pose, target_class: int) -> int:
    """Independent forward BFS from one pose to the goal set (test oracle)."""
    goals = graph.goal_poses(target_class)
    if source in goals:
        return 0
    seen = {source}
    queue = deque([(source, 0)])
    while queue:
        pose, d = queue.popleft()
        for action in ACTIONS:
            nxt, collided = graph.step(pose, action)
            if collided or nxt in seen:
                continue
            if nxt in goals:
                return d + 1
            seen.add(nxt)
            queue.append((nxt, d + 1))
    return UNREACHABLE
