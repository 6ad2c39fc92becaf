"""Episode rollouts over the pose graph: expert shortest-path and random walks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import ACTIONS, Action, EnvGraph, Pose, UNREACHABLE
from .render import Observation, RenderConfig, render_observation


@dataclass
class Episode:
    kind: str                     # "expert" or "random"
    target_class: int
    poses: list[Pose]             # length T + 1
    actions: list[Action]         # length T
    collisions: list[int]         # length T
    seed: int
    observations: list[Observation] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.actions)


def expert_action(graph: EnvGraph, pose: Pose, target_class: int) -> Action:
    """First BFS-optimal action in fixed order MoveForward < RotateLeft < RotateRight."""
    dist = graph.distance_table(target_class)
    d = dist[pose]
    if d == UNREACHABLE:
        raise ValueError(f"target class {target_class} unreachable from {pose}")
    for action in ACTIONS:
        nxt, collided = graph.step(pose, action)
        if not collided and dist[nxt] == d - 1:
            return action
    raise AssertionError("Bellman property violated: no distance-reducing action")


def sample_episode(graph: EnvGraph, kind: str, target_class: int, max_len: int,
                   seed: int, render_cfg: RenderConfig | None = None,
                   start: Pose | None = None) -> Episode:
    """Deterministic episode for a seed; expert episodes follow BFS-optimal
    actions, random episodes draw uniform actions."""
    if kind not in ("expert", "random"):
        raise ValueError(f"unknown episode kind {kind!r}")
    rng = np.random.default_rng(seed)
    dist = graph.distance_table(target_class)
    if start is None:
        nodes = graph.nodes()
        if kind == "expert":
            nodes = [p for p in nodes if dist[p] != UNREACHABLE]
            if not nodes:
                raise ValueError(f"target class {target_class} unreachable everywhere")
        start = nodes[int(rng.integers(0, len(nodes)))]
    elif kind == "expert" and dist[start] == UNREACHABLE:
        raise ValueError(f"target class {target_class} unreachable from {start}")

    poses, actions, collisions = [start], [], []
    pose = start
    for _ in range(max_len):
        if kind == "expert":
            if dist[pose] == 0:
                break
            action = expert_action(graph, pose, target_class)
        else:
            action = ACTIONS[int(rng.integers(0, len(ACTIONS)))]
        pose, collided = graph.step(pose, action)
        poses.append(pose)
        actions.append(action)
        collisions.append(collided)

    episode = Episode(kind, target_class, poses, actions, collisions, seed)
    if render_cfg is not None:
        episode.observations = [render_observation(graph.scene, p, render_cfg)
                                for p in poses]
        for t, obs in enumerate(episode.observations):
            obs.collision_bit = collisions[t - 1] if t > 0 else 0
    return episode
