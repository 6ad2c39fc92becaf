"""Navigation evaluation: policy rollouts, expert replay and the random-walk
and detect-then-plan baselines under a shared success rule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..mapper import MapperParams, SpatialMapper
from ..policy import PolicyInputs, PolicyParams, policy_forward, select_action
from ..world import (ACTIONS, EnvGraph, Pose, RenderConfig, UNREACHABLE,
                     expert_action, render_observation)

SUCCESS_RADIUS = 5   # BFS steps to a goal pose
MAX_STEPS = 100


@dataclass
class EpisodeRecord:
    scene_seed: int
    start: Pose
    target_class: int
    shortest: int          # BFS steps from start to the success region
    steps: int
    success: bool
    ratio: float | None    # steps / shortest, successes only
    poses: list[Pose] = field(default_factory=list)


@dataclass
class NavigationReport:
    variant: str
    records: list[EpisodeRecord]
    n_skipped: int = 0

    @property
    def n_episodes(self) -> int:
        return len(self.records)

    @property
    def success_rate(self) -> float:
        """Percentage of successful episodes."""
        if not self.records:
            return 0.0
        return 100.0 * sum(r.success for r in self.records) / len(self.records)

    @property
    def mean_ratio(self) -> float | None:
        ratios = [r.ratio for r in self.records if r.success]
        return float(np.mean(ratios)) if ratios else None


class Controller:
    """Per-episode action source; reset before each episode."""

    def reset(self, graph: EnvGraph, target_class: int) -> None:
        raise NotImplementedError

    def act(self, obs, pose: Pose, rng: np.random.Generator):
        raise NotImplementedError


class RandomController(Controller):
    def reset(self, graph, target_class):
        pass

    def act(self, obs, pose, rng):
        return ACTIONS[int(rng.integers(0, len(ACTIONS)))]


class ExpertController(Controller):
    def reset(self, graph, target_class):
        self.graph, self.target = graph, target_class

    def act(self, obs, pose, rng):
        return expert_action(self.graph, pose, self.target)


class NonLearningController(Controller):
    """Random walk until the target class appears in the detection channels,
    then shortest-path actions using full knowledge of the graph."""

    def reset(self, graph, target_class):
        self.graph, self.target = graph, target_class
        self.detected = False

    def act(self, obs, pose, rng):
        if not self.detected and obs.detections[self.target].max() > 0:
            self.detected = True
        if self.detected:
            return expert_action(self.graph, pose, self.target)
        return ACTIONS[int(rng.integers(0, len(ACTIONS)))]


class LearnedController(Controller):
    def __init__(self, policy_params: PolicyParams, mapper_params: MapperParams,
                 temperature: float | None = None):
        self.policy = policy_params
        self.mapper = SpatialMapper(mapper_params)
        self.temperature = (temperature if temperature is not None
                            else policy_params.config.temperature)

    def reset(self, graph, target_class):
        self.target = target_class
        self.mapper.reset()
        self.state = None

    def act(self, obs, pose, rng):
        step = self.mapper.step(obs)
        costs, self.state = policy_forward(
            self.policy,
            PolicyInputs(self.mapper.map_features, step.belief, obs,
                         self.target, obs.collision_bit),
            self.state)
        return select_action(costs, rng, self.temperature)


def shortest_to_success(graph: EnvGraph, start: Pose, target_class: int,
                        success_radius: int = SUCCESS_RADIUS) -> int:
    d = graph.distance(start, target_class)
    if d == UNREACHABLE:
        return UNREACHABLE
    return max(d - success_radius, 0)


def run_episode(graph: EnvGraph, start: Pose, target_class: int,
                controller: Controller, render_cfg: RenderConfig,
                rng: np.random.Generator, max_steps: int = MAX_STEPS,
                success_radius: int = SUCCESS_RADIUS,
                keep_poses: bool = False) -> EpisodeRecord:
    dist = graph.distance_table(target_class)
    shortest = shortest_to_success(graph, start, target_class, success_radius)
    if shortest == UNREACHABLE:
        raise ValueError(f"target class {target_class} unreachable from {start}")
    controller.reset(graph, target_class)
    pose, collision = start, 0
    poses = [pose]
    steps, success = 0, dist[pose] <= success_radius
    while not success and steps < max_steps:
        obs = render_observation(graph.scene, pose, render_cfg)
        obs.collision_bit = collision
        action = controller.act(obs, pose, rng)
        pose, collision = graph.step(pose, action)
        poses.append(pose)
        steps += 1
        success = dist[pose] <= success_radius
    ratio = None
    if success:
        ratio = 1.0 if shortest == 0 else steps / shortest
    return EpisodeRecord(graph.scene.seed, start, target_class, shortest, steps,
                         success, ratio, poses if keep_poses else [])


def evaluate_navigation(controller: Controller, graphs: list[EnvGraph],
                        n_episodes: int, seed: int, render_cfg: RenderConfig,
                        variant: str = "", max_steps: int = MAX_STEPS,
                        success_radius: int = SUCCESS_RADIUS,
                        keep_poses: bool = False,
                        episodes: list[tuple[int, Pose, int]] | None = None,
                        ) -> NavigationReport:
    """Roll out n_episodes over the scene set; episodes with an unreachable
    target are skipped and counted. An explicit episode list (graph index,
    start, target) pins the specs for paired comparisons."""
    rng = np.random.default_rng(seed + 1)
    records, skipped = [], 0
    if episodes is None:
        episodes, skipped = sample_episode_specs(graphs, n_episodes, seed)
    for gi, start, target in episodes:
        records.append(run_episode(graphs[gi], start, target, controller,
                                   render_cfg, rng, max_steps, success_radius,
                                   keep_poses))
    return NavigationReport(variant, records, skipped)


def sample_episode_specs(graphs: list[EnvGraph], n_episodes: int,
                         seed: int) -> tuple[list[tuple[int, Pose, int]], int]:
    """Reachable (graph index, start, target) specs for paired baselines."""
    rng = np.random.default_rng(seed)
    specs, skipped, attempts = [], 0, 0
    while len(specs) < n_episodes:
        attempts += 1
        if attempts > 50 * n_episodes:
            raise RuntimeError("could not sample enough reachable episodes")
        gi = int(rng.integers(0, len(graphs)))
        graph = graphs[gi]
        target = int(rng.choice(graph.scene.target_classes))
        nodes = graph.nodes()
        start = nodes[int(rng.integers(0, len(nodes)))]
        if graph.distance(start, target) == UNREACHABLE:
            skipped += 1
            continue
        specs.append((gi, start, target))
    return specs, skipped
