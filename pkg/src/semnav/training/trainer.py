"""Two-phase training: mapper pretraining on random walks with the
localization objective, then cost-regression policy training with online
dataset aggregation (expert pool mixed with relabeled on-policy rollouts)."""

from __future__ import annotations

import copy
import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Adam, NonFiniteError, Array, Tape, scale
from ..evaluation.metrics import episode_ape
from ..mapper import (MapBoundsError, MapperParams, SpatialMapper,
                      localization_loss, pose_to_index)
from ..policy import (PolicyInputs, PolicyParams, cost_target_vector, nav_loss,
                      policy_forward, select_action)
from ..world import (Episode, EnvGraph, UNREACHABLE, build_graph,
                     generate_scene, render_observation, sample_episode)
from .config import TrainConfig


# ---------------------------------------------------------------------------
# schedule


@dataclass
class DaggerSchedule:
    p0: float = 0.9
    gamma: float = 0.99

    def __post_init__(self):
        if not (0.0 < self.p0 <= 1.0):
            raise ValueError("p0 must be in (0, 1]")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must be in (0, 1)")


def mixing_probability(schedule: DaggerSchedule, k: int) -> float:
    """Probability of drawing the minibatch from the initial pool."""
    if k < 0:
        raise ValueError("iteration index must be >= 0")
    return schedule.p0 * schedule.gamma ** k


# ---------------------------------------------------------------------------
# shared plumbing


def build_graphs(config: TrainConfig, seeds) -> list[EnvGraph]:
    graphs = []
    for i, seed in enumerate(seeds):
        size = config.scene_size(i)
        scene = generate_scene(seed, width=size, height=size,
                               object_density=config.scene_object_density,
                               n_classes=config.map.c_d)
        graphs.append(build_graph(scene, r_env=config.r_env))
    return graphs


def write_log(path, header, rows) -> None:
    """Append-only CSV with deterministic float formatting."""
    import os
    new = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(header)
        for row in rows:
            w.writerow([f"{x:.6f}" if isinstance(x, float) else x for x in row])


# ---------------------------------------------------------------------------
# phase 1: mapper pretraining


@dataclass
class MapperEpisode:
    episode: Episode
    gt_indices: list[tuple[int, int, int]]


def generate_mapper_episodes(config: TrainConfig,
                             graphs: list[EnvGraph]) -> list[MapperEpisode]:
    """Random-walk episodes of both configured lengths, rendered, with
    ground-truth map indices; walks leaving the map extent are resampled."""
    rcfg = config.render_config()
    episodes = []
    base = config.seed * 1_000_000
    counter = 0
    for n, length in ((config.episodes_short, config.episode_len_short),
                      (config.episodes_long, config.episode_len_long)):
        made = 0
        while made < n:
            graph = graphs[counter % len(graphs)]
            ep = sample_episode(graph, "random", 0, length,
                                seed=base + counter, render_cfg=rcfg)
            counter += 1
            try:
                gts = [pose_to_index(ep.poses[0], p, config.r_env, config.map)
                       for p in ep.poses]
            except MapBoundsError:
                continue
            episodes.append(MapperEpisode(ep, gts))
            made += 1
    return episodes


def split_holdout(config: TrainConfig, episodes: list[MapperEpisode]):
    """Last fraction of each length group becomes the held-out set."""
    ns, nl = config.episodes_short, config.episodes_long
    short, long_ = episodes[:ns], episodes[ns:ns + nl]
    hs = max(1, int(round(len(short) * config.holdout_fraction))) if short else 0
    hl = max(1, int(round(len(long_) * config.holdout_fraction))) if long_ else 0
    train = short[:len(short) - hs] + long_[:len(long_) - hl]
    held = short[len(short) - hs:] + long_[len(long_) - hl:]
    return train, held


def _episode_loss_backward(mapper: SpatialMapper, me: MapperEpisode,
                           config: TrainConfig) -> float:
    """Unroll one episode with truncation windows; accumulates gradients."""
    mapper.reset()
    obs_gt = list(zip(me.episode.observations, me.gt_indices))
    total, n_terms = 0.0, 0
    for w0 in range(0, len(obs_gt), config.tbptt):
        window = obs_gt[w0:w0 + config.tbptt]
        with Tape() as tape:
            beliefs, gts = [], []
            for obs, gt in window:
                step = mapper.step(obs)
                if step.bootstrapped:
                    continue
                beliefs.append(step.belief)
                gts.append(gt)
            if not beliefs:
                continue
            loss = localization_loss(beliefs, gts, config.map)
            tape.backward(scale(loss, len(beliefs)))
        mapper.detach_state()
        total += float(loss.data) * len(beliefs)
        n_terms += len(beliefs)
    if n_terms:
        # normalize accumulated gradients to a per-step mean
        for arr in mapper.params.arrays().values():
            if arr.grad is not None:
                arr.grad /= n_terms
    return total / max(n_terms, 1)


def holdout_ape(params: MapperParams, held: list[MapperEpisode],
                config: TrainConfig) -> dict:
    mapper = SpatialMapper(params)
    by_len: dict[int, list[float]] = {}
    for me in held:
        ape = episode_ape(mapper, me.episode.observations, me.gt_indices)
        by_len.setdefault(len(me.episode), []).append(ape)
    out = {length: float(np.mean(v)) for length, v in by_len.items()}
    out["mean"] = float(np.mean([a for v in by_len.values() for a in v]))
    return out


@dataclass
class PretrainResult:
    params: MapperParams
    logs: list[tuple]          # (epoch, train_loss, holdout_ape_mean)
    holdout: list[MapperEpisode]
    diverged: bool = False


def pretrain_mapper(config: TrainConfig, log_path=None,
                    episodes: list[MapperEpisode] | None = None) -> PretrainResult:
    rng = np.random.default_rng(config.seed)
    params = MapperParams.create(rng, config.map, dtype=config.np_dtype)
    if episodes is None:
        graphs = build_graphs(config, config.train_scene_seeds)
        episodes = generate_mapper_episodes(config, graphs)
    train, held = split_holdout(config, episodes)
    opt = Adam(params.arrays(), lr=config.lr_mapper)
    mapper = SpatialMapper(params)
    logs, diverged = [], False
    stable = {k: v.data.copy() for k, v in params.arrays().items()}
    for epoch in range(config.mapper_epochs):
        order = np.random.default_rng(config.seed + 7919 * (epoch + 1)
                                      ).permutation(len(train))
        losses = []
        try:
            for ei in order:
                loss = _episode_loss_backward(mapper, train[ei], config)
                if not np.isfinite(loss):
                    raise NonFiniteError("non-finite localization loss")
                opt.step()
                opt.zero_grad()
                losses.append(loss)
        except NonFiniteError:
            diverged = True
            for k, v in params.arrays().items():
                v.data = stable[k].copy()
            logs.append((epoch, float("nan"), float("nan")))
            break
        stable = {k: v.data.copy() for k, v in params.arrays().items()}
        apes = holdout_ape(params, held, config) if held else {"mean": float("nan")}
        logs.append((epoch, float(np.mean(losses)), apes["mean"]))
        if log_path:
            write_log(log_path, ("epoch", "train_loss", "holdout_ape_mm"),
                      [logs[-1]])
    return PretrainResult(params, logs, held, diverged)


# ---------------------------------------------------------------------------
# phase 2: policy training with dataset aggregation


@dataclass
class PoolEpisode:
    graph_index: int
    target_class: int
    episode: Episode
    targets: list[np.ndarray]   # per visited state, per-action cost labels


def pool_hash(pool: list[PoolEpisode]) -> str:
    h = hashlib.sha256()
    for pe in pool:
        h.update(repr((pe.graph_index, pe.target_class, pe.episode.poses,
                       [int(a) for a in pe.episode.actions],
                       [t.tolist() for t in pe.targets])).encode())
    return h.hexdigest()


def _reachable_target(graph: EnvGraph, rng) -> int | None:
    classes = [c for c in graph.scene.target_classes
               if (graph.distance_table(c) != UNREACHABLE).any()]
    if not classes:
        return None
    return int(classes[rng.integers(0, len(classes))])


def generate_pool(config: TrainConfig, graphs: list[EnvGraph]) -> list[PoolEpisode]:
    rcfg = config.render_config()
    pool = []
    n_expert = int(round(config.pool_size * config.pool_expert_fraction))
    base = config.seed * 1_000_000 + 500_000
    counter = 0
    while len(pool) < config.pool_size:
        kind = "expert" if len(pool) < n_expert else "random"
        seed = base + counter
        counter += 1
        rng = np.random.default_rng(seed)
        gi = int(rng.integers(0, len(graphs)))
        graph = graphs[gi]
        target = _reachable_target(graph, rng)
        if target is None:
            continue
        max_len = config.max_steps if kind == "expert" else config.pool_random_len
        try:
            ep = sample_episode(graph, kind, target, max_len, seed=seed,
                                render_cfg=rcfg)
        except ValueError:
            continue
        if len(ep) == 0:
            continue  # spawned at the goal: nothing to supervise
        targets = [cost_target_vector(graph, p, target) for p in ep.poses[:-1]]
        pool.append(PoolEpisode(gi, target, ep, targets))
    return pool


def rollout_onpolicy(config: TrainConfig, graphs: list[EnvGraph],
                     policy: PolicyParams, mapper: SpatialMapper,
                     seed: int) -> PoolEpisode | None:
    """Unroll the current policy and label every visited state via the
    BFS cost targets; truncated rollouts are labeled too."""
    rcfg = config.render_config()
    rng = np.random.default_rng(seed)
    gi = int(rng.integers(0, len(graphs)))
    graph = graphs[gi]
    target = _reachable_target(graph, rng)
    if target is None:
        return None
    dist = graph.distance_table(target)
    nodes = [p for p in graph.nodes() if dist[p] not in (UNREACHABLE, 0)]
    if not nodes:
        return None
    pose = nodes[int(rng.integers(0, len(nodes)))]
    mapper.reset()
    state, collision = None, 0
    poses, actions, collisions, observations = [pose], [], [], []
    for _ in range(config.onpolicy_len):
        obs = render_observation(graph.scene, pose, rcfg)
        obs.collision_bit = collision
        observations.append(obs)
        step = mapper.step(obs)
        costs, state = policy_forward(
            policy, PolicyInputs(mapper.map_features, step.belief, obs,
                                 target, collision), state)
        action = select_action(costs, rng, policy.config.temperature)
        pose, collision = graph.step(pose, action)
        poses.append(pose)
        actions.append(action)
        collisions.append(collision)
        if dist[pose] == 0:
            break
    observations.append(render_observation(graph.scene, poses[-1], rcfg))
    observations[-1].collision_bit = collisions[-1]
    ep = Episode("onpolicy", target, poses, actions, collisions, seed,
                 observations)
    targets = [cost_target_vector(graph, p, target) for p in poses[:-1]]
    return PoolEpisode(gi, target, ep, targets)


def _nav_episode_backward(pe: PoolEpisode, policy: PolicyParams,
                          mapper: SpatialMapper, config: TrainConfig,
                          drop_rng, weight: float) -> float:
    """One episode's navigation loss and gradient accumulation.

    With the map frozen, the mapper runs outside any tape so no gradients
    reach (or cost memory for) its parameters.
    """
    T = len(pe.targets)
    obs_seq = pe.episode.observations
    mapper.reset()
    state = None
    if config.freeze_map:
        # frozen mapper outputs depend only on the episode: cache across
        # iterations (mapper parameters do not change in this mode)
        frozen = getattr(pe, "_frozen_mapper_outputs", None)
        if frozen is None:
            frozen = []
            for t in range(T):
                step = mapper.step(obs_seq[t])
                frozen.append((Array(mapper.map_features.data.copy()),
                               Array(step.belief.data.copy())))
            pe._frozen_mapper_outputs = frozen
    total, n_windows = 0.0, 0
    for w0 in range(0, T, config.tbptt):
        window = range(w0, min(w0 + config.tbptt, T))
        with Tape() as tape:
            preds, tgts = [], []
            for t in window:
                obs = obs_seq[t]
                if config.freeze_map:
                    map_feat, belief = frozen[t]
                else:
                    step = mapper.step(obs)
                    map_feat, belief = mapper.map_features, step.belief
                costs, state = policy_forward(
                    policy, PolicyInputs(map_feat, belief, obs,
                                         pe.target_class, obs.collision_bit),
                    state, rng=drop_rng, training=True)
                preds.append(costs)
                tgts.append(pe.targets[t])
            loss = nav_loss(preds, tgts)
            tape.backward(scale(loss, weight))
        if not config.freeze_map:
            mapper.detach_state()
        state = (state[0].detach(), state[1].detach())
        total += float(loss.data)
        n_windows += 1
    return total / max(n_windows, 1)


@dataclass
class DaggerResult:
    policy: PolicyParams
    mapper: MapperParams
    logs: list[tuple]   # (iteration, pi_k, source, loss)
    pool_hash_before: str = ""
    pool_hash_after: str = ""


def dagger_train_policy(config: TrainConfig, mapper_params: MapperParams,
                        log_path=None,
                        graphs: list[EnvGraph] | None = None,
                        pool: list[PoolEpisode] | None = None) -> DaggerResult:
    if graphs is None:
        graphs = build_graphs(config, config.train_scene_seeds)
    if pool is None:
        pool = generate_pool(config, graphs)
    if not pool:
        raise ValueError("empty episode pool")
    hash_before = pool_hash(pool)
    rng = np.random.default_rng(config.seed + 31)
    drop_rng = np.random.default_rng(config.seed + 37)
    policy = PolicyParams.create(rng, config.policy, config.map,
                                 dtype=config.np_dtype)
    mapper = SpatialMapper(mapper_params)
    named = dict(policy.arrays())
    if not config.freeze_map:
        named.update({f"mapper.{k}": v
                      for k, v in mapper_params.arrays().items()})
    opt = Adam(named, lr=config.lr_policy)
    schedule = DaggerSchedule(config.p0, config.gamma_decay)
    logs = []
    for k in range(config.dagger_iterations):
        pi = mixing_probability(schedule, k)
        use_pool = bool(rng.random() < pi)
        if use_pool:
            idx = rng.integers(0, len(pool), size=config.batch_size)
            batch = [pool[int(i)] for i in idx]
        else:
            batch = []
            tries = 0
            while len(batch) < config.batch_size and tries < 20 * config.batch_size:
                pe = rollout_onpolicy(config, graphs, policy, mapper,
                                      seed=config.seed * 1_000_000 + 800_000
                                      + k * 1000 + tries)
                tries += 1
                if pe is not None and pe.targets:
                    batch.append(pe)
        losses = [
            _nav_episode_backward(pe, policy, mapper, config, drop_rng,
                                  weight=1.0 / len(batch))
            for pe in batch
        ]
        opt.step()
        opt.zero_grad()
        row = (k, pi, "pool" if use_pool else "onpolicy", float(np.mean(losses)))
        logs.append(row)
        if log_path:
            write_log(log_path, ("iteration", "pi_k", "source", "loss"), [row])
    return DaggerResult(policy, mapper_params, logs, hash_before,
                        pool_hash(pool))


# ---------------------------------------------------------------------------
# ablations


MODALITY_SETS = {
    "rgb": ("rgb",),
    "sseg-det": ("det", "seg"),
    "rgb-sseg-det": ("rgb", "det", "seg"),
}


def ablation_variants(config: TrainConfig) -> list[tuple[str, TrainConfig]]:
    """The 3 x 2 x 2 grid: modalities x {fine-tune, frozen} x {ego, no-ego}."""
    from dataclasses import replace
    variants = []
    for mod_tag, modalities in MODALITY_SETS.items():
        for freeze, f_tag in ((False, "ft"), (True, "nf")):
            for use_ego, e_tag in ((True, "ego"), (False, "ne")):
                cfg = replace(
                    config,
                    map=replace(config.map, modalities=tuple(modalities)),
                    policy=replace(config.policy, use_ego=use_ego),
                    freeze_map=freeze)
                variants.append((f"{mod_tag}-{f_tag}-{e_tag}", cfg))
    return variants


def ablation_matrix(config: TrainConfig, out_dir) -> dict[str, DaggerResult]:
    """Train every variant; mapper pretraining is shared per modality set."""
    from pathlib import Path
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pretrained: dict[tuple, PretrainResult] = {}
    results = {}
    for tag, cfg in ablation_variants(config):
        mods = cfg.map.modalities
        if mods not in pretrained:
            pretrained[mods] = pretrain_mapper(
                cfg, log_path=out / f"pretrain-{'-'.join(mods)}.csv")
        base = copy.deepcopy(pretrained[mods].params)
        res = dagger_train_policy(cfg, base, log_path=out / f"dagger-{tag}.csv")
        from ..mapper import save_mapper
        from ..policy import save_policy
        save_mapper(out / f"mapper-{tag}.ckpt", res.mapper)
        save_policy(out / f"policy-{tag}.ckpt", res.policy)
        results[tag] = res
    return results
