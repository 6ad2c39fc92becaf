"""Command-line interface."""

from __future__ import annotations

import csv
from pathlib import Path

import click
import numpy as np

from .evaluation import (LearnedController, LocalizationReport,
                         NonLearningController, RandomController,
                         episode_ape, evaluate_navigation, export_episode_records,
                         export_localization, export_navigation,
                         uniform_baseline_ape)
from .mapper import (MapBoundsError, SpatialMapper, load_mapper, pose_to_index,
                     save_mapper)
from .policy import load_policy, save_policy
from .training import (TrainConfig, ablation_matrix, dagger_train_policy,
                       pretrain_mapper)
from .world import build_graph, generate_scene, load_scene, sample_episode, save_scene


@click.group()
def main():
    """Semantic mapping and target-driven navigation in procedural gridworlds."""


@main.command("gen-scenes")
@click.option("--count", type=int, default=1, show_default=True)
@click.option("--size", type=int, default=16, show_default=True,
              help="Scene width and height in cells.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def gen_scenes(count, size, seed, out_dir):
    """Generate procedural scenes into a directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        scene = generate_scene(seed + i, width=size, height=size)
        path = out / f"scene-{seed + i:05d}.txt"
        save_scene(scene, path)
        click.echo(f"wrote {path}")


def _load_scene_dir(scenes_dir, r_env):
    paths = sorted(Path(scenes_dir).glob("*.txt"))
    if not paths:
        raise click.ClickException(f"no scene files in {scenes_dir}")
    return [build_graph(load_scene(p), r_env=r_env) for p in paths]


@main.command("train-mapper")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), default="mapper.ckpt",
              show_default=True)
@click.option("--log", "log_path", type=click.Path(), default=None)
def train_mapper(config_path, out_path, log_path):
    """Pretrain the spatial mapper with the localization objective."""
    config = TrainConfig.load(config_path)
    result = pretrain_mapper(config, log_path=log_path)
    if result.diverged:
        raise click.ClickException(
            f"training diverged; last stable checkpoint saved to {out_path}")
    save_mapper(out_path, result.params)
    final = result.logs[-1] if result.logs else (None, float("nan"), float("nan"))
    click.echo(f"saved {out_path} (final loss {final[1]:.4f}, "
               f"holdout APE {final[2]:.1f} mm)")


@main.command("train-policy")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--mapper", "mapper_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), default="policy.ckpt",
              show_default=True)
@click.option("--log", "log_path", type=click.Path(), default=None)
def train_policy(config_path, mapper_path, out_path, log_path):
    """Train the navigation policy with online dataset aggregation."""
    config = TrainConfig.load(config_path)
    mapper_params = load_mapper(mapper_path, dtype=config.np_dtype)
    result = dagger_train_policy(config, mapper_params, log_path=log_path)
    save_policy(out_path, result.policy)
    save_mapper(str(out_path) + ".mapper", result.mapper)
    click.echo(f"saved {out_path} (final loss {result.logs[-1][3]:.4f})")


@main.command("ablate")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False),
              default="ablations", show_default=True)
def ablate(config_path, out_dir):
    """Train the full 12-variant ablation grid."""
    config = TrainConfig.load(config_path)
    results = ablation_matrix(config, out_dir)
    for tag in results:
        click.echo(f"trained {tag}")


@main.command("eval-loc")
@click.option("--mapper", "mapper_path", type=click.Path(exists=True), required=True)
@click.option("--scenes", "scenes_dir", type=click.Path(exists=True), required=True)
@click.option("--len", "episode_len", type=click.Choice(["5", "20"]), default="5",
              show_default=True)
@click.option("--episodes", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), required=True,
              help="Training config providing render settings.")
@click.option("--out", "out_path", type=click.Path(), default=None)
def eval_loc(mapper_path, scenes_dir, episode_len, episodes, seed, config_path,
             out_path):
    """Localization APE of a trained mapper on random walks."""
    config = TrainConfig.load(config_path)
    params = load_mapper(mapper_path, dtype=config.np_dtype)
    graphs = _load_scene_dir(scenes_dir, config.r_env)
    rcfg = config.render_config()
    length = int(episode_len)
    mapper = SpatialMapper(params)
    apes, gt_all, made, counter = [], [], 0, 0
    while made < episodes:
        graph = graphs[counter % len(graphs)]
        ep = sample_episode(graph, "random", 0, length, seed=seed + counter,
                            render_cfg=rcfg)
        counter += 1
        try:
            gts = [pose_to_index(ep.poses[0], p, config.r_env, params.config)
                   for p in ep.poses]
        except MapBoundsError:
            continue
        apes.append(episode_ape(mapper, ep.observations, gts))
        gt_all.extend(gts)
        made += 1
    baseline = uniform_baseline_ape(params.config, gt_all)
    report = LocalizationReport("eval", length, apes, baseline)
    click.echo(f"APE-{length}: {report.mean_ape:.1f} mm over {episodes} episodes "
               f"(uniform baseline {baseline:.1f} mm)")
    if out_path:
        export_localization([report], out_path)


def _run_nav(controller, variant, scenes_dir, episodes, seed, config,
             out_path, traj_path):
    graphs = _load_scene_dir(scenes_dir, config.r_env)
    report = evaluate_navigation(controller, graphs, episodes, seed,
                                 config.render_config(), variant=variant,
                                 max_steps=config.max_steps,
                                 keep_poses=traj_path is not None)
    ratio = "n/a" if report.mean_ratio is None else f"{report.mean_ratio:.3f}"
    click.echo(f"{variant}: success {report.success_rate:.1f}% "
               f"ratio {ratio} ({report.n_episodes} episodes, "
               f"{report.n_skipped} skipped)")
    if out_path:
        export_navigation([report], out_path)
    if traj_path:
        export_episode_records(report, traj_path)


@main.command("eval-nav")
@click.option("--policy", "policy_path", type=click.Path(exists=True), required=True)
@click.option("--mapper", "mapper_path", type=click.Path(exists=True), required=True)
@click.option("--scenes", "scenes_dir", type=click.Path(exists=True), required=True)
@click.option("--episodes", type=int, default=200, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--trajectories", "traj_path", type=click.Path(), default=None)
def eval_nav(policy_path, mapper_path, scenes_dir, episodes, seed, config_path,
             out_path, traj_path):
    """Navigation success rate and path-length ratio of a trained policy."""
    config = TrainConfig.load(config_path)
    controller = LearnedController(load_policy(policy_path, dtype=config.np_dtype),
                                   load_mapper(mapper_path, dtype=config.np_dtype))
    _run_nav(controller, "learned", scenes_dir, episodes, seed, config,
             out_path, traj_path)


@main.command("baseline")
@click.argument("kind", type=click.Choice(["random", "nonlearning"]))
@click.option("--scenes", "scenes_dir", type=click.Path(exists=True), required=True)
@click.option("--episodes", type=int, default=200, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--trajectories", "traj_path", type=click.Path(), default=None)
def baseline(kind, scenes_dir, episodes, seed, config_path, out_path, traj_path):
    """Random-walk or detect-then-plan baseline."""
    config = TrainConfig.load(config_path)
    controller = (RandomController() if kind == "random"
                  else NonLearningController())
    _run_nav(controller, kind, scenes_dir, episodes, seed, config,
             out_path, traj_path)


@main.command("report")
@click.option("--in", "in_dir", type=click.Path(exists=True, file_okay=False),
              required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def report(in_dir, out_path):
    """Merge metric CSVs from a directory into one summary table."""
    rows = []
    for path in sorted(Path(in_dir).glob("*.csv")):
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                row = {"source": path.name, **row}
                rows.append(row)
    columns = ["source"]
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with open(out_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, restval="")
        writer.writeheader()
        writer.writerows(rows)
    click.echo(f"wrote {out_path} ({len(rows)} rows)")


if __name__ == "__main__":
    main()
