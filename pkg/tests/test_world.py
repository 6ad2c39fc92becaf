"""Scenes, pose graph, shortest paths and episode sampling."""

import collections

import numpy as np
import pytest

from semnav.world import (ACTIONS, Action, UNREACHABLE, bfs_from_source,
                          build_graph, expert_action, forward_delta,
                          generate_scene, load_scene, sample_episode,
                          save_scene)


def test_scene_determinism():
    a = generate_scene(3, width=12, height=12)
    b = generate_scene(3, width=12, height=12)
    assert np.array_equal(a.walls, b.walls)
    assert a.objects == b.objects


def test_scene_every_target_class_reachable():
    scene = generate_scene(1, width=16, height=16, n_classes=5)
    graph = build_graph(scene, r_env=4)
    frees = scene.free_cells()
    for cls in scene.target_classes:
        dist = graph.distance_table(cls)
        for (ix, iz) in frees:
            assert any(dist[ix, iz, o] != UNREACHABLE for o in range(4)), \
                f"class {cls} unreachable from {(ix, iz)}"


def test_scene_density_zero_all_free_interior():
    scene = generate_scene(0, width=8, height=8, object_density=0.0,
                           n_classes=0, target_classes=())
    assert not scene.objects
    interior = scene.walls[1:-1, 1:-1]
    assert not interior.any()


def test_scene_free_space_connected():
    for seed in range(5):
        scene = generate_scene(seed, width=14, height=14)
        frees = scene.free_cells()
        seen = {frees[0]}
        queue = collections.deque([frees[0]])
        free_set = set(frees)
        while queue:
            x, z = queue.popleft()
            for dx, dz in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nxt = (x + dx, z + dz)
                if nxt in free_set and nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        assert seen == free_set


def test_scene_serialization_round_trip(tmp_path):
    scene = generate_scene(9, width=13, height=11)
    path = tmp_path / "scene.txt"
    save_scene(scene, path)
    loaded = load_scene(path)
    assert np.array_equal(loaded.walls, scene.walls)
    assert loaded.objects == scene.objects
    assert loaded.seed == scene.seed
    assert loaded.target_classes == scene.target_classes


def test_graph_node_count_open_room():
    scene = generate_scene(0, width=8, height=8, object_density=0.0,
                           n_classes=0, target_classes=())
    graph = build_graph(scene, r_env=4)
    assert graph.n_nodes() == 36 * 4  # 6x6 free interior, 4 orientations


def test_forward_into_wall_collides():
    scene = generate_scene(0, width=8, height=8, object_density=0.0,
                           n_classes=0, target_classes=())
    graph = build_graph(scene, r_env=4)
    pose = (1, 1, 2)  # facing -x, wall at x=0
    nxt, collided = graph.step(pose, Action.MOVE_FORWARD)
    assert collided == 1 and nxt == pose


def test_rotations_never_collide_and_invert():
    scene = generate_scene(4, width=10, height=10)
    graph = build_graph(scene, r_env=4)
    for pose in graph.nodes()[::7]:
        left, c1 = graph.step(pose, Action.ROTATE_LEFT)
        back, c2 = graph.step(left, Action.ROTATE_RIGHT)
        assert c1 == 0 and c2 == 0 and back == pose


def test_random_steps_stay_on_graph():
    scene = generate_scene(5, width=10, height=10)
    graph = build_graph(scene, r_env=4)
    rng = np.random.default_rng(0)
    pose = graph.nodes()[0]
    for _ in range(100):
        pose, _ = graph.step(pose, ACTIONS[rng.integers(0, 3)])
        assert graph.is_node(pose)


def test_forward_delta_r12():
    # 30-degree headings move to the nearest neighbor cell
    assert forward_delta(0, 12) == (1, 0)
    assert forward_delta(1, 12) == (1, 1)
    assert forward_delta(3, 12) == (0, 1)
    assert forward_delta(6, 12) == (-1, 0)


def test_distance_zero_at_goal_and_one_step():
    scene = generate_scene(2, width=12, height=12)
    graph = build_graph(scene, r_env=4)
    cls = scene.target_classes[0]
    dist = graph.distance_table(cls)
    goals = graph.goal_poses(cls)
    assert goals
    for g in goals:
        assert dist[g] == 0
    # a predecessor of a goal via MoveForward has distance 1 unless a goal itself
    found = False
    for pose in graph.nodes():
        nxt, col = graph.step(pose, Action.MOVE_FORWARD)
        if not col and dist[nxt] == 0 and dist[pose] != 0:
            assert dist[pose] == 1
            found = True
    assert found


def test_distance_table_matches_per_source_bfs():
    scene = generate_scene(6, width=16, height=16)
    graph = build_graph(scene, r_env=4)
    cls = scene.target_classes[1]
    dist = graph.distance_table(cls)
    rng = np.random.default_rng(1)
    nodes = graph.nodes()
    for i in rng.choice(len(nodes), size=25, replace=False):
        pose = nodes[int(i)]
        assert dist[pose] == bfs_from_source(graph, pose, cls)


def test_bellman_property():
    scene = generate_scene(7, width=12, height=12)
    graph = build_graph(scene, r_env=4)
    cls = scene.target_classes[0]
    dist = graph.distance_table(cls)
    goals = set(graph.goal_poses(cls))
    for pose in graph.nodes():
        d = dist[pose]
        if d in (UNREACHABLE, 0):
            continue
        succ = []
        for a in ACTIONS:
            nxt, col = graph.step(pose, a)
            if not col and dist[nxt] != UNREACHABLE:
                succ.append(dist[nxt])
        assert d == 1 + min(succ)
    for g in goals:
        assert dist[g] == 0


def test_bfs_step_property_directional():
    """Taking one action can reduce the distance by at most 1; rotation
    edges (which are invertible) also increase it by at most 1."""
    scene = generate_scene(8, width=12, height=12)
    graph = build_graph(scene, r_env=4)
    cls = scene.target_classes[2]
    dist = graph.distance_table(cls)
    for pose in graph.nodes():
        if dist[pose] == UNREACHABLE:
            continue
        for a in ACTIONS:
            nxt, col = graph.step(pose, a)
            if col or dist[nxt] == UNREACHABLE:
                continue
            assert dist[pose] - dist[nxt] <= 1
            if a != Action.MOVE_FORWARD:
                assert dist[pose] - dist[nxt] >= -1


def test_expert_episode_length_and_monotone_distance():
    scene = generate_scene(10, width=12, height=12)
    graph = build_graph(scene, r_env=4)
    cls = scene.target_classes[0]
    dist = graph.distance_table(cls)
    ep = sample_episode(graph, "expert", cls, 200, seed=3)
    assert len(ep) == dist[ep.poses[0]]
    ds = [dist[p] for p in ep.poses]
    assert all(a - b == 1 for a, b in zip(ds, ds[1:]))
    assert ds[-1] == 0


def test_random_episode_exact_length_and_determinism():
    scene = generate_scene(11, width=10, height=10)
    graph = build_graph(scene, r_env=4)
    a = sample_episode(graph, "random", 0, 5, seed=42)
    b = sample_episode(graph, "random", 0, 5, seed=42)
    assert len(a) == 5
    assert a.poses == b.poses and a.actions == b.actions


def test_expert_unreachable_target_rejected():
    scene = generate_scene(12, width=10, height=10)
    graph = build_graph(scene, r_env=4)
    with pytest.raises(ValueError):
        expert_action(graph, graph.nodes()[0], target_class=99)
