"""Navigation policy: cost prediction, supervision labels, loss and sampling."""

import numpy as np
import pytest

from semnav.autodiff import Array, Tape
from semnav.mapper import ProjectionConfig
from semnav.policy import (PolicyConfig, PolicyInputs, PolicyParams,
                           action_probabilities, cost_target_vector,
                           cost_targets, ego_stack, load_policy, nav_loss,
                           policy_forward, save_policy, select_action)
from semnav.world import (ACTIONS, Action, RenderConfig, bfs_from_source,
                          build_graph, generate_scene, render_observation)

MAP_CFG = ProjectionConfig(u=15, v=15, u_prime=9, v_prime=9, r=4,
                           l_d=4, l_s=4, modalities=("det", "seg"))
POL_CFG = PolicyConfig(hidden=16, embed=16, map_conv_channels=4,
                       ego_channels=(4, 4))


def make_inputs(rng, target=0, collision=0, use_scene_obs=True):
    scene = generate_scene(0, 8, 8)
    graph = build_graph(scene, 4)
    obs = render_observation(scene, graph.nodes()[0], RenderConfig(r_env=4))
    return PolicyInputs(
        map_features=Array(rng.normal(size=(MAP_CFG.u, MAP_CFG.v, MAP_CFG.n))),
        belief=Array(np.full((MAP_CFG.u, MAP_CFG.v, MAP_CFG.r),
                             1.0 / (MAP_CFG.u * MAP_CFG.v * MAP_CFG.r))),
        observation=obs,
        target_class=target,
        collision_bit=collision)


# -- forward pass ------------------------------------------------------------


def test_forward_shapes_and_state():
    rng = np.random.default_rng(0)
    params = PolicyParams.create(rng, POL_CFG, MAP_CFG)
    costs, (h, c) = policy_forward(params, make_inputs(rng), None)
    assert costs.shape == (3,)
    assert h.shape == (POL_CFG.hidden,) and c.shape == (POL_CFG.hidden,)


def test_forward_deterministic_in_eval_mode():
    params = PolicyParams.create(np.random.default_rng(1), POL_CFG, MAP_CFG)
    inp = make_inputs(np.random.default_rng(2))
    a, _ = policy_forward(params, inp, None)
    b, _ = policy_forward(params, inp, None)
    assert np.array_equal(a.data, b.data)


def test_forward_sensitive_to_target_class():
    params = PolicyParams.create(np.random.default_rng(3), POL_CFG, MAP_CFG)
    rng = np.random.default_rng(4)
    m = Array(rng.normal(size=(MAP_CFG.u, MAP_CFG.v, MAP_CFG.n)))
    a, _ = policy_forward(params, make_inputs(np.random.default_rng(4), target=0), None)
    b, _ = policy_forward(params, make_inputs(np.random.default_rng(4), target=3), None)
    assert not np.allclose(a.data, b.data)


def test_forward_collision_bit_changes_costs():
    params = PolicyParams.create(np.random.default_rng(5), POL_CFG, MAP_CFG)
    a, _ = policy_forward(params, make_inputs(np.random.default_rng(6), collision=0), None)
    b, _ = policy_forward(params, make_inputs(np.random.default_rng(6), collision=1), None)
    assert not np.allclose(a.data, b.data)


def test_no_ego_variant_ignores_observation():
    cfg = PolicyConfig(hidden=16, embed=16, map_conv_channels=4,
                       ego_channels=(4, 4), use_ego=False)
    params = PolicyParams.create(np.random.default_rng(7), cfg, MAP_CFG)
    inp_a = make_inputs(np.random.default_rng(8))
    inp_b = make_inputs(np.random.default_rng(8))
    inp_b.observation.rgb[:] = 0.0
    inp_b.observation.detections[:] = 0.0
    inp_b.observation.segmentation[:] = 0
    a, _ = policy_forward(params, inp_a, None)
    b, _ = policy_forward(params, inp_b, None)
    assert np.array_equal(a.data, b.data)


def test_ego_stack_layout():
    obs = make_inputs(np.random.default_rng(9)).observation
    stack = ego_stack(obs, MAP_CFG.c_s, MAP_CFG.c_d)
    h, w = obs.segmentation.shape
    assert stack.shape == (h, w, 3 + MAP_CFG.c_s + MAP_CFG.c_d)
    assert np.allclose(stack[:, :, 3:3 + MAP_CFG.c_s].sum(axis=2), 1.0)
    assert np.array_equal(stack[:, :, :3], obs.rgb)


def test_dropout_requires_rng_in_training():
    params = PolicyParams.create(np.random.default_rng(10), POL_CFG, MAP_CFG)
    with pytest.raises(ValueError):
        policy_forward(params, make_inputs(np.random.default_rng(11)), None,
                       training=True)


# -- supervision labels ------------------------------------------------------


def graph_of(seed=1, size=10):
    return build_graph(generate_scene(seed, size, size), 4)


def find_pose(graph, target, pred):
    dist = graph.distance_table(target)
    for pose in graph.nodes():
        if pred(pose, dist):
            return pose
    raise AssertionError("no pose found matching the predicate")


def test_cost_target_goal_is_minus_two():
    g = graph_of()
    dist = g.distance_table(0)
    # a pose whose rotation leads to distance 0
    for pose in g.nodes():
        for a in (Action.ROTATE_LEFT, Action.ROTATE_RIGHT):
            nxt, _ = g.step(pose, a)
            if dist[nxt] == 0:
                assert cost_targets(g, pose, a, 0) == -2.0
                return
    raise AssertionError("no goal-adjacent pose in scene")


def test_cost_target_collision_is_plus_one():
    g = graph_of()
    dist = g.distance_table(0)
    for pose in g.nodes():
        nxt, collided = g.step(pose, Action.MOVE_FORWARD)
        if collided and dist[nxt] != 0 and dist[pose] > 0:
            assert cost_targets(g, pose, Action.MOVE_FORWARD, 0) == 1.0
            return
    raise AssertionError("no blocked forward move in scene")


def test_cost_target_rotation_toward_goal_is_minus_one():
    g = graph_of()
    dist = g.distance_table(0)
    for pose in g.nodes():
        if dist[pose] <= 1:
            continue
        for a in (Action.ROTATE_LEFT, Action.ROTATE_RIGHT):
            nxt, _ = g.step(pose, a)
            if dist[nxt] == dist[pose] - 1 and dist[nxt] != 0:
                assert cost_targets(g, pose, a, 0) == -1.0
                return
    raise AssertionError("no distance-reducing rotation found")


def test_cost_target_range_and_bfs_consistency():
    # every label across several scenes lies in {-2, -1, 0, 1} and matches a
    # label recomputed from an independent single-source BFS
    for seed in range(3):
        g = graph_of(seed, 10)
        for target in range(2):
            dist = g.distance_table(target)
            for pose in list(g.nodes())[::7]:
                if dist[pose] <= 0:
                    continue
                for a in ACTIONS:
                    c = cost_targets(g, pose, a, target)
                    assert c in (-2.0, -1.0, 0.0, 1.0)
                    nxt, collided = g.step(pose, a)
                    d_here = bfs_from_source(g, pose, target)
                    d_next = bfs_from_source(g, nxt, target)
                    if d_next == 0:
                        assert c == -2.0
                    elif collided:
                        assert c == 1.0
                    else:
                        assert c == float(np.sign(d_next - d_here))


def test_cost_target_vector_order():
    g = graph_of()
    dist = g.distance_table(0)
    pose = next(p for p in g.nodes() if dist[p] > 1)
    vec = cost_target_vector(g, pose, 0)
    assert vec.shape == (3,)
    assert np.array_equal(vec, [cost_targets(g, pose, a, 0) for a in ACTIONS])


def test_cost_target_unreachable_raises():
    g = graph_of()
    # distance 0 poses are fine; fabricate unreachability via a bogus class is
    # not possible, so check the contract with a scene lacking the target
    dist = g.distance_table(0)
    assert all(dist[p] >= 0 for p in g.nodes())


# -- loss ---------------------------------------------------------------


def test_nav_loss_zero_on_exact():
    preds = [Array(np.array([1.0, -1.0, 0.0]))]
    targets = [np.array([1.0, -1.0, 0.0])]
    assert nav_loss(preds, targets).data == 0.0


def test_nav_loss_hand_value():
    preds = [Array(np.array([0.0, 0.0, 0.0]))]
    targets = [np.array([-2.0, 1.0, -1.0])]
    # mean |error| over 3 actions: (2 + 1 + 1) / 3
    assert np.isclose(nav_loss(preds, targets).data, 4.0 / 3.0)


def test_nav_loss_mean_over_steps():
    preds = [Array(np.zeros(3)), Array(np.zeros(3))]
    targets = [np.array([3.0, 0.0, 0.0]), np.array([0.0, 0.0, 0.0])]
    assert np.isclose(nav_loss(preds, targets).data, 0.5)


def test_nav_loss_step_permutation_invariant():
    rng = np.random.default_rng(12)
    preds = [Array(rng.normal(size=3)) for _ in range(4)]
    targets = [rng.normal(size=3) for _ in range(4)]
    a = nav_loss(preds, targets).data
    order = [2, 0, 3, 1]
    b = nav_loss([preds[i] for i in order], [targets[i] for i in order]).data
    assert np.isclose(a, b)


def test_nav_loss_validates_lengths():
    with pytest.raises(ValueError):
        nav_loss([Array(np.zeros(3))], [])
    with pytest.raises(ValueError):
        nav_loss([], [])


def test_nav_loss_gradient_flows_to_all_pathways():
    params = PolicyParams.create(np.random.default_rng(13), POL_CFG, MAP_CFG)
    inp = make_inputs(np.random.default_rng(14))
    with Tape() as tape:
        costs, _ = policy_forward(params, inp, None)
        loss = nav_loss([costs], [np.array([-1.0, 0.0, 1.0])])
        tape.backward(loss)
    grads = {k: a.grad for k, a in params.arrays().items()}
    for key in ("map_conv.kernel", "ego_conv.0.kernel", "target_fc.w",
                "head.w", "cell.w_i"):
        assert grads[key] is not None and np.abs(grads[key]).max() > 0, key


def test_nav_loss_finite_difference():
    params = PolicyParams.create(np.random.default_rng(15), POL_CFG, MAP_CFG)
    inp = make_inputs(np.random.default_rng(16))
    target = [np.array([-2.0, 0.5, 1.0])]

    def run():
        costs, _ = policy_forward(params, inp, None)
        return nav_loss([costs], target)

    with Tape() as tape:
        tape.backward(run())
    g = params.head[0].grad.copy()
    arr = params.head[0]
    rng = np.random.default_rng(17)
    for _ in range(3):
        idx = tuple(rng.integers(0, s) for s in arr.shape)
        eps, old = 1e-6, arr.data[idx]
        arr.data[idx] = old + eps
        lp = run().data
        arr.data[idx] = old - eps
        lm = run().data
        arr.data[idx] = old
        fd = (lp - lm) / (2 * eps)
        assert abs(fd - g[idx]) < 1e-5 * max(1.0, abs(fd))


# -- action sampling ----------------------------------------------------


def test_action_probabilities_softmax_values():
    probs = action_probabilities(np.array([1.0, 0.0, -1.0]))
    e = np.exp([-1.0, 0.0, 1.0])
    assert np.allclose(probs, e / e.sum())
    assert np.isclose(probs[2], 0.6652409557748219)


def test_action_probabilities_shift_invariant():
    a = action_probabilities(np.array([3.0, 1.0, 2.0]))
    b = action_probabilities(np.array([103.0, 101.0, 102.0]))
    assert np.max(np.abs(a - b)) < 1e-12


def test_action_probabilities_uniform_on_ties():
    assert np.allclose(action_probabilities(np.zeros(3)), 1.0 / 3.0)


def test_select_action_prefers_cheapest():
    rng = np.random.default_rng(18)
    costs = np.array([-5.0, 5.0, 5.0])
    draws = [select_action(costs, rng, temperature=0.1) for _ in range(50)]
    assert all(a == Action.MOVE_FORWARD for a in draws)


def test_select_action_rejects_non_finite():
    rng = np.random.default_rng(19)
    with pytest.raises(ValueError):
        select_action(np.array([np.nan, 0.0, 0.0]), rng)


def test_select_action_deterministic_given_rng():
    costs = np.array([0.3, -0.2, 0.1])
    a = [select_action(costs, np.random.default_rng(20)) for _ in range(5)]
    b = [select_action(costs, np.random.default_rng(20)) for _ in range(5)]
    assert a == b


# -- persistence -------------------------------------------------------


def test_policy_save_load_round_trip(tmp_path):
    params = PolicyParams.create(np.random.default_rng(21), POL_CFG, MAP_CFG)
    params.bn_state.running_mean[:] = 0.5
    path = tmp_path / "policy.ckpt"
    save_policy(path, params)
    loaded = load_policy(path)
    assert loaded.config == POL_CFG
    for name, arr in params.arrays().items():
        assert np.allclose(loaded.arrays()[name].data, arr.data, atol=1e-7)
    assert np.allclose(loaded.bn_state.running_mean, 0.5, atol=1e-7)


def test_loaded_policy_same_costs(tmp_path):
    params = PolicyParams.create(np.random.default_rng(22), POL_CFG, MAP_CFG)
    path = tmp_path / "policy.ckpt"
    save_policy(path, params)
    loaded = load_policy(path)
    inp = make_inputs(np.random.default_rng(23))
    a, _ = policy_forward(params, inp, None)
    b, _ = policy_forward(loaded, inp, None)
    assert np.allclose(a.data, b.data, atol=1e-6)
