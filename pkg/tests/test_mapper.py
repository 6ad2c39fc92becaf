"""Spatial mapper: embedding, localization, registration and map update."""

import numpy as np
import pytest

from semnav.autodiff import (Array, Tape, correlate_stack, grad_check,
                             place_weighted, rotate_stack, sum_)
from semnav.mapper import (MapBoundsError, MapperParams, ProjectionConfig,
                           SpatialMapper, index_to_world, load_mapper,
                           localization_loss, pose_onehot, pose_to_index,
                           relative_pose_mm, save_mapper)
from semnav.world import (Observation, RenderConfig, build_graph,
                          generate_scene, render_observation, sample_episode)

SMALL = ProjectionConfig(u=15, v=15, u_prime=9, v_prime=9, r=4,
                         l_d=4, l_s=4, modalities=("det", "seg"))


def make_obs(rng, h=16, w=24, depth=None, r_env=4):
    cfg = RenderConfig(image_h=h, image_w=w, r_env=r_env)
    if depth is None:
        depth = rng.uniform(200.0, 2000.0, (h, w))
    return Observation(
        rgb=rng.uniform(0, 1, (h, w, 3)),
        depth=depth,
        segmentation=rng.integers(0, 8, (h, w)).astype(np.int16),
        detections=rng.integers(0, 2, (5, h, w)).astype(np.float64),
        collision_bit=0,
        fx=(w / 2), fy=(w / 2), cx=(w - 1) / 2, cy=(h - 1) / 2,
        max_range_mm=4500.0)


def scene_obs(seed=0, size=8, pose_idx=0, r_env=4):
    scene = generate_scene(seed, size, size)
    graph = build_graph(scene, r_env)
    pose = graph.nodes()[pose_idx]
    return render_observation(scene, pose, RenderConfig(r_env=r_env))


# -- pose bookkeeping -------------------------------------------------------


def test_relative_pose_at_origin():
    assert relative_pose_mm((3, 4, 0), (3, 4, 0), 4, 300.0) == (0.0, 0.0, 0)


def test_relative_pose_one_step_forward():
    # start faces +x (bin 0): one cell forward is camera-frame z_rel = +300
    x, z, b = relative_pose_mm((3, 4, 0), (4, 4, 0), 4, 300.0)
    assert abs(x) < 1e-9 and abs(z - 300.0) < 1e-9 and b == 0


def test_relative_pose_rotation_bin():
    _, _, b = relative_pose_mm((3, 4, 3), (3, 4, 1), 4, 300.0)
    assert b == 2


def test_pose_to_index_center():
    cfg = SMALL
    assert pose_to_index((5, 5, 0), (5, 5, 0), 4, cfg) == (*cfg.center, 0)


def test_pose_index_world_round_trip():
    cfg = SMALL
    start = (6, 6, 1)
    for pose in [(6, 6, 1), (6, 7, 1), (7, 6, 2), (4, 5, 0), (8, 8, 3)]:
        idx = pose_to_index(start, pose, 4, cfg)
        x_mm, z_mm, _ = index_to_world(idx, cfg)
        xr, zr, _ = relative_pose_mm(start, pose, 4, cfg.x_b)
        assert abs(x_mm - xr) <= cfg.x_b / 2 + 1e-9
        assert abs(z_mm - zr) <= cfg.z_b / 2 + 1e-9


def test_pose_outside_map_raises():
    cfg = SMALL
    with pytest.raises(MapBoundsError):
        pose_to_index((0, 0, 0), (40, 0, 0), 4, cfg)


def test_pose_onehot_single_entry():
    t = pose_onehot((2, 3, 1), SMALL)
    assert t.sum() == 1.0 and t[2, 3, 1] == 1.0


# -- embedding --------------------------------------------------------------


def test_unobserved_frame_embeds_to_zero():
    rng = np.random.default_rng(0)
    obs = make_obs(rng, depth=np.full((16, 24), 4500.0))
    mapper = SpatialMapper(MapperParams.create(rng, SMALL))
    ego = mapper.embed(obs)
    assert np.all(ego.data == 0.0)


def test_embedding_concat_layout():
    # zeroing one modality's grid leaves the other modality's slice intact
    rng = np.random.default_rng(1)
    obs = make_obs(rng)
    params = MapperParams.create(np.random.default_rng(2), SMALL)
    full = SpatialMapper(params).embed(obs).data

    obs_nodet = make_obs(np.random.default_rng(1))
    obs_nodet.detections[:] = 0.0
    part = SpatialMapper(params).embed(obs_nodet).data
    l_d = SMALL.embedding_dim("det")
    assert np.allclose(full[:, :, l_d:], part[:, :, l_d:])
    assert not np.allclose(full[:, :, :l_d], part[:, :, :l_d])


def test_embed_matches_rendered_scene_determinism():
    params = MapperParams.create(np.random.default_rng(3), SMALL)
    a = SpatialMapper(params).embed(scene_obs()).data
    b = SpatialMapper(params).embed(scene_obs()).data
    assert np.array_equal(a, b)


# -- localization -----------------------------------------------------------


def test_localize_uniform_on_empty_map():
    rng = np.random.default_rng(4)
    mapper = SpatialMapper(MapperParams.create(rng, SMALL))
    stack = rotate_stack(Array(rng.normal(size=(9, 9, SMALL.n))), SMALL.r)
    belief = mapper.localize(stack).data
    n_states = SMALL.u * SMALL.v * SMALL.r
    assert np.allclose(belief, 1.0 / n_states)


def test_localize_peaks_at_pasted_pose():
    rng = np.random.default_rng(5)
    cfg = SMALL
    mapper = SpatialMapper(MapperParams.create(rng, cfg))
    ego = Array(rng.normal(size=(cfg.u_prime, cfg.v_prime, cfg.n)))
    stack = rotate_stack(ego, cfg.r)
    target = (7, 4, 0)
    mapper.map_features = Array(
        place_weighted(stack, Array(pose_onehot(target, cfg))).data)
    belief = mapper.localize(stack).data
    assert np.unravel_index(belief.argmax(), belief.shape) == target
    assert np.isclose(belief.sum(), 1.0)


def test_localize_translation_equivariance():
    rng = np.random.default_rng(6)
    cfg = SMALL
    mapper = SpatialMapper(MapperParams.create(rng, cfg))
    ego = Array(rng.normal(size=(cfg.u_prime, cfg.v_prime, cfg.n)))
    stack = rotate_stack(ego, cfg.r)
    for target in [(6, 6, 0), (7, 8, 0), (9, 5, 0)]:
        mapper.map_features = Array(
            place_weighted(stack, Array(pose_onehot(target, cfg))).data)
        belief = mapper.localize(stack).data
        assert np.unravel_index(belief.argmax(), belief.shape) == target


# -- registration -----------------------------------------------------------


def test_register_one_hot_exact_paste():
    rng = np.random.default_rng(7)
    cfg = SMALL
    ego = rng.normal(size=(cfg.u_prime, cfg.v_prime, cfg.n))
    stack = rotate_stack(Array(ego), cfg.r)
    i, j, rho = 7, 7, 1
    placed = place_weighted(stack, Array(pose_onehot((i, j, rho), cfg))).data
    cu = (cfg.u_prime - 1) // 2
    expected = np.zeros((cfg.u, cfg.v, cfg.n))
    expected[i - cu:i + cu + 1, j - cu:j + cu + 1] = stack.data[:, :, :, rho]
    assert np.max(np.abs(placed - expected)) < 1e-12


def test_register_two_pose_mixture():
    rng = np.random.default_rng(8)
    cfg = SMALL
    stack = rotate_stack(Array(rng.normal(size=(9, 9, cfg.n))), cfg.r)
    w = 0.5 * pose_onehot((7, 7, 0), cfg) + 0.5 * pose_onehot((7, 7, 2), cfg)
    mixed = place_weighted(stack, Array(w)).data
    a = place_weighted(stack, Array(pose_onehot((7, 7, 0), cfg))).data
    b = place_weighted(stack, Array(pose_onehot((7, 7, 2), cfg))).data
    assert np.allclose(mixed, 0.5 * a + 0.5 * b)


# -- per-cell recurrent update ------------------------------------------


def test_first_step_bootstraps_center_one_hot():
    rng = np.random.default_rng(9)
    mapper = SpatialMapper(MapperParams.create(rng, SMALL))
    step = mapper.step(scene_obs())
    assert step.bootstrapped
    assert step.belief.data[(*SMALL.center, 0)] == 1.0
    assert step.belief.data.sum() == 1.0


def test_second_step_belief_is_distribution():
    rng = np.random.default_rng(10)
    mapper = SpatialMapper(MapperParams.create(rng, SMALL))
    mapper.step(scene_obs(pose_idx=0))
    step = mapper.step(scene_obs(pose_idx=1))
    assert not step.bootstrapped
    assert np.isclose(step.belief.data.sum(), 1.0)
    assert np.all(step.belief.data >= 0)


def test_update_permutation_equivariance():
    # cells share one recurrent cell, so permuting cells permutes the output
    rng = np.random.default_rng(11)
    cfg = SMALL
    params = MapperParams.create(rng, cfg)
    mapper = SpatialMapper(params)
    obs = scene_obs()
    mapper.step(obs)
    state = mapper.cell_state.data
    n_cells = cfg.u * cfg.v
    perm = np.random.default_rng(0).permutation(n_cells)
    from semnav.autodiff import lstm_step
    x = rng.normal(size=(n_cells, cfg.n))
    h0 = np.zeros_like(x)
    hp, cp = lstm_step(params.cell, Array(x), Array(h0), Array(h0))
    hq, cq = lstm_step(params.cell, Array(x[perm]), Array(h0), Array(h0))
    assert np.allclose(hp.data[perm], hq.data)
    assert np.allclose(cp.data[perm], cq.data)
    assert state.shape == (cfg.u * cfg.v, cfg.n)


def test_reset_clears_state():
    rng = np.random.default_rng(12)
    mapper = SpatialMapper(MapperParams.create(rng, SMALL))
    mapper.step(scene_obs())
    mapper.reset()
    assert np.all(mapper.map_features.data == 0)
    assert np.all(mapper.cell_state.data == 0)
    assert mapper.t == 0


# -- loss ------------------------------------------------------------------


def test_localization_loss_zero_when_exact():
    cfg = SMALL
    gt = (7, 7, 0)
    loss = localization_loss([Array(pose_onehot(gt, cfg))], [gt], cfg)
    assert abs(loss.data) < 1e-9


def test_localization_loss_uniform_value():
    cfg = SMALL
    n_states = cfg.u * cfg.v * cfg.r
    uniform = Array(np.full((cfg.u, cfg.v, cfg.r), 1.0 / n_states))
    loss = localization_loss([uniform], [(7, 7, 0)], cfg)
    assert np.isclose(loss.data, np.log(n_states))


def test_localization_loss_half_mass():
    cfg = SMALL
    b = 0.5 * pose_onehot((7, 7, 0), cfg) + 0.5 * pose_onehot((6, 6, 1), cfg)
    loss = localization_loss([Array(b)], [(7, 7, 0)], cfg)
    assert np.isclose(loss.data, np.log(2.0))


def test_localization_loss_is_mean_over_steps():
    cfg = SMALL
    n_states = cfg.u * cfg.v * cfg.r
    uniform = Array(np.full((cfg.u, cfg.v, cfg.r), 1.0 / n_states))
    exact = Array(pose_onehot((7, 7, 0), cfg))
    loss = localization_loss([exact, uniform], [(7, 7, 0), (7, 7, 0)], cfg)
    assert np.isclose(loss.data, 0.5 * np.log(n_states))


def test_localization_loss_length_mismatch():
    with pytest.raises(ValueError):
        localization_loss([], [(0, 0, 0)], SMALL)


# -- gradients through the full pipeline -------------------------------


def test_episode_loss_gradients_flow_and_check():
    cfg = ProjectionConfig(u=11, v=11, u_prime=7, v_prime=7, r=4,
                           l_d=2, l_s=2, phi_hidden=4,
                           modalities=("det", "seg"))
    params = MapperParams.create(np.random.default_rng(13), cfg)
    scene = generate_scene(2, 8, 8)
    graph = build_graph(scene, 4)
    ep = sample_episode(graph, "random", 0, 3, seed=3)
    rc = RenderConfig(r_env=4)
    observations = [render_observation(scene, p, rc) for p in ep.poses]
    gt = [pose_to_index(ep.poses[0], p, 4, cfg) for p in ep.poses]

    def run():
        mapper = SpatialMapper(params)
        beliefs = [mapper.step(o).belief for o in observations]
        return localization_loss(beliefs[1:], gt[1:], cfg)

    with Tape() as tape:
        tape.backward(run())
    grads = {k: a.grad.copy() for k, a in params.arrays().items()
             if a.grad is not None}
    assert any(np.abs(g).max() > 0 for g in grads.values())

    # finite-difference check on a few coordinates of one embedding kernel
    arr = params.phi["det"][0]
    rng = np.random.default_rng(14)
    for _ in range(3):
        idx = tuple(rng.integers(0, s) for s in arr.shape)
        eps = 1e-6
        old = arr.data[idx]
        arr.data[idx] = old + eps
        lp = run().data
        arr.data[idx] = old - eps
        lm = run().data
        arr.data[idx] = old
        fd = (lp - lm) / (2 * eps)
        assert abs(fd - grads["phi.det.k1"][idx]) < 1e-4 * max(1.0, abs(fd))


# -- persistence -------------------------------------------------------


def test_save_load_round_trip(tmp_path):
    params = MapperParams.create(np.random.default_rng(15), SMALL)
    path = tmp_path / "mapper.ckpt"
    save_mapper(path, params)
    loaded = load_mapper(path)
    assert loaded.config == SMALL
    for name, arr in params.arrays().items():
        assert np.allclose(loaded.arrays()[name].data, arr.data, atol=1e-7)


def test_loaded_mapper_same_beliefs(tmp_path):
    params = MapperParams.create(np.random.default_rng(16), SMALL)
    path = tmp_path / "mapper.ckpt"
    save_mapper(path, params)
    loaded = load_mapper(path)
    m1, m2 = SpatialMapper(params), SpatialMapper(loaded)
    for idx in (0, 1):
        s1 = m1.step(scene_obs(pose_idx=idx))
        s2 = m2.step(scene_obs(pose_idx=idx))
    assert np.allclose(s1.belief.data, s2.belief.data, atol=1e-6)
