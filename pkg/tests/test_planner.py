from __future__ import annotations

import numpy as np
import pytest

from contdef import geometry as geo, planner, safety
from contdef.errors import InfeasibleSegment, InvalidEndpoint, NoPath, OutOfSegment
from contdef.formation import alpha_matrix

from helpers import random_grid_instance


# --------------------------------------------------------------------------- quintic


def test_quintic_coefficients_from_boundary_conditions():
    np.testing.assert_allclose(planner.quintic_coefficients(), [0, 0, 0, 10, -15, 6], atol=1e-12)
    np.testing.assert_array_equal(planner.ZETA, [0, 0, 0, 10, -15, 6])


def test_beta_boundary_values():
    b = planner.beta_derivatives(np.array([0.0, 1.0]), order=2)
    np.testing.assert_allclose(b[0], [0.0, 1.0])
    np.testing.assert_allclose(b[1:], 0.0, atol=1e-12)


def test_beta_midpoint_and_symmetry():
    s = np.linspace(0, 1, 101)
    b = planner.beta_derivatives(s, order=0)[0]
    assert b[50] == pytest.approx(0.5)
    np.testing.assert_allclose(b + b[::-1], 1.0, atol=1e-12)


def test_beta_monotone():
    s = np.linspace(0, 1, 100_001)
    b = planner.beta_derivatives(s, order=1)
    assert np.all(np.diff(b[0]) >= 0)
    assert b[1].min() >= 0


def test_derivative_time_scaling():
    s = np.linspace(0, 1, 11)
    unit = planner.beta_derivatives(s, 4, 1.0)
    scaled = planner.beta_derivatives(s, 4, 3.0)
    for k in range(5):
        np.testing.assert_allclose(scaled[k], unit[k] / 3.0**k, atol=1e-12)


def test_peak_velocity():
    # rest-to-rest quintic peaks at 15/8 of the mean rate
    assert planner.beta_derivatives(np.array(0.5), 1, 4.0)[1] == pytest.approx(15 / 8 / 4)


def test_segment_interpolation():
    seg = planner.QuinticSegment(np.array([0.0, 1.0]), np.array([2.0, 5.0]), 4.0, t0=1.0)
    out = seg.interpolate([1.0, 3.0, 5.0], order=1)
    np.testing.assert_allclose(out[0], [[0, 1], [1, 3], [2, 5]])
    np.testing.assert_allclose(out[1, [0, 2]], 0.0, atol=1e-12)
    with pytest.raises(OutOfSegment):
        seg.interpolate([5.5])
    with pytest.raises(ValueError):
        planner.QuinticSegment(np.zeros(2), np.ones(2), 0.0)


def test_plan_continuity_at_waypoints():
    wps = np.array([[1, 0, 0, 0, 0, 0], [2, 0.3, 1, 2, 3, 1], [0.5, -0.2, 4, 0, 1, 2]])
    plan = planner.of_plan(1, wps, [3.0, 5.0])
    t = np.array([3.0 - 1e-7, 3.0, 3.0 + 1e-7])
    jet = plan.coordinate_jet(t, 2)
    np.testing.assert_allclose(jet[0, 1], wps[1], atol=1e-12)
    for k in range(3):
        np.testing.assert_allclose(jet[k, 0], jet[k, 2], atol=1e-5)
    np.testing.assert_allclose(jet[1:, 1], 0.0, atol=1e-9)


def test_plan_rejects_bad_shapes():
    with pytest.raises(ValueError):
        planner.of_plan(3, [np.zeros(8), np.zeros(8)], [1.0])
    with pytest.raises(ValueError):
        planner.of_plan(3, [np.zeros(9), np.zeros(9)], [1.0, 2.0])
    with pytest.raises(ValueError):
        planner.of_plan(3, [np.zeros(9), np.zeros(9)], [-1.0])
    with pytest.raises(ValueError):
        planner.Plan("OL", 2, np.zeros((2, 6)), [1.0])


# --------------------------------------------------------------------------- feature maps


def test_leaders_from_of_matches_homogeneous_map(table2_ctx, rng):
    cfg = table2_ctx.cfg
    for _ in range(20):
        s = np.r_[np.sort(rng.uniform(0.3, 2.0, 3))[::-1], rng.uniform(-1.2, 1.2, 3), rng.uniform(-50, 50, 3)]
        angles = tuple(rng.uniform(-1.2, 1.2, 3))
        leaders = planner.leaders_from_of(cfg, s, angles)
        q, d = geo.build_deformation(planner.of_to_features(3, s, angles))
        np.testing.assert_allclose(leaders, cfg.leader_refs @ q.T + d, atol=1e-9)
        back = geo.decompose(cfg.leader_refs, leaders)
        np.testing.assert_allclose(back.d, s[6:], atol=1e-8)
        np.testing.assert_allclose(np.sort(back.lambdas)[::-1], s[:3], atol=1e-8)


def test_leaders_from_of_identity(table2_ctx):
    cfg = table2_ctx.cfg
    s = np.r_[1, 1, 1, 0, 0, 0, 0, 0, 0]
    np.testing.assert_allclose(planner.leaders_from_of(cfg, s), cfg.leader_refs, atol=1e-12)


def test_takeoff_endpoint(table2_ctx, table2_run):
    cfg = table2_ctx.cfg
    plan, _ = table2_run
    end = plan.leader_jet(cfg, [plan.t_final], 0)[0, 0]
    q, d = plan.transform(cfg, plan.t_final)
    np.testing.assert_allclose(d, [100, 165, 200], atol=1e-9)
    np.testing.assert_allclose(end, cfg.leader_refs @ q.T + d, atol=1e-9)
    f = geo.decompose(cfg.leader_refs, end, u1_hint=table2_ctx.params.u1_ref)
    np.testing.assert_allclose(f.lambdas, [0.5, 1.0, 1.0], atol=1e-9)
    assert f.psi_r == pytest.approx(np.pi / 2, abs=1e-9)
    assert f.theta_r == pytest.approx(0.0713, abs=1e-9)


def test_ol_coordinates_round_trip(rng):
    for n in (1, 2, 3):
        v = np.zeros((n + 1, 3))
        v[:, :n] = rng.normal(size=(n + 1, n))
        s = planner.vertices_to_ol(n, v)
        assert s.shape == (n * (n + 1),)
        np.testing.assert_array_equal(planner.ol_to_vertices(n, s), v)


def test_leaders_from_ol(wall_ctx):
    cfg, vcs = wall_ctx.cfg, wall_ctx.scenario.vcs_array()
    at_ref = planner.leaders_from_ol(cfg, vcs, planner.vertices_to_ol(2, vcs))
    np.testing.assert_allclose(at_ref, cfg.leader_refs, atol=1e-12)
    shifted = vcs + [3.0, -1.0, 0.0]
    np.testing.assert_allclose(planner.leaders_from_ol(cfg, vcs, planner.vertices_to_ol(2, shifted)),
                               cfg.leader_refs + [3.0, -1.0, 0.0], atol=1e-12)
    # leader weights are barycentric coordinates in the VCS
    theta = planner.vcs_leader_weights(cfg, vcs)
    np.testing.assert_allclose(theta.sum(axis=1), 1.0)
    assert theta.min() > 0


def test_ol_plan_keeps_agents_in_vcs(wall_ctx):
    cfg, vcs = wall_ctx.cfg, wall_ctx.scenario.vcs_array()
    goal = vcs @ np.array([[0.8, 0.3, 0], [-0.3, 0.8, 0], [0, 0, 1]]).T + [6, 1, 0]
    plan = planner.ol_plan(2, vcs, [vcs, goal], [5.0])
    times = np.linspace(0, 5, 11)
    lead = plan.leader_jet(cfg, times, 0)[0]
    desired = np.einsum("al,tlj->taj", alpha_matrix(cfg), lead)
    res = safety.check_containment(desired, plan.vcs_vertices(times), times, cfg.real_ids)
    assert res.passed


# --------------------------------------------------------------------------- search


def test_simplex_box_overlap():
    tri = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]])
    assert planner.simplex_box_overlap(tri, [0.5, 0.5], [0.8, 0.8])
    assert planner.simplex_box_overlap(tri, [1.0, 1.0], [3.0, 3.0])  # touches the hypotenuse
    assert not planner.simplex_box_overlap(tri, [1.1, 1.1], [3.0, 3.0])
    assert not planner.simplex_box_overlap(tri, [3.0, -1.0], [4.0, 4.0])
    tet = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    assert planner.simplex_box_overlap(tet, [0.2, 0.2, 0.2], [2, 2, 2])
    assert not planner.simplex_box_overlap(tet, [0.4, 0.4, 0.4], [2, 2, 2])


def test_simplex_box_overlap_against_sampling(rng):
    tri = np.array([[0.0, 0.0], [3.0, 1.0], [1.0, 3.0]])
    w = rng.dirichlet(np.ones(3), 20000)
    pts = w @ tri
    for _ in range(100):
        lo = rng.uniform(-1, 3.5, 2)
        hi = lo + rng.uniform(0.1, 1.5, 2)
        sampled = np.any(np.all((pts >= lo) & (pts <= hi), axis=1))
        if sampled:
            assert planner.simplex_box_overlap(tri, lo, hi)


def test_empty_map_cost_is_vertex_travel():
    ref = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]])
    m = planner.ObstacleMap(np.zeros((0, 2, 2)), [[0, 0], [10, 10]], 1.0)
    res = planner.astar_plan(m, ref, ref, ref + [5, 0], planner.SearchLimits(0.9))
    assert res.cost == 15.0
    assert res.heuristic_violations == 0
    np.testing.assert_array_equal(res.waypoints()[[0, -1]], [ref, ref + [5, 0]])
    assert len(res.waypoints()) == 2


def test_astar_matches_uniform_cost():
    rng = np.random.default_rng(1)
    lim = planner.SearchLimits(0.5, 0.0, 1.5)
    solved = 0
    for _ in range(10):
        m, ref, s, g = random_grid_instance(rng)
        try:
            a = planner.astar_plan(m, ref, s, g, lim)
        except NoPath:
            with pytest.raises(NoPath):
                planner.uniform_cost_plan(m, ref, s, g, lim)
            continue
        u = planner.uniform_cost_plan(m, ref, s, g, lim)
        assert a.cost == u.cost
        assert a.expanded <= u.expanded
        assert a.heuristic_violations == 0
        solved += 1
    assert solved >= 5


def test_invalid_endpoints():
    ref = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]])
    m = planner.ObstacleMap(np.array([[[4.0, 4.0], [5.0, 5.0]]]), [[0, 0], [10, 10]], 1.0)
    lim = planner.SearchLimits(0.9)
    with pytest.raises(InvalidEndpoint):
        planner.astar_plan(m, ref, ref + 0.5, ref + 3, lim)  # off grid
    with pytest.raises(InvalidEndpoint):
        planner.astar_plan(m, ref, ref, ref + 3, lim)  # goal overlaps the box
    with pytest.raises(InvalidEndpoint):
        planner.astar_plan(m, ref, ref, ref * 0.25 + 1, lim)  # stretch below floor


def test_no_path_through_closed_wall():
    ref = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]])
    m = planner.ObstacleMap(np.array([[[5.0, 0.0], [6.0, 10.0]]]), [[0, 0], [10, 10]], 1.0)
    with pytest.raises(NoPath):
        planner.astar_plan(m, ref, ref, ref + [7, 0], planner.SearchLimits(0.9, 0.0, 1.1))


def test_wall_gap_squeeze(wall_ctx):
    out = planner.astar_plan(
        wall_ctx.scenario.obstacle_map(), wall_ctx.scenario.vcs_array()[:, :2],
        np.array(wall_ctx.scenario.plan["start"])[:, :2], np.array(wall_ctx.scenario.plan["goal"])[:, :2],
        planner.SearchLimits(wall_ctx.params.lambda_cd_min, wall_ctx.params.epsilon + wall_ctx.params.delta, 1.5),
    )
    assert out.cost == 49.0
    assert out.heuristic_violations == 0
    assert out.stretches.min() < 1.0
    assert out.stretches.min() >= wall_ctx.params.lambda_cd_min


def test_merge_collinear():
    path = np.array([[[0, 0]], [[1, 0]], [[2, 0]], [[2, 1]], [[2, 2]], [[3, 3]]], dtype=float)
    np.testing.assert_array_equal(planner.merge_collinear(path)[:, 0], [[0, 0], [2, 0], [2, 2], [3, 3]])
    np.testing.assert_array_equal(planner.merge_collinear(path[:2]), path[:2])


def test_obstacle_map_validation():
    with pytest.raises(ValueError):
        planner.ObstacleMap(np.zeros((0, 2, 2)), [[0, 0], [10, 10]], 0.0)
    with pytest.raises(ValueError):
        planner.ObstacleMap(np.array([[[1.0, 1.0], [0.0, 2.0]]]), [[0, 0], [10, 10]], 1.0)
    with pytest.raises(ValueError):
        planner.ObstacleMap(np.array([[[9.0, 9.0], [11.0, 11.0]]]), [[0, 0], [10, 10]], 1.0)


# --------------------------------------------------------------------------- travel time


def test_min_travel_time_zero_length():
    s = np.ones(6)
    assert planner.min_travel_time(s, s, None, None, None, None, None, T_min=2.5) == 2.5


def test_min_travel_time_bisection():
    calls = []

    def feasible(T):
        calls.append(T)
        return T >= 7.3

    T = planner.min_travel_time(np.zeros(6), np.ones(6), None, None, None, None, None, feasible=feasible, rtol=1e-3)
    assert 7.3 <= T <= 7.3 * 1.001 + 1e-9
    assert calls[:4] == [1.0, 2.0, 4.0, 8.0]


def test_min_travel_time_cap():
    with pytest.raises(InfeasibleSegment):
        planner.min_travel_time(np.zeros(6), np.ones(6), None, None, None, None, None,
                                feasible=lambda T: False, T_cap=64.0)


def test_segment_feasibility_monotone(table2_ctx):
    from conftest import line_team
    cfg, model = line_team()
    params = safety.SafetyParameters(
        epsilon=0.1, delta=0.5, d_s=4.0, d_b=4.0, delta_max=1.0, lambda_min=0.3, lambda_cd_min=0.3,
        u1_ref=(1.0, 0.0, 0.0), theta_u0=0.0, psi_u0=0.0,
    )
    args = (np.array([1, 0, 0, 0, 0, 0.0]), np.array([1.3, 0, 0, 0, 8, 4.0]), cfg,
            model, table2_ctx.gains, params, table2_ctx.bounds)
    T = planner.min_travel_time(*args, T_min=0.5, rtol=0.02)
    assert planner.segment_feasible(T, *args)
    assert planner.segment_feasible(2 * T, *args)
    assert not planner.segment_feasible(0.5 * T, *args)
