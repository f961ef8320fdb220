from __future__ import annotations

import numpy as np
import pytest

from contdef import geometry as geo, planner, safety
from contdef.errors import AnglesNotConstant, TooDense
from contdef.formation import ReferenceConfiguration, alpha_matrix

from helpers import COLUMN_VCS, column_config


def _jacobians(params, lam1, lam2, lam3, rot=np.zeros(3)):
    """Jacobians with stretch directions pinned to the reference ones."""
    out = []
    for a, b, c in np.broadcast(lam1, lam2, lam3):
        f = geo.DeformationFeatures(3, a, b, c, *params.deformation_angles, *rot)
        out.append(geo.build_deformation(f)[0])
    return np.array(out)


# ----------------------------------------------------------------- closed forms


def test_table2_reference_metrics(table2_ctx):
    p = table2_ctx.params
    assert p.d_s == pytest.approx(4.6607, abs=5e-3)
    assert set(p.pair) == {9, 13}
    assert p.theta_u0 == pytest.approx(-0.1721, abs=1e-2)
    assert p.psi_u0 == pytest.approx(0.7130, abs=1e-2)
    assert p.delta <= p.delta_max


def test_planar_case_constants():
    dm = safety.delta_max_from(5.5875, 4.5358, 0.5)
    assert dm == pytest.approx(2.2938, abs=1e-4)
    assert safety.delta_from_lambda_cd(0.32, dm, 0.5) == pytest.approx(0.3940, abs=1e-4)


def test_takeoff_deviation_bound(table2_ctx):
    p = table2_ctx.params
    # the collision branch of delta_max binds for this geometry, so both bounds agree
    assert p.delta_max == pytest.approx(0.5 * (p.d_s - 2 * p.epsilon))
    delta = safety.delta_from_lambda_cd(0.5, p.delta_max, p.epsilon)
    assert 0.6458 <= delta <= 0.67
    assert delta == pytest.approx(p.delta, abs=1e-12)
    # the planar delta_max would give a bound outside the reported window
    assert safety.delta_from_lambda_cd(0.5, 2.2938, 0.5) > 0.67


def test_rigid_limit():
    lam_min, lam_cd = safety.stretch_bounds(1.2, 0.5, 5.0, 1.2)
    assert lam_cd == pytest.approx(1.0)
    assert lam_min == pytest.approx(2 * 1.7 / 5.0)


def test_too_dense():
    cfg = ReferenceConfiguration(2, {1: [0, 0, 0], 2: [0.8, 0, 0], 3: [0, 5, 0]}, (1, 2, 3), ())
    with pytest.raises(TooDense):
        safety.reference_metrics(cfg, [[-5, -5, 0], [10, -5, 0], [-5, 10, 0]], 0.5)


def test_boundary_distance_signs():
    tri = np.array([[0, 0, 0], [4, 0, 0], [0, 4, 0]], dtype=float)
    d = safety.boundary_distance([[1, 1, 0], [5, 5, 0]], tri)
    assert d[0] == pytest.approx(1.0)
    assert d[1] < 0


# ----------------------------------------------------------------- stretch checks


def test_conservative_identity_passes(table2_ctx):
    res = safety.check_conservative(np.eye(3)[None], table2_ctx.params)
    assert res.passed and res.margin >= 0


def test_conservative_fails_at_first_violation(table2_ctx):
    p = table2_ctx.params.with_delta(safety.delta_from_lambda_cd(0.32, table2_ctx.params.delta_max, 0.5))
    assert p.lambda_cd_min == pytest.approx(0.32)
    lam = np.linspace(1.0, 0.31, 70)
    res = safety.check_conservative(_jacobians(p, 1.0, 1.0, lam), p, times=np.arange(70) * 0.5)
    first = int(np.argmax(lam < 0.32))
    assert not res.passed
    assert res.detail["first_violation_index"] == first
    assert res.time == first * 0.5


def test_relaxed_passes_where_conservative_fails():
    cfg = column_config()
    p = safety.reference_metrics(cfg, COLUMN_VCS, 0.5, delta=0.5)
    assert p.lambda_min == pytest.approx(0.4)
    plan = planner.of_plan(
        3, [[1, 1, 1, 0, 0, 0, 0, 0, 0], [p.lambda_min, 0.05, 0.05, 0, 0, 0.3, 5, 2, 1]], [10.0],
        deformation_angles=(0.0, p.theta_u0, p.psi_u0),
    )
    times = np.linspace(0, 10, 201)
    rel = safety.certify(cfg, plan, p, times, mode="relaxed")
    con = safety.certify(cfg, plan, p, times, mode="conservative")
    assert rel.passed
    assert not con.conditions["collision_conservative"].passed
    assert con.conditions["pairwise_separation"].passed


def test_relaxed_alone_misses_cross_pairs(table2_ctx):
    # across the pinned direction the other stretches decide the spacing
    cfg, p = table2_ctx.cfg, table2_ctx.params
    qs = _jacobians(p, np.full(50, p.lambda_min), 0.05, 0.05, rot=(0.0, 0.0, 0.3))
    assert safety.check_relaxed(qs, p).passed
    desired = np.einsum("tij,aj->tai", qs, cfg.ref_array())
    assert not safety.pairwise_oracle(desired, 2 * (p.delta + p.epsilon)).passed


def test_relaxed_rejects_varying_angles(table2_ctx):
    p = table2_ctx.params
    qs = [geo.build_deformation(geo.DeformationFeatures(3, 0.6, 1.0, 1.2, 0.3, 0.1, 0.2))[0]]
    with pytest.raises(AnglesNotConstant):
        safety.check_relaxed(qs, p)


def test_relaxed_rigid_rotation(table2_ctx, rng):
    qs = [geo.rotation_matrix(*rng.uniform(-3, 3, size=3)).T for _ in range(20)]
    assert safety.check_relaxed(qs, table2_ctx.params).passed


def test_pinned_stretch_projection_identity(table2_ctx, rng):
    cfg, p = table2_ctx.cfg, table2_ctx.params
    u0 = geo.stretch_directions(*p.deformation_angles)
    pts = cfg.ref_array()
    for _ in range(100):
        lam = rng.uniform(0.2, 3, size=3)
        rot = rng.uniform(-3, 3, size=3)
        f = geo.DeformationFeatures(3, *lam, *p.deformation_angles, *rot)
        q, d = geo.build_deformation(f)
        r_d = geo.rotation_matrix(*rot).T
        i, j = rng.choice(len(pts), size=2, replace=False)
        diff_now = q @ (pts[i] - pts[j])
        for l in range(3):
            lhs = diff_now @ (r_d @ u0[:, l])
            rhs = lam[l] * (pts[i] - pts[j]) @ u0[:, l]
            assert lhs == pytest.approx(rhs, abs=1e-9)


def test_conservative_pass_implies_pairwise(table2_ctx, rng):
    cfg, p = table2_ctx.cfg, table2_ctx.params
    pts = cfg.ref_array()
    for _ in range(200):
        q = geo.rotation_matrix(*rng.uniform(-3, 3, 3)) @ np.diag(rng.uniform(0.3, 2, 3)) @ \
            geo.rotation_matrix(*rng.uniform(-3, 3, 3))
        if safety.check_conservative(q[None], p).passed:
            assert safety.pairwise_oracle(pts @ q.T, 2 * (p.delta + p.epsilon)).passed


# ----------------------------------------------------------------- containment


def test_containment_centroid_margin():
    tri = np.array([[0, 0, 0], [3, 0, 0], [0, 3, 0]], dtype=float)
    res = safety.check_containment(tri.mean(axis=0)[None], tri)
    assert res.passed and res.margin == pytest.approx(1 / 3)


def test_containment_face_fails():
    tri = np.array([[0, 0, 0], [3, 0, 0], [0, 3, 0]], dtype=float)
    res = safety.check_containment(np.array([[1.5, 0, 0], [1, 1, 0]]), tri, ids=(7, 8))
    assert not res.passed and res.agents == (7,)


def test_containment_affine_invariance(table2_ctx, rng):
    cfg = table2_ctx.cfg
    vcs = table2_ctx.scenario.vcs_array()
    pts = cfg.ref_array()
    base = geo.barycentric_many(vcs, pts)
    for _ in range(50):
        q = rng.normal(size=(3, 3)) + 2 * np.eye(3)
        d = rng.normal(size=3) * 10
        moved = geo.barycentric_many(geo.apply(q, d, vcs), geo.apply(q, d, pts))
        np.testing.assert_allclose(moved, base, atol=1e-9)
    assert safety.check_containment(pts, vcs).passed


# ----------------------------------------------------------------- deviation and inputs


def test_stationary_run_has_zero_deviation(table2_ctx):
    from contdef import dynamics

    p0 = table2_ctx.scenario.plan["waypoints"][0]
    plan = planner.of_plan(3, [p0, p0], [2.0])
    traj = dynamics.simulate_team(table2_ctx.cfg, table2_ctx.model, plan, record_every=50)
    dev, inp = safety.check_deviation_and_inputs(traj, table2_ctx.params, table2_ctx.bounds)
    assert dev.passed and dev.detail["sup_deviation"] < 1e-9
    assert inp.passed


def test_table2_deviation_and_tightened_bound(table2_ctx, table2_run):
    _, traj = table2_run
    p = table2_ctx.params
    dev, inp = safety.check_deviation_and_inputs(traj, p, table2_ctx.bounds)
    assert dev.passed and dev.detail["sup_deviation"] <= 0.67
    assert inp.passed
    sup, agent, when = traj.sup_deviation()
    tight, _ = safety.check_deviation_and_inputs(traj, p.with_delta(0.5 * sup), table2_ctx.bounds)
    assert not tight.passed
    assert tight.agents == (agent,) and tight.time == when


def test_full_certificate(table2_ctx, table2_run):
    from contdef import pipeline

    plan, traj = table2_run
    rep = pipeline.certify(table2_ctx, plan, traj)
    assert rep.mode == "relaxed"
    assert rep.passed, rep.to_dict()
    assert set(rep.conditions) == {"collision_relaxed", "pairwise_separation", "containment", "deviation", "inputs"}
    times = np.linspace(plan.t0, plan.t_final, 201)
    desired = np.einsum("al,tlj->taj", alpha_matrix(table2_ctx.cfg), plan.leader_jet(table2_ctx.cfg, times, 0)[0])
    assert safety.pairwise_oracle(desired, 2 * table2_ctx.params.epsilon).passed
