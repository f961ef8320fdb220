"""Property-based checks of the structural invariants."""

from __future__ import annotations

import numpy as np
from hypothesis import given, settings, strategies as st

from contdef import comms, formation, geometry as geo, planner, safety

from helpers import column_config, random_features, random_leader_refs

seeds = st.integers(0, 2**32 - 1)
dims = st.sampled_from([1, 2, 3])
common = settings(max_examples=60, deadline=None)


@common
@given(seeds, dims)
def test_barycentric_partition_of_unity(seed, n):
    rng = np.random.default_rng(seed)
    refs = random_leader_refs(rng, n)
    c = rng.normal(size=3) * 20
    c[n:] = 0.0
    w = geo.barycentric(refs, c, n)
    assert abs(w.sum() - 1.0) < 1e-9
    np.testing.assert_allclose(w @ refs, c, atol=1e-8)


@common
@given(st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi))
def test_rotation_is_proper_orthogonal(a, b, c):
    r = geo.rotation_matrix(a, b, c)
    np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
    assert abs(np.linalg.det(r) - 1.0) < 1e-12


@common
@given(seeds, dims)
def test_decomposition_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    refs = random_leader_refs(rng, n)
    feats = random_features(rng, n)
    q, d = geo.build_deformation(feats)
    got = geo.decompose(refs, geo.apply(q, d, refs))
    assert geo.feature_error(feats, got) < 1e-8


@common
@given(seeds)
def test_polar_factors(seed):
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(3, 3))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    if abs(np.linalg.det(q)) < 1e-3:
        return
    r, u = geo.polar_decompose(q)
    np.testing.assert_allclose(r @ u, q, atol=1e-9)
    np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-9)
    np.testing.assert_allclose(u, u.T, atol=1e-12)
    assert np.linalg.eigvalsh(u).min() > 0


positive = st.floats(0.6, 50.0)


@common
@given(positive, positive, st.floats(0.01, 0.3), st.floats(0.0, 5.0))
def test_delta_max_monotone(d_s, d_b, eps, bump):
    base = safety.delta_max_from(d_s, d_b, eps)
    assert safety.delta_max_from(d_s + bump, d_b, eps) >= base
    assert safety.delta_max_from(d_s, d_b + bump, eps) >= base
    assert safety.delta_max_from(d_s, d_b, eps + bump / 10) <= base


@settings(max_examples=30, deadline=None)
@given(seeds, dims, st.integers(1, 12), st.integers(0, 2))
def test_leader_weight_block(seed, n, n_followers, n_aux):
    rng = np.random.default_rng(seed)
    cfg, graph = comms.random_formation(rng, n=n, n_followers=n_followers, n_aux=n_aux)
    m = comms.compute_weights(cfg, graph)
    np.testing.assert_allclose(m.W_L.sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(m.W_L, formation.alpha_matrix(cfg, cfg.followers), atol=1e-9)
    assert comms.verify_hurwitz(m.A).passed


@common
@given(seeds)
def test_ol_leaders_commute_with_affine_motion(seed):
    rng = np.random.default_rng(seed)
    cfg, _ = comms.random_formation(rng, n=2, n_followers=3)
    vcs = np.zeros((3, 3))
    vcs[:, :2] = cfg.leader_refs[:, :2].mean(axis=0) + 3.0 * (cfg.leader_refs[:, :2] - cfg.leader_refs[:, :2].mean(axis=0))
    if geo.simplex_rank(vcs) < 2:
        return
    a = np.eye(3)
    a[:2, :2] = rng.normal(size=(2, 2)) + 2 * np.eye(2)
    b = np.r_[rng.normal(size=2) * 10, 0.0]
    moved = vcs @ a.T + b
    got = planner.leaders_from_ol(cfg, vcs, planner.vertices_to_ol(2, moved))
    np.testing.assert_allclose(got, cfg.leader_refs @ a.T + b, atol=1e-8)


@common
@given(seeds)
def test_barycentric_invariant_under_homogeneous_motion(seed):
    rng = np.random.default_rng(seed)
    refs = random_leader_refs(rng, 3)
    pts = rng.dirichlet(np.ones(4), 5) @ refs
    q, d = geo.build_deformation(random_features(rng, 3))
    before = geo.barycentric_many(refs, pts)
    after = geo.barycentric_many(geo.apply(q, d, refs), geo.apply(q, d, pts))
    np.testing.assert_allclose(after, before, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_conservative_pass_implies_pairwise(seed):
    rng = np.random.default_rng(seed)
    cfg, _ = comms.random_formation(rng, n=3, n_followers=8)
    pts = cfg.ref_array()
    d_s = safety.min_separation(pts)[0]
    eps = 0.1 * d_s
    delta = rng.uniform(0.0, 0.3) * d_s
    delta_max = 0.5 * (d_s - 2 * eps)
    params = safety.SafetyParameters(eps, delta, d_s, 10 * d_s, delta_max,
                                     *safety.stretch_bounds(delta, eps, d_s, delta_max),
                                     (1.0, 0.0, 0.0), 0.0, 0.0)
    qs = np.array([geo.build_deformation(random_features(rng, 3))[0] for _ in range(10)])
    if safety.check_conservative(qs, params).passed:
        desired = np.einsum("tij,aj->tai", qs, pts)
        assert safety.pairwise_oracle(desired, 2 * (delta + eps)).passed


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_relaxed_pass_implies_pairwise_on_column(seed):
    rng = np.random.default_rng(seed)
    cfg = column_config()
    pts = cfg.ref_array()
    eps, delta = 0.5, rng.uniform(0.1, 1.5)
    lam_min = 2 * (delta + eps) / 5.0
    params = safety.SafetyParameters(eps, delta, 5.0, 6.0, 2.0, lam_min, (delta + eps) / 2.5,
                                     (1.0, 0.0, 0.0), 0.0, 0.0)
    qs = []
    for _ in range(10):
        f = geo.DeformationFeatures(3, rng.uniform(0.8 * lam_min, 2.0), rng.uniform(0.02, 2.0),
                                    rng.uniform(0.02, 2.0), 0.0, 0.0, 0.0, *rng.uniform(-3, 3, 3),
                                    *rng.uniform(-50, 50, 3))
        qs.append(geo.build_deformation(f)[0])
    qs = np.array(qs)
    if safety.check_relaxed(qs, params).passed:
        desired = np.einsum("tij,aj->tai", qs, pts)
        assert safety.pairwise_oracle(desired, 2 * (delta + eps)).passed
