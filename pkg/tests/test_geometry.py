from __future__ import annotations

import numpy as np
import pytest

from contdef import geometry as geo
from contdef.errors import (
    DegenerateSimplex,
    InvalidFeature,
    NotPositiveDefinite,
    OffHyperplane,
    OrientationReversing,
    SingularTransform,
)
from helpers import random_features, random_leader_refs

LEADERS = np.array([[-30, -40, 0], [-30, 40, 0], [50, 0, 0], [0, 0, 60]], dtype=float)


# ----------------------------------------------------------------- simplices


def test_simplex_rank_table_leaders():
    assert geo.simplex_rank(LEADERS) == 3


@pytest.mark.parametrize(
    "pts, rank",
    [
        ([[0, 0, 0], [1, 0, 0], [2, 0, 0]], 1),
        ([[0, 0, 0], [1, 0, 0], [0, 1, 0]], 2),
        ([[0, 0, 0], [0, 0, 0]], 0),
    ],
)
def test_simplex_rank_small_cases(pts, rank):
    assert geo.simplex_rank(pts) == rank


def test_simplex_rank_is_scale_free():
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 1e-12]])
    assert geo.simplex_rank(pts * 1e6) == geo.simplex_rank(pts)


def test_simplex_rank_rejects_bad_counts():
    with pytest.raises(ValueError):
        geo.simplex_rank([[0, 0, 0]])


def test_barycentric_table_aux_node():
    w = geo.barycentric(LEADERS, [25, 40, 30], 3)
    np.testing.assert_allclose(w, [-0.5, 0.5, 0.5, 0.5], atol=1e-12)


def test_barycentric_vertex_and_centroid():
    tri = np.array([[0, 0, 0], [3, 0, 0], [0, 3, 0]], dtype=float)
    np.testing.assert_allclose(geo.barycentric(tri, tri[0]), [1, 0, 0], atol=1e-12)
    np.testing.assert_allclose(geo.barycentric(tri, tri.mean(axis=0)), [1 / 3] * 3, atol=1e-12)


def test_barycentric_errors():
    with pytest.raises(DegenerateSimplex):
        geo.barycentric([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [1, 0, 0], 2)
    with pytest.raises(OffHyperplane):
        geo.barycentric([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [0.2, 0.2, 1e-3], 2)


def test_barycentric_positive_iff_inside(rng):
    tet = LEADERS
    for _ in range(200):
        c = rng.uniform(-60, 60, size=3)
        w = geo.barycentric(tet, c)
        assert abs(w.sum() - 1) < 1e-12
        # independent oracle: signed sub-volumes
        vols = []
        for k in range(4):
            sub = tet.copy()
            sub[k] = c
            vols.append(np.linalg.det((sub[1:] - sub[0]).T))
        ref = np.linalg.det((tet[1:] - tet[0]).T)
        np.testing.assert_allclose(w, np.array(vols) / ref, atol=1e-10)
        assert (w > 0).all() == all(v / ref > 0 for v in vols)


# ----------------------------------------------------------------- rotations


def test_rotation_identity():
    np.testing.assert_allclose(geo.rotation_matrix(0, 0, 0), np.eye(3), atol=1e-15)


def test_rotation_quarter_yaw():
    # frozen symbolic evaluation at (0, 0, pi/2)
    expected = np.array([[0, 1, 0], [-1, 0, 0], [0, 0, 1]], dtype=float)
    np.testing.assert_allclose(geo.rotation_matrix(0, 0, np.pi / 2), expected, atol=1e-15)


def test_rotation_factorization_and_orthogonality(rng):
    for b in rng.uniform(-np.pi, np.pi, size=(1000, 3)):
        r = geo.rotation_matrix(*b)
        prod = geo.rotation_matrix(b[0], 0, 0) @ geo.rotation_matrix(0, b[1], 0) @ geo.rotation_matrix(0, 0, b[2])
        np.testing.assert_allclose(r, prod, atol=1e-12)
        np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-12)
        assert abs(np.linalg.det(r) - 1) < 1e-12


def test_rotation_angles_inverts(rng):
    for _ in range(500):
        b = np.array([rng.uniform(-3, 3), rng.uniform(-1.5, 1.5), rng.uniform(-3, 3)])
        got = geo.rotation_angles(geo.rotation_matrix(*b).T)
        np.testing.assert_allclose(got, b, atol=1e-10)


def test_wrap_angle():
    assert geo.wrap_angle(-np.pi) == pytest.approx(np.pi)
    assert geo.wrap_angle(3 * np.pi / 2) == pytest.approx(-np.pi / 2)
    assert geo.angle_diff(np.pi - 0.1, -np.pi + 0.1) == pytest.approx(-0.2)


# ----------------------------------------------------------------- deformation


def test_build_identity():
    q, d = geo.build_deformation(geo.DeformationFeatures(3))
    np.testing.assert_allclose(q, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(d, 0)


def test_build_axis_stretch():
    q, _ = geo.build_deformation(geo.DeformationFeatures(3, 2.0, 1.0, 1.0))
    np.testing.assert_allclose(q, np.diag([2.0, 1.0, 1.0]), atol=1e-15)


@pytest.mark.parametrize(
    "feats",
    [
        geo.DeformationFeatures(3, 1.0, 0.0, 1.0),
        geo.DeformationFeatures(2, 1.0, 1.0, 2.0),
        geo.DeformationFeatures(1, 1.0, 1.0, 1.0, phi_r=0.3),
        geo.DeformationFeatures(4),
        geo.DeformationFeatures(3, np.nan),
    ],
)
def test_build_rejects_invalid(feats):
    with pytest.raises(InvalidFeature):
        geo.build_deformation(feats)


def test_polar_trivial_cases():
    r, u = geo.polar_decompose(np.eye(3))
    np.testing.assert_allclose(r, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(u, np.eye(3), atol=1e-15)
    q = np.diag([2.0, 0.5, 1.0])
    r, u = geo.polar_decompose(q)
    np.testing.assert_allclose(r, np.eye(3), atol=1e-14)
    np.testing.assert_allclose(u, q, atol=1e-14)


def test_polar_recovers_spd_spectrum(rng):
    for _ in range(200):
        lam = rng.uniform(0.1, 5, size=3)
        rot = geo.rotation_matrix(*rng.uniform(-3, 3, size=3))
        spin = geo.rotation_matrix(*rng.uniform(-3, 3, size=3))
        q = spin @ rot @ np.diag(lam) @ rot.T
        r, u = geo.polar_decompose(q)
        np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(u)), np.sort(lam), rtol=1e-9)
        np.testing.assert_allclose(r @ u, q, atol=1e-9 * np.abs(q).max())
        np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-10)
        np.testing.assert_allclose(u, u.T, atol=1e-12)


def test_polar_errors():
    with pytest.raises(SingularTransform):
        geo.polar_decompose(np.diag([1.0, 1.0, 0.0]))
    with pytest.raises(OrientationReversing):
        geo.polar_decompose(np.diag([1.0, 1.0, -1.0]))


# ----------------------------------------------------------------- decompositions


def test_decompose_1d_pure_stretch():
    f = geo.decompose_1d([[0, 0, 0], [1, 0, 0]], [[0, 0, 0], [2, 0, 0]])
    assert f.lambda1 == pytest.approx(2.0)
    assert f.theta_r == pytest.approx(0.0) and f.psi_r == pytest.approx(0.0)
    np.testing.assert_allclose(f.d, 0, atol=1e-15)


def test_decompose_1d_pointing_down():
    # unit direction (0, 0, -1): theta_r = -asin(-1)
    f = geo.decompose_1d([[0, 0, 0], [1, 0, 0]], [[0, 0, 0], [0, 0, -1]])
    assert f.lambda1 == pytest.approx(1.0)
    assert f.theta_r == pytest.approx(np.pi / 2)


def test_decompose_1d_errors():
    with pytest.raises(DegenerateSimplex):
        geo.decompose_1d([[0, 0, 0], [1, 0, 0]], [[1, 1, 1], [1, 1, 1]])
    with pytest.raises(OffHyperplane):
        geo.decompose_1d([[0, 0, 0], [1, 1, 0]], [[0, 0, 0], [1, 0, 0]])


def test_decompose_2d_translation():
    ref = np.array([[0, 0, 0], [4, 0, 0], [0, 3, 0]], dtype=float)
    f = geo.decompose_2d(ref, ref + [1, 2, 3])
    np.testing.assert_allclose([f.lambda1, f.lambda2], 1, atol=1e-12)
    np.testing.assert_allclose(f.rotation_angles, 0, atol=1e-12)
    np.testing.assert_allclose(f.d, [1, 2, 3], atol=1e-12)


def test_decompose_2d_isotropic_scale():
    ref = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
    f = geo.decompose_2d(ref, 3 * ref)
    np.testing.assert_allclose([f.lambda1, f.lambda2], 3, atol=1e-12)
    assert f.psi_u == 0.0
    np.testing.assert_allclose(f.d, 0, atol=1e-12)


def test_decompose_2d_collinear_images():
    ref = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
    with pytest.raises(DegenerateSimplex):
        geo.decompose_2d(ref, [[0, 0, 0], [1, 1, 0], [2, 2, 0]])


def test_decompose_3d_identity_and_translation():
    q, d, _ = geo.decompose_3d(LEADERS, LEADERS)
    np.testing.assert_allclose(q, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(d, 0, atol=1e-10)
    q, d, _ = geo.decompose_3d(LEADERS, LEADERS + [100, 165, 200])
    np.testing.assert_allclose(q, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(d, [100, 165, 200], atol=1e-9)


def test_decompose_3d_recovers_random_maps(rng):
    for _ in range(200):
        q = rng.normal(size=(3, 3))
        if np.linalg.det(q) < 0:
            q[:, 0] *= -1
        d = rng.normal(scale=50, size=3)
        q2, d2, _ = geo.decompose_3d(LEADERS, geo.apply(q, d, LEADERS))
        np.testing.assert_allclose(q2, q, atol=1e-9)
        np.testing.assert_allclose(d2, d, atol=1e-9)


def test_decompose_3d_degenerate_reference():
    flat = LEADERS.copy()
    flat[3] = [0, 0, 0]
    with pytest.raises(DegenerateSimplex):
        geo.decompose_3d(flat, LEADERS)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_round_trip(rng, n):
    for _ in range(200):
        feats = random_features(rng, n)
        refs = random_leader_refs(rng, n)
        q, d = geo.build_deformation(feats)
        got = geo.decompose(refs, geo.apply(q, d, refs))
        assert geo.feature_error(got, feats) < 1e-8


def test_u1_hint_pins_first_direction():
    feats = geo.DeformationFeatures(3, 0.5, 2.0, 1.0, 0.0, 0.2, 0.3)
    q, d = geo.build_deformation(feats)
    u1 = geo.stretch_directions(0.0, 0.2, 0.3)[:, 0]
    f = geo.features_from_transform(q, d, 3, u1_hint=u1)
    assert f.lambda1 == pytest.approx(0.5)
    f_sorted = geo.features_from_transform(q, d, 3)
    assert f_sorted.lambda1 == pytest.approx(2.0)


def test_point_triangle_distance_against_sampling(rng):
    for _ in range(30):
        tri = rng.normal(size=(3, 3))
        p = rng.normal(scale=2, size=3)
        a, b = np.meshgrid(np.linspace(0, 1, 301), np.linspace(0, 1, 301))
        m = a + b <= 1
        samples = tri[0] + a[m, None] * (tri[1] - tri[0]) + b[m, None] * (tri[2] - tri[0])
        brute = np.linalg.norm(samples - p, axis=1).min()
        exact = geo.point_triangle_distance(p, tri)
        assert exact <= brute + 1e-12
        assert brute - exact < 0.02
