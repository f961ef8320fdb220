"""Simplex primitives, rotations and homogeneous-transform decomposition.

Conventions used throughout the package:

* ``rotation_matrix(b1, b2, b3)`` returns the passive (frame) rotation
  ``R(b1, b2, b3) = R(b1, 0, 0) R(0, b2, 0) R(0, 0, b3)``.
* The rotation part of a homogeneous map is ``R_D = R(phi_r, theta_r, psi_r).T``
  so that ``R_D @ e1`` points along ``(cos th cos ps, cos th sin ps, -sin th)``.
* Principal stretch directions are ``u_i = R(phi_u, theta_u, psi_u).T @ e_i``
  and ``U_D = sum_i lambda_i u_i u_i^T``.
* ``Q = R_D @ U_D`` and a point maps as ``r = Q @ r0 + d``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import (
    DegenerateSimplex,
    InvalidFeature,
    NotPositiveDefinite,
    OffHyperplane,
    OrientationReversing,
    SingularTransform,
)

RANK_RTOL = 1e-9
HYPERPLANE_TOL = 1e-6
E1, E2, E3 = np.eye(3)


def _points(points: ArrayLike) -> NDArray[np.float64]:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (m, 3) array of points, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points must be finite")
    return arr


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    out = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    out = np.where(out == -np.pi, np.pi, out)
    return float(out) if np.ndim(out) == 0 else out


def angle_diff(a, b):
    """Smallest signed difference a - b modulo 2 pi."""
    return wrap_angle(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))


# --------------------------------------------------------------------------- simplices


def simplex_rank(points: ArrayLike) -> int:
    """Rank of the edge matrix ``[p2 - p1, ..., p_m - p1]``.

    Singular values below ``1e-9`` times the largest one count as zero, so the
    test does not depend on the length scale.
    """
    pts = _points(points)
    if not 2 <= len(pts) <= 4:
        raise ValueError("simplex_rank expects between 2 and 4 points")
    edges = (pts[1:] - pts[0]).T
    sv = np.linalg.svd(edges, compute_uv=False)
    if sv[0] == 0.0:
        return 0
    return int(np.sum(sv > RANK_RTOL * sv[0]))


def barycentric(points: ArrayLike, c: ArrayLike, n: int | None = None) -> NDArray[np.float64]:
    """Barycentric coordinates of ``c`` with respect to an n-simplex.

    Args:
        points: ``(n+1, 3)`` simplex vertices.
        c: query point.
        n: simplex dimension; defaults to ``len(points) - 1``.

    Returns:
        Length ``n+1`` weights summing to one. All are positive exactly when
        ``c`` is strictly inside the simplex.

    Raises:
        DegenerateSimplex: the vertices do not span ``n`` dimensions.
        OffHyperplane: for ``n < 3``, ``c`` is more than 1e-6 m from the hull.
    """
    pts = _points(points)
    n = len(pts) - 1 if n is None else int(n)
    if len(pts) != n + 1:
        raise ValueError(f"an {n}-simplex needs {n + 1} vertices, got {len(pts)}")
    if simplex_rank(pts) < n:
        raise DegenerateSimplex(f"vertices do not span a {n}-D simplex")
    c = np.asarray(c, dtype=float).reshape(3)
    edges = (pts[1:] - pts[0]).T
    rel = c - pts[0]
    coef, *_ = np.linalg.lstsq(edges, rel, rcond=None)
    if n < 3:
        resid = np.linalg.norm(edges @ coef - rel)
        if resid > HYPERPLANE_TOL:
            raise OffHyperplane(f"point is {resid:.3g} m from the simplex hull")
    return np.concatenate(([1.0 - coef.sum()], coef))


def barycentric_many(points: ArrayLike, cs: ArrayLike) -> NDArray[np.float64]:
    """Vectorized :func:`barycentric` for an ``(m, 3)`` batch, no hull check."""
    pts = _points(points)
    n = len(pts) - 1
    if simplex_rank(pts) < n:
        raise DegenerateSimplex(f"vertices do not span a {n}-D simplex")
    edges = (pts[1:] - pts[0]).T
    rel = (np.asarray(cs, dtype=float).reshape(-1, 3) - pts[0]).T
    coef = np.linalg.pinv(edges) @ rel
    return np.vstack([1.0 - coef.sum(axis=0), coef]).T


# --------------------------------------------------------------------------- rotations


def rotation_matrix(beta1: float, beta2: float, beta3: float) -> NDArray[np.float64]:
    """Frame rotation ``R(b1, b2, b3)`` (roll, pitch, yaw ordering)."""
    c1, s1 = np.cos(beta1), np.sin(beta1)
    c2, s2 = np.cos(beta2), np.sin(beta2)
    c3, s3 = np.cos(beta3), np.sin(beta3)
    return np.array(
        [
            [c2 * c3, c2 * s3, -s2],
            [s1 * s2 * c3 - c1 * s3, s1 * s2 * s3 + c1 * c3, s1 * c2],
            [c1 * s2 * c3 + s1 * s3, c1 * s2 * s3 - s1 * c3, c1 * c2],
        ]
    )


def rotation_angles(active: ArrayLike) -> tuple[float, float, float]:
    """Invert ``active = rotation_matrix(b1, b2, b3).T``.

    Returns ``(b1, b2, b3)`` with ``b2`` in [-pi/2, pi/2] and the others in
    (-pi, pi]. ``b2`` uses the atan2 form, which equals ``-asin`` of the
    (0, 2) entry but keeps full accuracy near +-pi/2.
    """
    r = np.asarray(active, dtype=float).T
    b2 = float(np.arctan2(-r[0, 2], np.hypot(r[0, 0], r[0, 1])))
    b3 = float(np.arctan2(r[0, 1], r[0, 0]))
    b1 = float(np.arctan2(r[1, 2], r[2, 2]))
    return wrap_angle(b1), b2, wrap_angle(b3)


# --------------------------------------------------------------------------- features


@dataclass(frozen=True)
class DeformationFeatures:
    """Eigen-feature parameterization of a homogeneous map ``(Q, d)``."""

    n: int
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    phi_u: float = 0.0
    theta_u: float = 0.0
    psi_u: float = 0.0
    phi_r: float = 0.0
    theta_r: float = 0.0
    psi_r: float = 0.0
    d1: float = 0.0
    d2: float = 0.0
    d3: float = 0.0

    @property
    def lambdas(self) -> NDArray[np.float64]:
        return np.array([self.lambda1, self.lambda2, self.lambda3])

    @property
    def d(self) -> NDArray[np.float64]:
        return np.array([self.d1, self.d2, self.d3])

    @property
    def deformation_angles(self) -> tuple[float, float, float]:
        return (self.phi_u, self.theta_u, self.psi_u)

    @property
    def rotation_angles(self) -> tuple[float, float, float]:
        return (self.phi_r, self.theta_r, self.psi_r)

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def replace(self, **changes) -> "DeformationFeatures":
        return replace(self, **changes)

    def validate(self) -> None:
        """Check that the features are finite and fit the feature dimension."""
        if self.n not in (1, 2, 3):
            raise InvalidFeature(f"dimension must be 1, 2 or 3, got {self.n}")
        vals = np.array([getattr(self, f.name) for f in fields(self)][1:], dtype=float)
        if not np.all(np.isfinite(vals)):
            raise InvalidFeature("features must be finite")
        lam = self.lambdas[: self.n]
        if np.any(lam <= 0.0):
            raise InvalidFeature(f"stretches must be positive, got {tuple(lam)}")
        pinned: dict[str, float] = {}
        if self.n == 1:
            pinned = dict(lambda2=1.0, lambda3=1.0, phi_u=0.0, theta_u=0.0, psi_u=0.0, phi_r=0.0)
        elif self.n == 2:
            pinned = dict(lambda3=1.0, phi_u=0.0, theta_u=0.0)
        for name, value in pinned.items():
            if abs(getattr(self, name) - value) > 1e-12:
                raise InvalidFeature(f"{name} must equal {value} for n={self.n}")


def stretch_directions(phi_u: float, theta_u: float, psi_u: float) -> NDArray[np.float64]:
    """Columns are the unit stretch directions u1, u2, u3."""
    return rotation_matrix(phi_u, theta_u, psi_u).T


def build_deformation(features: DeformationFeatures) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Assemble ``(Q, d)`` from features.

    Raises:
        InvalidFeature: a stretch is non-positive or a pinned feature is off.
    """
    features.validate()
    v = stretch_directions(*features.deformation_angles)
    u_d = (v * features.lambdas) @ v.T
    r_d = rotation_matrix(*features.rotation_angles).T
    return r_d @ u_d, features.d.copy()


def polar_decompose(Q: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Split ``Q = R_D U_D`` with ``U_D = (Q^T Q)^(1/2)``.

    Raises:
        SingularTransform: ``|det Q|`` is negligible relative to ``|Q|^3``.
        OrientationReversing: ``det Q < 0``.
    """
    q = np.asarray(Q, dtype=float).reshape(3, 3)
    det = np.linalg.det(q)
    scale = max(np.linalg.norm(q, 2) ** 3, np.finfo(float).tiny)
    if abs(det) <= 1e-12 * scale:
        raise SingularTransform(f"det Q = {det:.3g}")
    if det < 0.0:
        raise OrientationReversing(f"det Q = {det:.3g} < 0")
    w, v = np.linalg.eigh(q.T @ q)
    root = np.sqrt(w)
    u_d = (v * root) @ v.T
    u_d = 0.5 * (u_d + u_d.T)
    r_d = q @ ((v / root) @ v.T)
    return r_d, u_d


def _canonical_directions(
    w: NDArray[np.float64], v: NDArray[np.float64], u1_hint: ArrayLike | None
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Order eigenpairs and fix eigenvector signs to a unique rotation."""
    if u1_hint is None:
        order = np.argsort(w)[::-1]
    else:
        hint = np.asarray(u1_hint, dtype=float)
        hint = hint / np.linalg.norm(hint)
        first = int(np.argmax(np.abs(v.T @ hint)))
        rest = [i for i in np.argsort(w)[::-1] if i != first]
        order = np.array([first] + rest)
    w = w[order]
    v = v[:, order].copy()
    if u1_hint is None:
        if v[0, 0] < 0.0 or (v[0, 0] == 0.0 and v[1, 0] < 0.0):
            v[:, 0] = -v[:, 0]
    elif v[:, 0] @ hint < 0.0:
        v[:, 0] = -v[:, 0]
    if np.linalg.det(v) < 0.0:
        v[:, 2] = -v[:, 2]
    # flipping u2 and u3 together keeps det = +1 and shifts phi_u by pi
    if v[2, 2] < 0.0 or (v[2, 2] == 0.0 and v[2, 1] < 0.0):
        v[:, 1:] = -v[:, 1:]
    return w, v


def features_from_transform(
    Q: ArrayLike, d: ArrayLike, n: int = 3, u1_hint: ArrayLike | None = None
) -> DeformationFeatures:
    """Feature vector of a 3-D map ``(Q, d)`` via polar decomposition.

    Stretches are sorted ``lambda1 >= lambda2 >= lambda3`` unless ``u1_hint``
    pins the first direction, in which case ``lambda1`` is the stretch along
    the eigenvector closest to the hint.
    """
    r_d, u_d = polar_decompose(Q)
    w, v = np.linalg.eigh(u_d)
    if np.any(w <= 0.0):
        raise NotPositiveDefinite(f"stretch eigenvalues {w}")
    w, v = _canonical_directions(w, v, u1_hint)
    phi_u, theta_u, psi_u = rotation_angles(v)
    phi_r, theta_r, psi_r = rotation_angles(r_d)
    d = np.asarray(d, dtype=float).reshape(3)
    return DeformationFeatures(
        n, *map(float, w), phi_u, theta_u, psi_u, phi_r, theta_r, psi_r, *map(float, d)
    )


# --------------------------------------------------------------------------- decomposition


def decompose_1d(leaders_ref: ArrayLike, leaders_now: ArrayLike) -> DeformationFeatures:
    """Features of a 1-D map from two leaders on the reference x axis."""
    ref = _points(leaders_ref)
    now = _points(leaders_now)
    if ref.shape[0] != 2 or now.shape[0] != 2:
        raise ValueError("decompose_1d expects two leaders")
    if np.linalg.norm(ref[1, 1:]) > HYPERPLANE_TOL or np.linalg.norm(ref[0, 1:]) > HYPERPLANE_TOL:
        raise OffHyperplane("1-D reference leaders must lie on the x axis")
    dx0 = ref[1, 0] - ref[0, 0]
    delta = now[1] - now[0]
    length = np.linalg.norm(delta)
    if abs(dx0) <= RANK_RTOL * max(1.0, np.abs(ref).max()) or length == 0.0:
        raise DegenerateSimplex("leaders coincide")
    lam = float(length / abs(dx0))
    u1 = delta / (lam * dx0)
    theta_r = float(np.arctan2(-u1[2], np.hypot(u1[0], u1[1])))
    psi_r = float(np.arctan2(u1[1], u1[0]))
    feats = DeformationFeatures(1, lam, theta_r=theta_r, psi_r=psi_r)
    q, _ = build_deformation(feats)
    d = now[0] - q @ ref[0]
    return feats.replace(d1=float(d[0]), d2=float(d[1]), d3=float(d[2]))


def _vec(m: NDArray[np.float64]) -> NDArray[np.float64]:
    """Column-major vectorization."""
    return m.reshape(-1, order="F")


def stretch_coefficients_2d(
    leaders_ref: ArrayLike, leaders_now: ArrayLike
) -> tuple[float, float, float]:
    """Solve for ``(a, b, c)``, the in-plane block of ``U_D^2``."""
    ref = _points(leaders_ref)
    now = _points(leaders_now)
    rows, rhs = [], []
    for i, j in ((0, 1), (1, 2), (2, 0)):
        dx, dy = ref[j, 0] - ref[i, 0], ref[j, 1] - ref[i, 1]
        rows.append([dx * dx, 2.0 * dx * dy, dy * dy])
        e = now[j] - now[i]
        rhs.append(e @ e)
    a, b, c = np.linalg.solve(np.array(rows), np.array(rhs))
    return float(a), float(b), float(c)


def decompose_2d(leaders_ref: ArrayLike, leaders_now: ArrayLike) -> DeformationFeatures:
    """Features of a planar map from three leaders in the reference z = 0 plane.

    Raises:
        DegenerateSimplex: either leader triangle is degenerate.
        NotPositiveDefinite: the recovered stretch block is not positive
            definite, i.e. the images are not a homogeneous image of the
            reference.
    """
    ref = _points(leaders_ref)
    now = _points(leaders_now)
    if ref.shape[0] != 3 or now.shape[0] != 3:
        raise ValueError("decompose_2d expects three leaders")
    if np.abs(ref[:, 2]).max() > HYPERPLANE_TOL:
        raise OffHyperplane("2-D reference leaders must lie in the z = 0 plane")
    if simplex_rank(ref) < 2 or simplex_rank(now) < 2:
        raise DegenerateSimplex("leader triangle is degenerate")
    a, b, c = stretch_coefficients_2d(ref, now)
    mean = 0.5 * (a + c)
    rad = np.hypot(0.5 * (a - c), b)
    l1sq, l2sq = mean + rad, mean - rad
    if l2sq <= 0.0:
        raise NotPositiveDefinite(f"stretch block eigenvalues ({l1sq:.3g}, {l2sq:.3g})")
    lam1, lam2 = float(np.sqrt(l1sq)), float(np.sqrt(l2sq))
    if rad <= 1e-12 * max(mean, 1.0):
        psi_u = 0.0
    else:
        psi_u = float(0.5 * np.arctan2(2.0 * b, a - c))

    def frame(p):
        v1, v2 = p[1] - p[0], p[2] - p[1]
        v3 = np.cross(v1, v2)
        return np.column_stack([v1, v2, v3 / np.linalg.norm(v3)])

    l0, ld = frame(ref), frame(now)
    system = np.kron(np.eye(3), l0.T)
    q = np.linalg.solve(system, _vec(ld.T)).reshape(3, 3)  # rows of Q
    u_d = build_deformation(DeformationFeatures(2, lam1, lam2, psi_u=psi_u))[0]
    r_d = q @ np.linalg.inv(u_d)
    phi_r, theta_r, psi_r = rotation_angles(r_d)
    d = now[0] - q @ ref[0]
    return DeformationFeatures(
        2, lam1, lam2, 1.0, 0.0, 0.0, psi_u, phi_r, theta_r, psi_r, *map(float, d)
    )


def solve_transform_3d(
    leaders_ref: ArrayLike, leaders_now: ArrayLike
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Solve the 12x12 system for ``(Q, d)`` from four leader pairs."""
    ref = _points(leaders_ref)
    now = _points(leaders_now)
    if ref.shape[0] != 4 or now.shape[0] != 4:
        raise ValueError("3-D decomposition expects four leaders")
    if simplex_rank(ref) < 3:
        raise DegenerateSimplex("reference leaders do not form a tetrahedron")
    system = np.hstack([np.kron(np.eye(3), ref), np.kron(np.eye(3), np.ones((4, 1)))])
    sol = np.linalg.solve(system, _vec(now))
    return sol[:9].reshape(3, 3), sol[9:].copy()


def decompose_3d(
    leaders_ref: ArrayLike, leaders_now: ArrayLike, u1_hint: ArrayLike | None = None
) -> tuple[NDArray[np.float64], NDArray[np.float64], DeformationFeatures]:
    """Recover ``(Q, d)`` and its features from four leaders."""
    q, d = solve_transform_3d(leaders_ref, leaders_now)
    return q, d, features_from_transform(q, d, 3, u1_hint)


def decompose(
    leaders_ref: ArrayLike, leaders_now: ArrayLike, u1_hint: ArrayLike | None = None
) -> DeformationFeatures:
    """Dispatch on the leader count (2, 3 or 4)."""
    m = len(np.asarray(leaders_ref))
    if m == 2:
        return decompose_1d(leaders_ref, leaders_now)
    if m == 3:
        return decompose_2d(leaders_ref, leaders_now)
    if m == 4:
        return decompose_3d(leaders_ref, leaders_now, u1_hint)[2]
    raise ValueError(f"need 2, 3 or 4 leaders, got {m}")


def transform_from_leaders(
    leaders_ref: ArrayLike, leaders_now: ArrayLike
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """``(Q, d)`` for any leader count, completing lower dimensions."""
    ref = _points(leaders_ref)
    if len(ref) == 4:
        return solve_transform_3d(ref, leaders_now)
    return build_deformation(decompose(ref, leaders_now))


def apply(Q: ArrayLike, d: ArrayLike, points: ArrayLike) -> NDArray[np.float64]:
    """Map ``(m, 3)`` points by ``r = Q r0 + d``."""
    return np.asarray(points, dtype=float) @ np.asarray(Q, dtype=float).T + np.asarray(d, dtype=float)


def features_close(a: DeformationFeatures, b: DeformationFeatures, tol: float) -> bool:
    """Compare two feature vectors, angles modulo 2 pi."""
    return feature_error(a, b) <= tol


def feature_error(a: DeformationFeatures, b: DeformationFeatures) -> float:
    angle_names = {"phi_u", "theta_u", "psi_u", "phi_r", "theta_r", "psi_r"}
    err = 0.0
    for f in fields(a):
        if f.name == "n":
            continue
        x, y = getattr(a, f.name), getattr(b, f.name)
        diff = abs(angle_diff(x, y)) if f.name in angle_names else abs(x - y)
        err = max(err, diff)
    return err


def point_simplex_distance(point: ArrayLike, vertices: ArrayLike) -> float:
    """Euclidean distance from a point to a closed triangle, segment or tetrahedron boundary face set.

    For a tetrahedron, returns the distance to its boundary (the minimum over
    the four faces). For a triangle or segment, the distance to its relative
    boundary (edges or endpoints).
    """
    v = _points(vertices)
    p = np.asarray(point, dtype=float).reshape(3)
    m = len(v)
    if m == 4:
        return min(point_triangle_distance(p, v[list(f)]) for f in ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)))
    if m == 3:
        return min(point_segment_distance(p, v[i], v[j]) for i, j in ((0, 1), (1, 2), (2, 0)))
    if m == 2:
        return float(min(np.linalg.norm(p - v[0]), np.linalg.norm(p - v[1])))
    raise ValueError("need 2 to 4 vertices")


def point_segment_distance(p: ArrayLike, a: ArrayLike, b: ArrayLike) -> float:
    p, a, b = (np.asarray(x, dtype=float) for x in (p, a, b))
    ab = b - a
    t = np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def point_triangle_distance(p: ArrayLike, tri: ArrayLike) -> float:
    """Closest-point distance from ``p`` to a filled triangle in 3-D."""
    p = np.asarray(p, dtype=float)
    a, b, c = np.asarray(tri, dtype=float)
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = ab @ ap, ac @ ap
    if d1 <= 0 and d2 <= 0:
        return float(np.linalg.norm(ap))
    bp = p - b
    d3, d4 = ab @ bp, ac @ bp
    if d3 >= 0 and d4 <= d3:
        return float(np.linalg.norm(bp))
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        return float(np.linalg.norm(p - (a + d1 / (d1 - d3) * ab)))
    cp = p - c
    d5, d6 = ab @ cp, ac @ cp
    if d6 >= 0 and d5 <= d6:
        return float(np.linalg.norm(cp))
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        return float(np.linalg.norm(p - (a + d2 / (d2 - d6) * ac)))
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return float(np.linalg.norm(p - (b + w * (c - b))))
    denom = 1.0 / (va + vb + vc)
    v, w = vb * denom, vc * denom
    return float(np.linalg.norm(p - (a + ab * v + ac * w)))


__all__ = [
    "DeformationFeatures",
    "angle_diff",
    "apply",
    "barycentric",
    "barycentric_many",
    "build_deformation",
    "decompose",
    "decompose_1d",
    "decompose_2d",
    "decompose_3d",
    "feature_error",
    "features_close",
    "features_from_transform",
    "point_simplex_distance",
    "point_segment_distance",
    "point_triangle_distance",
    "polar_decompose",
    "rotation_angles",
    "rotation_matrix",
    "simplex_rank",
    "solve_transform_3d",
    "stretch_coefficients_2d",
    "stretch_directions",
    "transform_from_leaders",
    "wrap_angle",
]
