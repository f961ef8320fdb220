"""Leader plans: quintic time scaling, feature shaping, VCS placements and A*.

A plan interpolates a generalized coordinate between waypoints with a
rest-to-rest quintic. Two coordinate kinds are supported:

``OF``
    homogeneous-map features. ``n=1``: (lambda1, theta_r, psi_r, d1, d2, d3);
    ``n=2``: (lambda1, lambda2, phi_r, theta_r, psi_r, d); ``n=3``:
    (lambda1, lambda2, lambda3, phi_r, theta_r, psi_r, d). Deformation angles are
    held fixed for the whole plan.
``OL``
    stacked vertex coordinates of the containment simplex, x block first,
    with only the first ``n`` axes stored.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import _series as ser
from . import geometry
from .errors import (
    InfeasibleSegment,
    InvalidEndpoint,
    InvalidFeature,
    NoPath,
    OutOfSegment,
)
from .formation import ReferenceConfiguration, alpha_matrix

MAX_ORDER = 4
OF_SIZES = {1: 6, 2: 8, 3: 9}


# --------------------------------------------------------------------------- quintic


def quintic_coefficients() -> NDArray[np.float64]:
    """Coefficients of the rest-to-rest quintic on normalized time [0, 1].

    Solves the six boundary conditions beta(0)=0, beta(1)=1 and zero first and
    second derivatives at both ends.
    """
    rows, rhs = [], []
    for s, val in ((0.0, 0.0), (1.0, 1.0)):
        rows.append([s**j for j in range(6)])
        rhs.append(val)
        rows.append([j * s ** (j - 1) if j >= 1 else 0.0 for j in range(6)])
        rhs.append(0.0)
        rows.append([j * (j - 1) * s ** (j - 2) if j >= 2 else 0.0 for j in range(6)])
        rhs.append(0.0)
    zeta = np.linalg.solve(np.array(rows), np.array(rhs))
    zeta[np.abs(zeta) < 1e-12] = 0.0
    return zeta


ZETA = np.array([0.0, 0.0, 0.0, 10.0, -15.0, 6.0])


def beta_derivatives(s: ArrayLike, order: int = MAX_ORDER, T: float = 1.0) -> NDArray[np.float64]:
    """Time derivatives of beta up to ``order``; shape ``(order+1,) + s.shape``.

    ``s`` is normalized time. Derivatives with respect to real time pick up a
    factor ``T**-k``.
    """
    s = np.asarray(s, dtype=float)
    poly = np.polynomial.Polynomial(ZETA)
    out = np.empty((order + 1,) + s.shape)
    # beta(s) = 1 - beta(1 - s); evaluating the upper half this way keeps
    # sampled values monotone near s = 1, where the power series rounds.
    upper = s > 0.5
    out[0] = np.where(upper, 1.0 - poly(1.0 - s), poly(s))
    for k in range(1, order + 1):
        out[k] = poly.deriv(k)(s) / T**k
    return out


@dataclass(frozen=True, eq=False)
class QuinticSegment:
    """Straight-line interpolation of a coordinate vector with quintic timing."""

    s_start: NDArray[np.float64]
    s_end: NDArray[np.float64]
    T: float
    t0: float = 0.0
    zeta: NDArray[np.float64] = field(default_factory=lambda: ZETA.copy())

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"segment duration must be positive, got {self.T}")
        object.__setattr__(self, "s_start", np.asarray(self.s_start, dtype=float))
        object.__setattr__(self, "s_end", np.asarray(self.s_end, dtype=float))

    def interpolate(self, t: ArrayLike, order: int = MAX_ORDER) -> NDArray[np.float64]:
        """Value and derivatives, shape ``(order+1,) + t.shape + (g,)``.

        Raises:
            OutOfSegment: some ``t`` falls outside ``[t0, t0 + T]``.
        """
        t = np.asarray(t, dtype=float)
        eps = 1e-9 * max(1.0, self.T)
        if np.any(t < self.t0 - eps) or np.any(t > self.t0 + self.T + eps):
            raise OutOfSegment(f"time outside [{self.t0}, {self.t0 + self.T}]")
        s = np.clip((t - self.t0) / self.T, 0.0, 1.0)
        b = beta_derivatives(s, order, self.T)
        delta = self.s_end - self.s_start
        out = b[..., None] * delta
        out[0] += self.s_start
        return out


# --------------------------------------------------------------------------- feature maps


def of_to_features(n: int, s: ArrayLike, deformation_angles=(0.0, 0.0, 0.0)) -> geometry.DeformationFeatures:
    """Expand an OF coordinate into a full feature record."""
    s = np.asarray(s, dtype=float)
    if s.shape != (OF_SIZES[n],):
        raise InvalidFeature(f"OF coordinate for n={n} needs {OF_SIZES[n]} entries")
    phi_u, theta_u, psi_u = deformation_angles
    if n == 1:
        return geometry.DeformationFeatures(1, s[0], theta_r=s[1], psi_r=s[2], d1=s[3], d2=s[4], d3=s[5])
    if n == 2:
        return geometry.DeformationFeatures(2, s[0], s[1], 1.0, 0.0, 0.0, psi_u, *s[2:])
    return geometry.DeformationFeatures(3, s[0], s[1], s[2], phi_u, theta_u, psi_u, *s[3:])


def features_to_of(f: geometry.DeformationFeatures) -> NDArray[np.float64]:
    if f.n == 1:
        return np.array([f.lambda1, f.theta_r, f.psi_r, f.d1, f.d2, f.d3])
    if f.n == 2:
        return np.array([f.lambda1, f.lambda2, f.phi_r, f.theta_r, f.psi_r, f.d1, f.d2, f.d3])
    return np.array([f.lambda1, f.lambda2, f.lambda3, f.phi_r, f.theta_r, f.psi_r, f.d1, f.d2, f.d3])


def _full_feature_series(n: int, s_series: NDArray[np.float64]):
    """Split an OF series ``(K+1, ..., g)`` into stretch, angle and d series."""
    one = np.zeros(s_series.shape[:-1])
    one[0] = 1.0
    zero = np.zeros(s_series.shape[:-1])
    if n == 1:
        lam = [s_series[..., 0], one, one]
        ang = [zero, s_series[..., 1], s_series[..., 2]]
        d = s_series[..., 3:6]
    elif n == 2:
        lam = [s_series[..., 0], s_series[..., 1], one]
        ang = [s_series[..., 2], s_series[..., 3], s_series[..., 4]]
        d = s_series[..., 5:8]
    else:
        lam = [s_series[..., 0], s_series[..., 1], s_series[..., 2]]
        ang = [s_series[..., 3], s_series[..., 4], s_series[..., 5]]
        d = s_series[..., 6:9]
    return np.stack(lam, axis=-1), ang, d


def rotation_series(b1, b2, b3) -> NDArray[np.float64]:
    """Taylor series of ``rotation_matrix`` for angle series; shape ``(K+1, ..., 3, 3)``."""
    s1, c1 = ser.sincos(b1)
    s2, c2 = ser.sincos(b2)
    s3, c3 = ser.sincos(b3)
    m = ser.mul
    rows = [
        [m(c2, c3), m(c2, s3), -s2],
        [m(m(s1, s2), c3) - m(c1, s3), m(m(s1, s2), s3) + m(c1, c3), m(s1, c2)],
        [m(m(c1, s2), c3) + m(s1, s3), m(m(c1, s2), s3) - m(s1, c3), m(c1, c2)],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def transform_jet_of(
    n: int, s_jet: NDArray[np.float64], deformation_angles=(0.0, 0.0, 0.0)
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Derivative stacks of ``Q`` and ``d`` from an OF derivative stack.

    Args:
        s_jet: ``(K+1, ..., g)`` time derivatives of the OF coordinate.

    Returns:
        ``(K+1, ..., 3, 3)`` and ``(K+1, ..., 3)`` time derivatives.
    """
    series = ser.from_derivatives(s_jet)
    lam, ang, d = _full_feature_series(n, series)
    if np.any(lam[0] <= 0.0):
        raise InvalidFeature("stretches must stay positive along the plan")
    v = geometry.stretch_directions(*deformation_angles)
    u_d = np.einsum("ij,...j,kj->...ik", v, lam, v)
    r_d = np.swapaxes(rotation_series(*ang), -1, -2)
    q = ser.matmul(r_d, u_d)
    return ser.to_derivatives(q), ser.to_derivatives(d)


def leaders_from_of(
    cfg: ReferenceConfiguration, s_of: ArrayLike, deformation_angles=(0.0, 0.0, 0.0)
) -> NDArray[np.float64]:
    """Leader positions (and derivatives) for an OF coordinate.

    Args:
        s_of: either a single ``(g,)`` value or a ``(K+1, ..., g)`` derivative
            stack.

    Returns:
        ``(n+1, 3)`` positions, or ``(K+1, ..., n+1, 3)`` derivatives.
    """
    s = np.asarray(s_of, dtype=float)
    single = s.ndim == 1
    jet = s[None] if single else s
    q, d = transform_jet_of(cfg.n, jet, deformation_angles)
    refs = cfg.leader_refs
    out = np.einsum("...ij,lj->...li", q, refs) + d[..., None, :]
    return out[0] if single else out


def ol_to_vertices(n: int, s_ol: ArrayLike) -> NDArray[np.float64]:
    """``(..., n(n+1))`` coordinate to ``(..., n+1, 3)`` vertices (unused axes zero)."""
    s = np.asarray(s_ol, dtype=float)
    blocks = s.reshape(s.shape[:-1] + (n, n + 1))
    out = np.zeros(s.shape[:-1] + (n + 1, 3))
    out[..., :n] = np.swapaxes(blocks, -1, -2)
    return out


def vertices_to_ol(n: int, vertices: ArrayLike) -> NDArray[np.float64]:
    v = np.asarray(vertices, dtype=float)
    return np.swapaxes(v[..., :n], -1, -2).reshape(v.shape[:-2] + (n * (n + 1),))


def leaders_from_ol(cfg: ReferenceConfiguration, vcs_ref: ArrayLike, s_ol: ArrayLike) -> NDArray[np.float64]:
    """Leader positions as reference-barycentric combinations of VCS vertices.

    Works on a single coordinate or any leading stack of them (derivatives
    pass through because the map is linear).
    """
    theta = vcs_leader_weights(cfg, vcs_ref)
    verts = ol_to_vertices(cfg.n, s_ol)
    return np.einsum("lv,...vj->...lj", theta, verts)


def vcs_leader_weights(cfg: ReferenceConfiguration, vcs_ref: ArrayLike) -> NDArray[np.float64]:
    vcs_ref = np.asarray(vcs_ref, dtype=float)
    return np.array([geometry.barycentric(vcs_ref, p, cfg.n) for p in cfg.leader_refs])


# --------------------------------------------------------------------------- plans


@dataclass(frozen=True, eq=False)
class Plan:
    """Piecewise quintic leader plan.

    Attributes:
        mode: ``"OF"`` or ``"OL"``.
        n: deformation dimension.
        waypoints: ``(K+1, g)`` coordinate waypoints.
        durations: ``(K,)`` segment times.
        t0: start time.
        deformation_angles: fixed stretch-direction angles (OF mode).
        vcs_ref: reference VCS vertices (required in OL mode).
    """

    mode: str
    n: int
    waypoints: NDArray[np.float64]
    durations: NDArray[np.float64]
    t0: float = 0.0
    deformation_angles: tuple[float, float, float] = (0.0, 0.0, 0.0)
    vcs_ref: NDArray[np.float64] | None = None

    def __post_init__(self):
        wp = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        dur = np.atleast_1d(np.asarray(self.durations, dtype=float))
        object.__setattr__(self, "waypoints", wp)
        object.__setattr__(self, "durations", dur)
        if self.mode not in ("OF", "OL"):
            raise ValueError(f"unknown plan mode {self.mode!r}")
        g = OF_SIZES[self.n] if self.mode == "OF" else self.n * (self.n + 1)
        if wp.shape[1] != g:
            raise ValueError(f"{self.mode} coordinate for n={self.n} has {g} entries, got {wp.shape[1]}")
        if len(dur) != len(wp) - 1:
            raise ValueError("need one duration per segment")
        if np.any(dur <= 0):
            raise ValueError("segment durations must be positive")
        if self.mode == "OL":
            if self.vcs_ref is None:
                raise ValueError("OL plans need reference VCS vertices")
            object.__setattr__(self, "vcs_ref", np.asarray(self.vcs_ref, dtype=float))

    @property
    def breakpoints(self) -> NDArray[np.float64]:
        return self.t0 + np.concatenate([[0.0], np.cumsum(self.durations)])

    @property
    def horizon(self) -> float:
        return float(self.durations.sum())

    @property
    def t_final(self) -> float:
        return self.t0 + self.horizon

    def segments(self) -> list[QuinticSegment]:
        bp = self.breakpoints
        return [
            QuinticSegment(self.waypoints[k], self.waypoints[k + 1], self.durations[k], bp[k])
            for k in range(len(self.durations))
        ]

    def coordinate_jet(self, times: ArrayLike, order: int = MAX_ORDER) -> NDArray[np.float64]:
        """Derivatives of the coordinate, shape ``(order+1, len(times), g)``.

        Times before the start or after the end hold the endpoint at rest.
        """
        t = np.atleast_1d(np.asarray(times, dtype=float))
        bp = self.breakpoints
        out = np.zeros((order + 1, len(t), self.waypoints.shape[1]))
        out[0] = self.waypoints[0]
        idx = np.clip(np.searchsorted(bp, t, side="right") - 1, 0, len(self.durations) - 1)
        after = t >= bp[-1]
        for k, seg in enumerate(self.segments()):
            sel = (idx == k) & ~after
            if np.any(sel):
                out[:, sel] = seg.interpolate(t[sel], order)
        if np.any(after):
            out[0, after] = self.waypoints[-1]
        return out

    def leader_jet(self, cfg: ReferenceConfiguration, times: ArrayLike, order: int = MAX_ORDER) -> NDArray[np.float64]:
        """Leader derivatives, shape ``(order+1, len(times), n+1, 3)``."""
        jet = self.coordinate_jet(times, order)
        if self.mode == "OF":
            return leaders_from_of(cfg, jet, self.deformation_angles)
        return leaders_from_ol(cfg, self.vcs_ref, jet)

    def transform(self, cfg: ReferenceConfiguration, t: float) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """``(Q, d)`` of the plan at one time."""
        s = self.coordinate_jet([t], 0)[0, 0]
        if self.mode == "OF":
            return geometry.build_deformation(of_to_features(self.n, s, self.deformation_angles))
        verts = ol_to_vertices(self.n, s)
        return geometry.transform_from_leaders(self.vcs_ref, verts)

    def vcs_vertices(self, times: ArrayLike) -> NDArray[np.float64]:
        """VCS vertex positions over time (OL mode)."""
        if self.mode != "OL":
            raise ValueError("VCS vertices are the coordinate only in OL mode")
        return ol_to_vertices(self.n, self.coordinate_jet(times, 0)[0])


def desired_positions(cfg: ReferenceConfiguration, leader_positions: ArrayLike) -> NDArray[np.float64]:
    """All real agents' desired positions from leader positions (alpha expansion)."""
    return np.einsum("al,...lj->...aj", alpha_matrix(cfg), np.asarray(leader_positions, dtype=float))


def of_plan(
    n: int,
    waypoints: Sequence[ArrayLike],
    durations: Sequence[float],
    deformation_angles=(0.0, 0.0, 0.0),
    t0: float = 0.0,
) -> Plan:
    return Plan("OF", n, np.array(waypoints, dtype=float), np.array(durations, dtype=float), t0, tuple(deformation_angles))


def ol_plan(
    n: int,
    vcs_ref: ArrayLike,
    vertex_waypoints: Sequence[ArrayLike],
    durations: Sequence[float],
    t0: float = 0.0,
) -> Plan:
    wp = np.array([vertices_to_ol(n, v) for v in vertex_waypoints])
    return Plan("OL", n, wp, np.array(durations, dtype=float), t0, vcs_ref=np.asarray(vcs_ref, dtype=float))


# --------------------------------------------------------------------------- obstacles


@dataclass(frozen=True, eq=False)
class ObstacleMap:
    """Axis-aligned boxes in an ``dim``-dimensional workspace with a search grid.

    Attributes:
        boxes: ``(B, 2, dim)`` array of (min corner, max corner).
        workspace: ``(2, dim)`` lower and upper bounds.
        resolution: grid spacing in meters.
    """

    boxes: NDArray[np.float64]
    workspace: NDArray[np.float64]
    resolution: float

    def __post_init__(self):
        ws = np.asarray(self.workspace, dtype=float)
        if ws.ndim != 2 or ws.shape[0] != 2:
            raise ValueError("workspace must be (2, dim)")
        dim = ws.shape[1]
        boxes = np.asarray(self.boxes, dtype=float).reshape(-1, 2, dim)
        object.__setattr__(self, "workspace", ws)
        object.__setattr__(self, "boxes", boxes)
        if not self.resolution > 0:
            raise ValueError("grid resolution must be positive")
        if np.any(ws[1] <= ws[0]):
            raise ValueError("workspace upper bounds must exceed lower bounds")
        if np.any(boxes[:, 1] < boxes[:, 0]):
            raise ValueError("box max corner below min corner")
        if np.any(boxes[:, 0] < ws[0] - 1e-9) or np.any(boxes[:, 1] > ws[1] + 1e-9):
            raise ValueError("obstacles must lie inside the workspace")

    @property
    def dim(self) -> int:
        return self.workspace.shape[1]

    def to_grid(self, points: ArrayLike) -> NDArray[np.int64]:
        """Grid indices of points that sit on grid nodes.

        Raises:
            InvalidEndpoint: a point is off the grid.
        """
        p = (np.asarray(points, dtype=float) - self.workspace[0]) / self.resolution
        idx = np.rint(p)
        if np.any(np.abs(p - idx) > 1e-6):
            raise InvalidEndpoint("VCS vertices must lie on grid nodes")
        return idx.astype(np.int64)

    def from_grid(self, idx: ArrayLike) -> NDArray[np.float64]:
        return self.workspace[0] + self.resolution * np.asarray(idx, dtype=float)

    def in_workspace(self, points: NDArray[np.float64]) -> bool:
        return bool(np.all(points >= self.workspace[0] - 1e-9) and np.all(points <= self.workspace[1] + 1e-9))

    def simplex_collides(self, vertices: NDArray[np.float64], inflation: float = 0.0) -> bool:
        """Whether a simplex touches any box grown by ``inflation`` on every side."""
        return any(simplex_box_overlap(vertices, b[0] - inflation, b[1] + inflation) for b in self.boxes)


def _sat_axes(vertices: NDArray[np.float64]) -> list[NDArray[np.float64]]:
    dim = vertices.shape[1]
    axes = list(np.eye(dim))
    if dim == 2:
        for i in range(len(vertices)):
            e = vertices[(i + 1) % len(vertices)] - vertices[i]
            axes.append(np.array([-e[1], e[0]]))
    elif dim == 3:
        edges = [vertices[j] - vertices[i] for i, j in itertools.combinations(range(len(vertices)), 2)]
        for i, j, k in itertools.combinations(range(len(vertices)), 3):
            axes.append(np.cross(vertices[j] - vertices[i], vertices[k] - vertices[i]))
        for e in edges:
            for a in np.eye(3):
                axes.append(np.cross(e, a))
    return [a for a in axes if np.dot(a, a) > 1e-18]


def simplex_box_overlap(vertices: ArrayLike, lo: ArrayLike, hi: ArrayLike) -> bool:
    """Separating-axis test between a simplex and a closed axis-aligned box.

    Touching counts as overlap. Works in one, two and three dimensions.
    """
    v = np.asarray(vertices, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    center, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    for a in _sat_axes(v):
        proj = v @ a
        c = center @ a
        r = half @ np.abs(a)
        if proj.min() > c + r or proj.max() < c - r:
            return False
    return True


# --------------------------------------------------------------------------- A*


@dataclass(frozen=True)
class SearchLimits:
    """Validity rules applied to every VCS placement during the search.

    Attributes:
        lambda_floor: lower bound on every in-scope principal stretch.
        inflation: box growth (body radius plus deviation bound).
        lambda_ceiling: optional upper bound on the stretches.
    """

    lambda_floor: float
    inflation: float = 0.0
    lambda_ceiling: float = math.inf

    @classmethod
    def from_safety(cls, params, mode: str = "conservative") -> "SearchLimits":
        """Limits from safety parameters (stretch floor and ``epsilon + delta`` inflation)."""
        floor = params.lambda_cd_min if mode == "conservative" else params.lambda_min
        return cls(float(floor), float(params.epsilon + params.delta))


@dataclass
class AStarResult:
    """Outcome of a VCS search.

    Attributes:
        path: ``(K+1, n+1, dim)`` vertex placements from start to goal.
        cost: summed vertex travel in meters.
        expanded: number of expanded nodes.
        heuristic_checks: expanded nodes whose heuristic was compared with a
            lower bound on the remaining cost.
        heuristic_violations: count of failed comparisons (always zero for the
            built-in heuristic).
        stretches: per-placement in-scope principal stretches.
    """

    path: NDArray[np.float64]
    cost: float
    expanded: int
    heuristic_checks: int = 0
    heuristic_violations: int = 0
    stretches: NDArray[np.float64] | None = None

    def waypoints(self) -> NDArray[np.float64]:
        """Path with consecutive collinear moves merged."""
        return merge_collinear(self.path)


class VCSSearch:
    """Grid search over VCS vertex placements.

    States are integer grid coordinates of all ``n+1`` vertices. A move either
    shifts every vertex one grid step along one axis or shifts a single vertex
    one grid step. The step cost is the summed vertex travel, counted here in
    grid steps so that costs stay exact integers.
    """

    def __init__(self, obstacles: ObstacleMap, vcs_ref: ArrayLike, limits: SearchLimits):
        self.map = obstacles
        self.limits = limits
        self.dim = obstacles.dim
        ref = np.asarray(vcs_ref, dtype=float)[:, : self.dim]
        if ref.shape[0] != self.dim + 1:
            raise InvalidEndpoint(f"a {self.dim}-D VCS needs {self.dim + 1} vertices")
        e0 = (ref[1:] - ref[0]).T
        if abs(np.linalg.det(e0)) < 1e-12 * max(1.0, np.abs(e0).max()) ** self.dim:
            raise InvalidEndpoint("reference VCS is degenerate")
        self.ref = ref
        self.e0_inv = np.linalg.inv(e0)
        self._valid: dict[tuple[int, ...], bool] = {}
        self._e0_inv = self.e0_inv.tolist()
        self._boxes = obstacles.boxes.tolist()
        self.moves = self._moves()

    def _moves(self) -> list[tuple[tuple[int, ...], int]]:
        m, d = self.dim + 1, self.dim
        moves = []
        for axis in range(d):
            for sign in (1, -1):
                rigid = [0] * (m * d)
                for v in range(m):
                    rigid[v * d + axis] = sign
                moves.append((tuple(rigid), m))
        for v in range(m):
            for axis in range(d):
                for sign in (1, -1):
                    step = [0] * (m * d)
                    step[v * d + axis] = sign
                    moves.append((tuple(step), 1))
        return moves

    def vertices(self, state: tuple[int, ...]) -> NDArray[np.float64]:
        return self.map.from_grid(np.array(state).reshape(self.dim + 1, self.dim))

    def stretches(self, verts: NDArray[np.float64]) -> tuple[float, NDArray[np.float64]]:
        """Orientation determinant and singular values of the in-scope Jacobian."""
        q = (verts[1:] - verts[0]).T @ self.e0_inv
        return float(np.linalg.det(q)), np.linalg.svd(q, compute_uv=False)

    def is_valid(self, state: tuple[int, ...]) -> bool:
        hit = self._valid.get(state)
        if hit is not None:
            return hit
        ok = self._valid_planar(state) if self.dim == 2 else self._valid_generic(state)
        self._valid[state] = ok
        return ok

    def _valid_planar(self, state: tuple[int, ...]) -> bool:
        # scalar arithmetic; numpy overhead dominates for a single triangle
        res = self.map.resolution
        (lx, ly), (ux, uy) = self.map.workspace.tolist()
        x0, y0, x1, y1, x2, y2 = (lx + res * state[0], ly + res * state[1], lx + res * state[2],
                                  ly + res * state[3], lx + res * state[4], ly + res * state[5])
        tol = 1e-9
        for x, y in ((x0, y0), (x1, y1), (x2, y2)):
            if x < lx - tol or x > ux + tol or y < ly - tol or y > uy + tol:
                return False
        (a, b), (c, d) = self._e0_inv
        e11, e12, e21, e22 = x1 - x0, x2 - x0, y1 - y0, y2 - y0
        q11, q12 = e11 * a + e12 * c, e11 * b + e12 * d
        q21, q22 = e21 * a + e22 * c, e21 * b + e22 * d
        det = q11 * q22 - q12 * q21
        if det <= 1e-12:
            return False
        fro = q11 * q11 + q12 * q12 + q21 * q21 + q22 * q22
        disc = math.sqrt(max(fro * fro - 4.0 * det * det, 0.0))
        s_max = math.sqrt(0.5 * (fro + disc))
        s_min = det / s_max
        if s_min < self.limits.lambda_floor - 1e-12 or s_max > self.limits.lambda_ceiling + 1e-12:
            return False
        r = self.limits.inflation
        xs, ys = (x0, x1, x2), (y0, y1, y2)
        normals = ((y0 - y1, x1 - x0), (y1 - y2, x2 - x1), (y2 - y0, x0 - x2))
        for (bx0, by0), (bx1, by1) in self._boxes:
            bx0, by0, bx1, by1 = bx0 - r, by0 - r, bx1 + r, by1 + r
            if min(xs) > bx1 or max(xs) < bx0 or min(ys) > by1 or max(ys) < by0:
                continue
            separated = False
            for nx, ny in normals:
                p = [nx * x + ny * y for x, y in zip(xs, ys)]
                corners = (nx * bx0 + ny * by0, nx * bx1 + ny * by0, nx * bx0 + ny * by1, nx * bx1 + ny * by1)
                if min(p) > max(corners) or max(p) < min(corners):
                    separated = True
                    break
            if not separated:
                return False
        return True

    def _valid_generic(self, state: tuple[int, ...]) -> bool:
        verts = self.vertices(state)
        ok = self.map.in_workspace(verts)
        if ok:
            det, sv = self.stretches(verts)
            ok = (
                det > 0.0
                and geometry.simplex_rank(pad_vertices(verts)) == self.dim
                and sv.min() >= self.limits.lambda_floor - 1e-12
                and sv.max() <= self.limits.lambda_ceiling + 1e-12
                and not self.map.simplex_collides(verts, self.limits.inflation)
            )
        return ok

    def successors(self, state: tuple[int, ...]) -> Iterable[tuple[tuple[int, ...], int]]:
        for delta, cost in self.moves:
            nxt = tuple(a + b for a, b in zip(state, delta))
            if self.is_valid(nxt):
                yield nxt, cost

    def heuristic(self, state: tuple[int, ...], goal: tuple[int, ...]) -> float:
        return math.sqrt(sum((a - b) ** 2 for a, b in zip(state, goal)))

    def lower_bound(self, state: tuple[int, ...], goal: tuple[int, ...]) -> int:
        """Summed per-vertex grid distance: no path to the goal can cost less."""
        return sum(abs(a - b) for a, b in zip(state, goal))

    def endpoint(self, vertices: ArrayLike, label: str) -> tuple[int, ...]:
        v = np.asarray(vertices, dtype=float)[:, : self.dim]
        state = tuple(int(x) for x in self.map.to_grid(v).ravel())
        if not self.is_valid(state):
            raise InvalidEndpoint(f"{label} VCS placement is not valid (obstacle, workspace, orientation or stretch bound)")
        return state

    def finish(self, parents, goal, cost, expanded, checks, bad) -> AStarResult:
        path = [goal]
        while parents[path[-1]] is not None:
            path.append(parents[path[-1]])
        path.reverse()
        verts = np.array([self.vertices(s) for s in path])
        sv = np.array([self.stretches(v)[1] for v in verts])
        return AStarResult(verts, cost * self.map.resolution, expanded, checks, bad, sv)


def astar_plan(
    obstacles: ObstacleMap,
    vcs_ref: ArrayLike,
    vcs_start: ArrayLike,
    vcs_goal: ArrayLike,
    limits: SearchLimits,
    *,
    max_expansions: int = 2_000_000,
) -> AStarResult:
    """Minimum-travel VCS placement sequence between two grid-aligned placements.

    The heuristic is the Euclidean norm of the stacked vertex offsets to the
    goal. Every expansion also checks it against the summed per-vertex grid
    distance, a lower bound on the remaining cost; the counts are reported in
    the result. Ties on ``f`` go to the smaller heuristic, then to the
    lexicographically smaller vertex tuple.

    Raises:
        InvalidEndpoint: start or goal placement is off-grid or invalid.
        NoPath: the open set empties (or the expansion budget runs out).
    """
    search = VCSSearch(obstacles, vcs_ref, limits)
    start = search.endpoint(vcs_start, "start")
    goal = search.endpoint(vcs_goal, "goal")
    h0 = search.heuristic(start, goal)
    open_heap = [(h0, h0, start)]
    g_cost = {start: 0}
    parents: dict[tuple[int, ...], tuple[int, ...] | None] = {start: None}
    closed: set[tuple[int, ...]] = set()
    checks = bad = 0
    while open_heap:
        f, h, state = heapq.heappop(open_heap)
        if state in closed:
            continue
        closed.add(state)
        checks += 1
        if h > search.lower_bound(state, goal) + 1e-9:
            bad += 1
        if state == goal:
            return search.finish(parents, goal, g_cost[goal], len(closed), checks, bad)
        if len(closed) > max_expansions:
            break
        g = g_cost[state]
        for nxt, step in search.successors(state):
            if nxt in closed:
                continue
            ng = g + step
            if ng < g_cost.get(nxt, math.inf):
                g_cost[nxt] = ng
                parents[nxt] = state
                hn = search.heuristic(nxt, goal)
                heapq.heappush(open_heap, (ng + hn, hn, nxt))
    raise NoPath(f"no valid VCS sequence after {len(closed)} expansions")


def uniform_cost_plan(
    obstacles: ObstacleMap,
    vcs_ref: ArrayLike,
    vcs_start: ArrayLike,
    vcs_goal: ArrayLike,
    limits: SearchLimits,
) -> AStarResult:
    """Dijkstra over the same successor graph as :func:`astar_plan` (no heuristic)."""
    search = VCSSearch(obstacles, vcs_ref, limits)
    start = search.endpoint(vcs_start, "start")
    goal = search.endpoint(vcs_goal, "goal")
    dist = {start: 0}
    parents: dict[tuple[int, ...], tuple[int, ...] | None] = {start: None}
    heap = [(0, start)]
    done: set[tuple[int, ...]] = set()
    while heap:
        g, state = heapq.heappop(heap)
        if state in done:
            continue
        done.add(state)
        if state == goal:
            return search.finish(parents, goal, g, len(done), 0, 0)
        for nxt, step in search.successors(state):
            ng = g + step
            if ng < dist.get(nxt, math.inf):
                dist[nxt] = ng
                parents[nxt] = state
                heapq.heappush(heap, (ng, nxt))
    raise NoPath("goal unreachable")


def merge_collinear(path: ArrayLike) -> NDArray[np.float64]:
    """Drop placements where the vertex displacement keeps its direction."""
    p = np.asarray(path, dtype=float)
    if len(p) <= 2:
        return p.copy()
    keep = [0]
    for k in range(1, len(p) - 1):
        a = (p[k] - p[keep[-1]]).ravel()
        b = (p[k + 1] - p[k]).ravel()
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na == 0 or nb == 0 or abs(a @ b - na * nb) > 1e-9 * na * nb:
            keep.append(k)
    keep.append(len(p) - 1)
    return p[keep]


def pad_vertices(vertices: ArrayLike) -> NDArray[np.float64]:
    """Embed ``(..., n+1, n)`` vertices in 3-D with zero trailing axes."""
    v = np.asarray(vertices, dtype=float)
    out = np.zeros(v.shape[:-1] + (3,))
    out[..., : v.shape[-1]] = v
    return out


def plan_from_path(
    result: AStarResult | ArrayLike,
    vcs_ref: ArrayLike,
    durations: ArrayLike | float,
    t0: float = 0.0,
) -> Plan:
    """OL plan through merged waypoints; a scalar duration is used for every segment."""
    wp = result.waypoints() if isinstance(result, AStarResult) else np.asarray(result, dtype=float)
    n = wp.shape[-2] - 1
    wp3 = pad_vertices(wp)
    dur = np.broadcast_to(np.asarray(durations, dtype=float), (len(wp3) - 1,))
    return ol_plan(n, vcs_ref, list(wp3), list(dur), t0)


# --------------------------------------------------------------------------- travel time


def min_travel_time(
    s_start: ArrayLike,
    s_end: ArrayLike,
    cfg: ReferenceConfiguration,
    model,
    gains,
    params,
    bounds,
    *,
    mode: str = "OF",
    deformation_angles=(0.0, 0.0, 0.0),
    vcs_ref: ArrayLike | None = None,
    T_min: float = 1.0,
    T_cap: float = 4096.0,
    rtol: float = 0.01,
    dt: float = 0.01,
    feasible: Callable[[float], bool] | None = None,
) -> float:
    """Shortest segment time whose closed-loop rollout stays within limits.

    A rollout is feasible when every real agent keeps its deviation within
    ``params.delta``, every input stays inside ``bounds`` and no guard trips.
    The search doubles ``T`` from ``T_min`` until a feasible time appears, then
    bisects until the bracket is within ``rtol`` of its upper end. The rollout
    test is :func:`segment_feasible`.

    Args:
        feasible: optional replacement for the rollout test (used in tests).

    Raises:
        InfeasibleSegment: nothing up to ``T_cap`` is feasible.
    """
    s_start = np.asarray(s_start, dtype=float)
    s_end = np.asarray(s_end, dtype=float)
    if np.allclose(s_start, s_end, rtol=0.0, atol=1e-12):
        return float(T_min)
    if feasible is None:
        def feasible(T: float) -> bool:
            return segment_feasible(
                T, s_start, s_end, cfg, model, gains, params, bounds,
                mode=mode, deformation_angles=deformation_angles, vcs_ref=vcs_ref, dt=dt,
            )

    lo, hi = None, float(T_min)
    while not feasible(hi):
        lo = hi
        hi *= 2.0
        if hi > T_cap:
            raise InfeasibleSegment(f"no feasible segment time up to {T_cap} s")
    if lo is None:
        return hi
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def segment_feasible(
    T: float,
    s_start: ArrayLike,
    s_end: ArrayLike,
    cfg: ReferenceConfiguration,
    model,
    gains,
    params,
    bounds,
    *,
    mode: str = "OF",
    deformation_angles=(0.0, 0.0, 0.0),
    vcs_ref: ArrayLike | None = None,
    dt: float = 0.01,
    settle: float = 5.0,
    deviation_share: float = 0.5,
) -> bool:
    """Roll out one rest-to-rest segment of length ``T`` and test the limits.

    The team starts hovering at the segment start and the run continues for
    ``settle`` seconds after the segment ends. The quintic has non-zero jerk at
    both ends, so this exposes the jerk steps a chained plan sees at every
    waypoint. Tracking error is linear in those steps and each waypoint sees
    the end of one segment and the start of the next, so a segment only gets
    ``deviation_share`` of the deviation budget ``params.delta``.
    """
    from .dynamics import simulate_team, state_from_flat_outputs
    from .errors import GuardTripped, SingularLinearization

    plan = Plan(mode, cfg.n, np.array([s_start, s_end]), np.array([T]),
                deformation_angles=tuple(deformation_angles), vcs_ref=vcs_ref)
    try:
        start = desired_positions(cfg, plan.leader_jet(cfg, [plan.t0], 0)[0, 0])
        zero = np.zeros_like(start)
        x0 = state_from_flat_outputs(start, zero, zero, zero)
        horizon = T + settle
        traj = simulate_team(cfg, model, plan, gains, dt=dt, horizon=horizon, bounds=bounds,
                             record_every=max(1, int(horizon / dt)), initial_state=x0)
    except (GuardTripped, SingularLinearization, InvalidFeature):
        return False
    if traj.max_deviation.max() > deviation_share * params.delta:
        return False
    if np.any(traj.max_input > bounds.channels):
        return False
    f_lo, f_hi = traj.thrust_range[:, 0].min(), traj.thrust_range[:, 1].max()
    return bool(f_lo >= bounds.F_min and f_hi <= bounds.F_max and traj.max_tilt.max() <= bounds.tilt_max)
