"""Safety conditions and closed-form bounds.

Four conditions make a coordination valid over a time interval:

1. bounded deviation: every vehicle stays within ``delta`` of its desired position;
2. inter-agent collision avoidance, certified through the stretch bounds;
3. containment: every vehicle stays strictly inside the containment simplex (VCS);
4. input feasibility: every input stays in the admissible box.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Any, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import geometry
from .errors import AnglesNotConstant, TooDense
from .formation import ReferenceConfiguration

ANGLE_TOL = 1e-9
# bounds are often met with equality (e.g. the final stretch equals lambda_min)
BOUND_TOL = 1e-9


@dataclass(frozen=True)
class SafetyParameters:
    """Reference geometry bounds for a team.

    ``pair`` is the agent pair achieving ``d_s``; ``u1_ref`` points from the
    first to the second, flipped so its x component is non-negative.
    """

    epsilon: float
    delta: float
    d_s: float
    d_b: float
    delta_max: float
    lambda_min: float
    lambda_cd_min: float
    u1_ref: tuple[float, float, float]
    theta_u0: float
    psi_u0: float
    pair: tuple[int, int] = (0, 0)

    def with_delta(self, delta: float) -> "SafetyParameters":
        lam_min, lam_cd = stretch_bounds(delta, self.epsilon, self.d_s, self.delta_max)
        return replace(self, delta=float(delta), lambda_min=lam_min, lambda_cd_min=lam_cd)

    @property
    def deformation_angles(self) -> tuple[float, float, float]:
        """Pinned stretch-direction angles, with phi fixed to zero."""
        return (0.0, self.theta_u0, self.psi_u0)


def delta_max_from(d_s: float, d_b: float, epsilon: float) -> float:
    """``min(d_b - eps, (d_s - 2 eps) / 2)``."""
    return float(min(d_b - epsilon, 0.5 * (d_s - 2.0 * epsilon)))


def stretch_bounds(delta: float, epsilon: float, d_s: float, delta_max: float) -> tuple[float, float]:
    """``(lambda_min, lambda_cd_min)`` for a deviation bound."""
    return 2.0 * (delta + epsilon) / d_s, (delta + epsilon) / (delta_max + epsilon)


def conservative_bound(params: SafetyParameters) -> tuple[float, float]:
    return stretch_bounds(params.delta, params.epsilon, params.d_s, params.delta_max)


def delta_from_lambda_cd(lam: float, delta_max: float, epsilon: float) -> float:
    """Inverse of the containment-and-collision bound: ``lam (delta_max + eps) - eps``."""
    return float(lam * (delta_max + epsilon) - epsilon)


def delta_from_lambda_min(lam: float, d_s: float, epsilon: float) -> float:
    """Inverse of the collision-only bound: ``lam d_s / 2 - eps``."""
    return float(0.5 * lam * d_s - epsilon)


def direction_angles(u: ArrayLike) -> tuple[float, float]:
    """``(theta, psi)`` with ``theta = -asin(u_z)`` and ``psi = atan2(u_y, u_x)``."""
    u = np.asarray(u, dtype=float)
    u = u / np.linalg.norm(u)
    return float(-np.arcsin(np.clip(u[2], -1.0, 1.0))), float(np.arctan2(u[1], u[0]))


def _canonical_direction(u: NDArray[np.float64]) -> NDArray[np.float64]:
    u = u / np.linalg.norm(u)
    for c in u:
        if abs(c) > 1e-12:
            return u if c > 0 else -u
    return u


def min_separation(points: ArrayLike) -> tuple[float, int, int]:
    """Smallest pairwise distance and the (row) indices achieving it."""
    p = np.asarray(points, dtype=float)
    diff = p[:, None, :] - p[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    dist[np.diag_indices(len(p))] = np.inf
    k = int(np.argmin(dist))
    i, j = divmod(k, len(p))
    return float(dist[i, j]), min(i, j), max(i, j)


def boundary_distance(points: ArrayLike, vcs: ArrayLike) -> NDArray[np.float64]:
    """Signed distance of each point to the VCS boundary (negative outside)."""
    vcs = np.asarray(vcs, dtype=float)
    bary = geometry.barycentric_many(vcs, points)
    out = np.empty(len(bary))
    for k, p in enumerate(np.asarray(points, dtype=float)):
        dist = geometry.point_simplex_distance(p, vcs)
        out[k] = dist if np.all(bary[k] > 0) else -dist
    return out


def reference_metrics(
    cfg: ReferenceConfiguration, vcs: ArrayLike, epsilon: float, delta: float | None = None
) -> SafetyParameters:
    """Compute ``d_s``, ``d_b``, ``delta_max`` and the pinned direction.

    ``delta`` defaults to ``delta_max``.

    Raises:
        TooDense: ``d_s <= 2 epsilon``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    ids = cfg.real_ids
    pts = cfg.ref_array(ids)
    d_s, a, b = min_separation(pts)
    if d_s <= 2.0 * epsilon:
        raise TooDense(f"d_s = {d_s:.4g} m leaves no room for vehicles of radius {epsilon}")
    u1 = _canonical_direction(pts[b] - pts[a])
    theta_u0, psi_u0 = direction_angles(u1)
    d_b = float(boundary_distance(pts, vcs).min())
    delta_max = delta_max_from(d_s, d_b, epsilon)
    delta = delta_max if delta is None else float(delta)
    lam_min, lam_cd = stretch_bounds(delta, epsilon, d_s, delta_max)
    return SafetyParameters(
        float(epsilon), delta, d_s, d_b, delta_max, lam_min, lam_cd,
        tuple(map(float, u1)), theta_u0, psi_u0, (ids[a], ids[b]),
    )


# --------------------------------------------------------------------------- reports


@dataclass
class ConditionResult:
    """Outcome of one condition with its worst case.

    ``margin`` is positive when satisfied; ``time`` and ``agents`` locate the
    worst sample.
    """

    name: str
    passed: bool
    margin: float
    time: float | None = None
    agents: tuple[int, ...] = ()
    detail: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["agents"] = list(self.agents)
        return d


@dataclass
class SafetyReport:
    mode: str
    conditions: dict[str, ConditionResult] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    def add(self, result: ConditionResult) -> None:
        self.conditions[result.name] = result

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "passed": self.passed,
            "conditions": {k: v.to_dict() for k, v in self.conditions.items()},
        }


def in_scope_stretches(Q: ArrayLike, n: int) -> NDArray[np.float64]:
    """Principal stretches acting inside the deformation subspace.

    For ``n < 3`` only the first ``n`` reference axes carry agents, so the
    stretches are the singular values of the corresponding columns of ``Q``.
    """
    q = np.asarray(Q, dtype=float)
    return np.linalg.svd(q[..., :, :n], compute_uv=False)


def check_conservative(
    jacobians: ArrayLike, params: SafetyParameters, times: ArrayLike | None = None, n: int = 3
) -> ConditionResult:
    """Every in-scope stretch at every sample is at least ``lambda_cd_min``."""
    qs = np.asarray(jacobians, dtype=float).reshape(-1, 3, 3)
    lam = in_scope_stretches(qs, n).min(axis=1)
    times = np.arange(len(qs), dtype=float) if times is None else np.asarray(times, dtype=float)
    bad = np.nonzero(lam < params.lambda_cd_min - BOUND_TOL)[0]
    k = int(bad[0]) if bad.size else int(np.argmin(lam))
    return ConditionResult(
        "collision_conservative",
        not bad.size,
        float(lam.min() - params.lambda_cd_min),
        float(times[k]),
        detail={"min_stretch": float(lam.min()), "lambda_cd_min": params.lambda_cd_min,
                "first_violation_index": int(bad[0]) if bad.size else None},
    )


def pinned_stretch(Q: ArrayLike, u1: ArrayLike) -> tuple[float, float]:
    """Stretch along a fixed reference direction and how far it is from principal.

    Returns ``(lambda_1, residual)`` where ``residual`` is
    ``|U_D u - lambda_1 u| / |U_D|``.
    """
    _, u_d = geometry.polar_decompose(Q)
    u = np.asarray(u1, dtype=float)
    u = u / np.linalg.norm(u)
    lam = float(u @ u_d @ u)
    resid = float(np.linalg.norm(u_d @ u - lam * u) / np.linalg.norm(u_d, 2))
    return lam, resid


def check_relaxed(
    jacobians: ArrayLike, params: SafetyParameters, times: ArrayLike | None = None
) -> ConditionResult:
    """Stretch along the pinned direction stays at least ``lambda_min``.

    The pinned reference direction must remain a principal direction at every
    sample, which is what fixed deformation angles guarantee.

    On its own this bounds only pairs separated by at least ``d_s`` along the
    pinned direction. Pairs lying across it shrink with the other stretches, so
    :func:`certify` always runs :func:`pairwise_oracle` as well.

    Raises:
        AnglesNotConstant: the pinned direction stops being principal.
    """
    qs = np.asarray(jacobians, dtype=float).reshape(-1, 3, 3)
    times = np.arange(len(qs), dtype=float) if times is None else np.asarray(times, dtype=float)
    lam = np.empty(len(qs))
    for k, q in enumerate(qs):
        lam[k], resid = pinned_stretch(q, params.u1_ref)
        if resid > ANGLE_TOL:
            raise AnglesNotConstant(
                f"pinned direction is not principal at t={times[k]:.4g} (residual {resid:.3g})"
            )
    bad = np.nonzero(lam < params.lambda_min - BOUND_TOL)[0]
    k = int(bad[0]) if bad.size else int(np.argmin(lam))
    return ConditionResult(
        "collision_relaxed",
        not bad.size,
        float(lam.min() - params.lambda_min),
        float(times[k]),
        detail={"min_pinned_stretch": float(lam.min()), "lambda_min": params.lambda_min},
    )


def check_containment(
    positions: ArrayLike, vcs: ArrayLike, times: ArrayLike | None = None, ids: Sequence[int] | None = None
) -> ConditionResult:
    """All agents strictly inside the VCS at every sample.

    Args:
        positions: ``(T, N, 3)`` agent positions.
        vcs: ``(T, n+1, 3)`` VCS vertices, or one ``(n+1, 3)`` placement.
    """
    pos = np.asarray(positions, dtype=float)
    if pos.ndim == 2:
        pos = pos[None]
    vcs = np.asarray(vcs, dtype=float)
    if vcs.ndim == 2:
        vcs = np.broadcast_to(vcs, (len(pos),) + vcs.shape)
    times = np.arange(len(pos), dtype=float) if times is None else np.asarray(times, dtype=float)
    ids = tuple(range(pos.shape[1])) if ids is None else tuple(ids)
    worst, where = np.inf, (0, 0)
    for k in range(len(pos)):
        bary = geometry.barycentric_many(vcs[k], pos[k])
        m = bary.min(axis=1)
        a = int(np.argmin(m))
        if m[a] < worst:
            worst, where = float(m[a]), (k, a)
    k, a = where
    return ConditionResult("containment", worst > 0.0, worst, float(times[k]), (ids[a],))


def pairwise_oracle(
    positions: ArrayLike, threshold: float, times: ArrayLike | None = None, ids: Sequence[int] | None = None
) -> ConditionResult:
    """Brute-force minimum pairwise distance against ``threshold``."""
    pos = np.asarray(positions, dtype=float)
    if pos.ndim == 2:
        pos = pos[None]
    times = np.arange(len(pos), dtype=float) if times is None else np.asarray(times, dtype=float)
    ids = tuple(range(pos.shape[1])) if ids is None else tuple(ids)
    iu = np.triu_indices(pos.shape[1], 1)
    best, where = np.inf, (0, 0)
    for start in range(0, len(pos), 2048):
        chunk = pos[start : start + 2048]
        diff = chunk[:, :, None, :] - chunk[:, None, :, :]
        dist = np.linalg.norm(diff, axis=-1)[:, iu[0], iu[1]]
        flat = int(np.argmin(dist))
        k, p = divmod(flat, dist.shape[1])
        if dist[k, p] < best:
            best, where = float(dist[k, p]), (start + k, p)
    k, p = where
    return ConditionResult(
        "pairwise_separation", best >= threshold - BOUND_TOL * max(1.0, threshold), best - threshold, float(times[k]),
        (ids[iu[0][p]], ids[iu[1][p]]), detail={"min_distance": best, "threshold": threshold},
    )


def check_deviation_and_inputs(trajectory, params: SafetyParameters, bounds) -> tuple[ConditionResult, ConditionResult]:
    """Deviation of followers against ``delta`` and inputs against ``bounds``."""
    value, agent, when = trajectory.sup_deviation()
    dev = ConditionResult(
        "deviation", value <= params.delta, params.delta - value, when, (agent,),
        detail={"sup_deviation": value, "delta": params.delta},
    )
    lim = bounds.channels
    ratio = trajectory.max_input / lim
    a, c = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    f_lo, f_hi = trajectory.thrust_range[:, 0].min(), trajectory.thrust_range[:, 1].max()
    tilt = float(trajectory.max_tilt.max())
    margins = {
        "input": float(1.0 - ratio.max()),
        "thrust_low": float(f_lo - bounds.F_min),
        "thrust_high": float(bounds.F_max - f_hi),
        "tilt": float(bounds.tilt_max - tilt),
    }
    worst = min(margins, key=margins.get)
    inputs = ConditionResult(
        "inputs", all(m >= 0 for m in margins.values()), margins[worst], None,
        (trajectory.ids[a],),
        detail={
            "max_abs_input": trajectory.max_input.max(axis=0).tolist(),
            "worst_channel": ("u_T", "u_phi", "u_theta")[c],
            "thrust_range": [float(f_lo), float(f_hi)],
            "max_tilt": tilt,
            "limiting": worst,
        },
    )
    return dev, inputs


def plan_jacobians(plan, cfg: ReferenceConfiguration, times: ArrayLike) -> NDArray[np.float64]:
    """Jacobian ``Q`` of the plan at each time, from the leader positions."""
    lead = plan.leader_jet(cfg, times, 0)[0]
    refs = cfg.leader_refs
    return np.array([geometry.transform_from_leaders(refs, p)[0] for p in lead])


def vcs_positions(plan, cfg: ReferenceConfiguration, vcs_ref: ArrayLike, times: ArrayLike) -> NDArray[np.float64]:
    """VCS vertices over time, moved by the same map as the leaders."""
    times = np.asarray(times, dtype=float)
    if getattr(plan, "mode", "OF") == "OL":
        return plan.vcs_vertices(times)
    lead = plan.leader_jet(cfg, times, 0)[0]
    refs = cfg.leader_refs
    out = []
    for p in lead:
        q, d = geometry.transform_from_leaders(refs, p)
        out.append(geometry.apply(q, d, vcs_ref))
    return np.array(out)


def certify(
    cfg: ReferenceConfiguration,
    plan,
    params: SafetyParameters,
    times: ArrayLike,
    vcs_ref: ArrayLike | None = None,
    trajectory=None,
    bounds=None,
    mode: str = "conservative",
) -> SafetyReport:
    """Evaluate all four conditions for a plan (and optionally a simulated run)."""
    times = np.asarray(times, dtype=float)
    report = SafetyReport(mode)
    qs = plan_jacobians(plan, cfg, times)
    if mode == "relaxed":
        report.add(check_relaxed(qs, params, times))
    else:
        report.add(check_conservative(qs, params, times, cfg.n))
    lead = plan.leader_jet(cfg, times, 0)[0]
    from .formation import alpha_matrix

    desired = np.einsum("al,tlj->taj", alpha_matrix(cfg), lead)
    report.add(pairwise_oracle(desired, 2.0 * (params.delta + params.epsilon), times, cfg.real_ids))
    if vcs_ref is not None:
        if trajectory is not None:
            vcs_t = vcs_positions(plan, cfg, vcs_ref, trajectory.times)
            report.add(check_containment(trajectory.positions, vcs_t, trajectory.times, trajectory.ids))
        else:
            vcs_t = vcs_positions(plan, cfg, vcs_ref, times)
            report.add(check_containment(desired, vcs_t, times, cfg.real_ids))
    if trajectory is not None and bounds is not None:
        dev, inp = check_deviation_and_inputs(trajectory, params, bounds)
        report.add(dev)
        report.add(inp)
    return report


__all__ = [
    "ConditionResult",
    "SafetyParameters",
    "SafetyReport",
    "boundary_distance",
    "certify",
    "check_conservative",
    "check_containment",
    "check_deviation_and_inputs",
    "check_relaxed",
    "vcs_positions",
    "conservative_bound",
    "delta_from_lambda_cd",
    "delta_from_lambda_min",
    "delta_max_from",
    "direction_angles",
    "in_scope_stretches",
    "min_separation",
    "pairwise_oracle",
    "pinned_stretch",
    "plan_jacobians",
    "reference_metrics",
    "stretch_bounds",
]
