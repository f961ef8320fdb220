"""Quadcopter plant, feedback linearization, control law and team simulation.

State layout (14 entries per vehicle)::

    0-2   x, y, z               7-9   phi, theta, psi
    3-5   vx, vy, vz            10    F_dot
    6     F (thrust per mass)   11-13 phi_dot, theta_dot, psi_dot

Inputs ``(u_T, u_phi, u_theta)`` drive the second derivatives of
``(F, phi, theta)``; yaw follows ``psi_dd = -k_psi_dot psi_dot - k_psi psi``.
Acceleration is ``F * Lam(phi, theta, psi) - g e3`` with the unit thrust
direction ``Lam = (c_phi s_theta c_psi + s_phi s_psi, c_phi s_theta s_psi - s_phi c_psi, c_phi c_theta)``.

Differentiating twice gives ``snap = M u + n`` with
``M = [Lam, F Lam_phi, F Lam_theta]``. The three columns of ``[Lam, Lam_phi,
Lam_theta]`` are mutually orthogonal with norms ``1, 1, |cos phi|``, so ``M``
is inverted in closed form and is singular only for ``F = 0`` or
``cos phi = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import GuardTripped, InputSaturated, SingularLinearization

G = 9.81
RHO = 4
STATE_DIM = 14
SINGULAR_TOL = 1e-9


# --------------------------------------------------------------------------- parameters


@dataclass(frozen=True)
class GainSet:
    """Per-axis gains of the position loop and the yaw loop.

    ``gamma[k-1]`` multiplies the error derivative of order ``4 - k``.
    ``Xi`` is the highest reference derivative order used in error feedback;
    ``Xi = 4`` adds snap feed-forward and gives fully decoupled error dynamics.
    """

    gamma: tuple[float, float, float, float] = (8.0, 24.0, 32.0, 16.0)
    Xi: int = RHO
    k_psi: float = 4.0
    k_psi_dot: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        if len(self.gamma) != RHO:
            raise ValueError(f"need {RHO} gains, got {len(self.gamma)}")
        if not 1 <= int(self.Xi) <= RHO:
            raise ValueError(f"Xi must be in 1..{RHO}, got {self.Xi}")

    def poles(self) -> NDArray[np.complex128]:
        return np.roots((1.0,) + self.gamma)

    @property
    def is_stable(self) -> bool:
        yaw = np.roots((1.0, self.k_psi_dot, self.k_psi))
        return bool(np.all(self.poles().real < 0) and np.all(yaw.real < 0))


@dataclass(frozen=True)
class InputBounds:
    """Admissible input box and flight envelope."""

    u_T: float = 200.0
    u_phi: float = 50.0
    u_theta: float = 50.0
    F_min: float = 0.2 * G
    F_max: float = 2.5 * G
    tilt_max: float = np.pi / 3

    @property
    def channels(self) -> NDArray[np.float64]:
        return np.array([self.u_T, self.u_phi, self.u_theta])


# --------------------------------------------------------------------------- thrust geometry


def _trig(phi, theta, psi):
    return np.sin(phi), np.cos(phi), np.sin(theta), np.cos(theta), np.sin(psi), np.cos(psi)


def thrust_direction(phi, theta, psi) -> NDArray[np.float64]:
    """Unit thrust direction; trailing axis of size 3."""
    sf, cf, st, ct, sp, cp = _trig(phi, theta, psi)
    return np.stack([cf * st * cp + sf * sp, cf * st * sp - sf * cp, cf * ct], axis=-1)


def thrust_partials(phi, theta, psi):
    """Thrust direction, its first partials and second partials.

    Returns:
        ``lam`` and ``J`` with columns (d/dphi, d/dtheta, d/dpsi), and ``H``
        with ``H[..., :, a, b]`` the mixed second partial.
    """
    sf, cf, st, ct, sp, cp = _trig(phi, theta, psi)
    z = np.zeros_like(sf * st * sp)
    lam = np.stack([cf * st * cp + sf * sp, cf * st * sp - sf * cp, cf * ct], axis=-1)
    l_f = np.stack([-sf * st * cp + cf * sp, -sf * st * sp - cf * cp, -sf * ct], axis=-1)
    l_t = np.stack([cf * ct * cp, cf * ct * sp, -cf * st], axis=-1)
    l_p = np.stack([-cf * st * sp + sf * cp, cf * st * cp + sf * sp, z], axis=-1)
    l_ff = -lam
    l_tt = np.stack([-cf * st * cp, -cf * st * sp, -cf * ct], axis=-1)
    l_pp = np.stack([-cf * st * cp - sf * sp, -cf * st * sp + sf * cp, z], axis=-1)
    l_ft = np.stack([-sf * ct * cp, -sf * ct * sp, sf * st], axis=-1)
    l_fp = np.stack([sf * st * sp + cf * cp, -sf * st * cp + cf * sp, z], axis=-1)
    l_tp = np.stack([-cf * ct * sp, cf * ct * cp, z], axis=-1)
    J = np.stack([l_f, l_t, l_p], axis=-1)
    H = np.stack(
        [
            np.stack([l_ff, l_ft, l_fp], axis=-1),
            np.stack([l_ft, l_tt, l_tp], axis=-1),
            np.stack([l_fp, l_tp, l_pp], axis=-1),
        ],
        axis=-1,
    )
    return lam, J, H


# --------------------------------------------------------------------------- single vehicle


def _state(state: ArrayLike) -> NDArray[np.float64]:
    s = np.asarray(state, dtype=float)
    if s.shape[-1] != STATE_DIM:
        raise ValueError(f"state needs {STATE_DIM} entries, got {s.shape[-1]}")
    return s


def yaw_acceleration(state: ArrayLike, gains: GainSet = GainSet()) -> NDArray[np.float64]:
    s = _state(state)
    return -gains.k_psi_dot * s[..., 13] - gains.k_psi * s[..., 9]


def quad_derivative(state: ArrayLike, u: ArrayLike, gains: GainSet = GainSet()) -> NDArray[np.float64]:
    """Time derivative of one or many vehicle states (trailing axis 14)."""
    s = _state(state)
    u = np.asarray(u, dtype=float)
    out = np.empty(np.broadcast_shapes(s.shape, u.shape[:-1] + (STATE_DIM,)))
    lam = thrust_direction(s[..., 7], s[..., 8], s[..., 9])
    out[..., 0:3] = s[..., 3:6]
    out[..., 3:6] = s[..., 6, None] * lam
    out[..., 5] -= G
    out[..., 6:10] = s[..., 10:14]
    out[..., 10:13] = u
    out[..., 13] = yaw_acceleration(s, gains)
    return out


def flat_outputs(state: ArrayLike, gains: GainSet = GainSet()) -> NDArray[np.float64]:
    """Position, velocity, acceleration and jerk; shape ``(4, ..., 3)``."""
    s = _state(state)
    lam, J, _ = thrust_partials(s[..., 7], s[..., 8], s[..., 9])
    F, Fd = s[..., 6, None], s[..., 10, None]
    acc = F * lam
    acc[..., 2] -= G
    jerk = Fd * lam + F * np.einsum("...ij,...j->...i", J, s[..., 11:14])
    return np.stack([s[..., 0:3], s[..., 3:6], acc, jerk])


def snap_affine(state: ArrayLike, gains: GainSet = GainSet()):
    """``(M, n)`` with ``snap = M u + n``; batched over leading axes."""
    s = _state(state)
    lam, J, H = thrust_partials(s[..., 7], s[..., 8], s[..., 9])
    F, Fd = s[..., 6, None], s[..., 10, None]
    om = s[..., 11:14]
    psi_dd = yaw_acceleration(s, gains)[..., None]
    M = np.stack([lam, F * J[..., 0], F * J[..., 1]], axis=-1)
    quad = np.einsum("...iab,...a,...b->...i", H, om, om)
    n = 2.0 * Fd * np.einsum("...ij,...j->...i", J, om) + F * (J[..., 2] * psi_dd + quad)
    return M, n


def feedback_linearize(state: ArrayLike, v: ArrayLike, gains: GainSet = GainSet()) -> NDArray[np.float64]:
    """Input that makes the fourth derivative of position equal ``v``.

    Raises:
        SingularLinearization: thrust is zero or ``cos phi`` vanishes.
    """
    s = _state(state)
    F = s[..., 6]
    cphi = np.cos(s[..., 7])
    if np.any(np.abs(F) < SINGULAR_TOL) or np.any(np.abs(cphi) < SINGULAR_TOL):
        raise SingularLinearization("decoupling matrix lost rank (zero thrust or cos(phi) = 0)")
    lam, J, _ = thrust_partials(s[..., 7], s[..., 8], s[..., 9])
    _, n = snap_affine(s, gains)
    w = np.asarray(v, dtype=float) - n
    u_t = np.sum(lam * w, axis=-1)
    u_f = np.sum(J[..., 0] * w, axis=-1) / F
    u_th = np.sum(J[..., 1] * w, axis=-1) / (F * cphi**2)
    return np.stack([u_t, u_f, u_th], axis=-1)


def state_from_flat_outputs(
    pos: ArrayLike, vel: ArrayLike, acc: ArrayLike, jerk: ArrayLike, psi: float = 0.0, psi_dot: float = 0.0
) -> NDArray[np.float64]:
    """Vehicle state whose position derivatives match the given ones exactly."""
    pos, vel, acc, jerk = (np.asarray(a, dtype=float) for a in (pos, vel, acc, jerk))
    shape = np.broadcast_shapes(pos.shape, vel.shape, acc.shape, jerk.shape)
    thrust = acc + np.array([0.0, 0.0, G])
    F = np.linalg.norm(thrust, axis=-1)
    lam = thrust / F[..., None]
    cp, sp = np.cos(psi), np.sin(psi)
    xr = lam[..., 0] * cp + lam[..., 1] * sp
    yr = -lam[..., 0] * sp + lam[..., 1] * cp
    phi = np.arcsin(np.clip(-yr, -1.0, 1.0))
    theta = np.arctan2(xr, lam[..., 2])
    psi_arr = np.broadcast_to(np.asarray(psi, dtype=float), F.shape)
    _, J, _ = thrust_partials(phi, theta, psi_arr)
    w = jerk - F[..., None] * J[..., 2] * psi_dot
    F_dot = np.sum(lam * w, axis=-1)
    phi_dot = np.sum(J[..., 0] * w, axis=-1) / F
    theta_dot = np.sum(J[..., 1] * w, axis=-1) / (F * np.cos(phi) ** 2)
    out = np.zeros(shape[:-1] + (STATE_DIM,))
    out[..., 0:3] = pos
    out[..., 3:6] = vel
    out[..., 6] = F
    out[..., 7] = phi
    out[..., 8] = theta
    out[..., 9] = psi_arr
    out[..., 10] = F_dot
    out[..., 11] = phi_dot
    out[..., 12] = theta_dot
    out[..., 13] = psi_dot
    return out


def hover_state(position: ArrayLike) -> NDArray[np.float64]:
    z = np.zeros(3)
    return state_from_flat_outputs(np.asarray(position, dtype=float), z, z, z)


def control_law(
    own: ArrayLike, reference: ArrayLike, gains: GainSet = GainSet()
) -> NDArray[np.float64]:
    """Desired snap from own and reference position derivatives.

    Args:
        own: ``(4, 3)`` own position, velocity, acceleration and jerk.
        reference: ``(m, 3)`` reference derivatives from order 0, with
            ``m >= Xi + 1``. Row 4 (snap) is used only when ``Xi = 4``.
        gains: gain set.

    Returns:
        ``v = -sum_{k<=3-Xi} gamma_k q^(4-k) + sum_{k>=4-Xi} gamma_k (q_d - q)^(4-k)``
        plus snap feed-forward when ``Xi = 4``.
    """
    own = np.asarray(own, dtype=float)
    ref = np.asarray(reference, dtype=float)
    xi = gains.Xi
    if ref.shape[0] < xi + 1:
        raise ValueError(f"reference needs derivatives up to order {xi}")
    v = np.zeros(own.shape[1:])
    for k, g in enumerate(gains.gamma, start=1):
        order = RHO - k
        if k <= RHO - xi - 1:
            v = v - g * own[order]
        else:
            v = v + g * (ref[order] - own[order])
    if xi == RHO:
        v = v + ref[RHO]
    return v


# --------------------------------------------------------------------------- team simulation


@dataclass(eq=False)
class TeamTrajectory:
    """Recorded team motion.

    Arrays are indexed ``[sample, agent, ...]`` in ``ids`` order. Running
    extremes are taken over every integration step, not only recorded ones.
    """

    ids: tuple[int, ...]
    leaders: tuple[int, ...]
    times: NDArray[np.float64]
    states: NDArray[np.float64]
    inputs: NDArray[np.float64]
    desired: NDArray[np.float64]
    deviation: NDArray[np.float64]
    max_deviation: NDArray[np.float64]
    max_deviation_time: NDArray[np.float64]
    max_input: NDArray[np.float64]
    thrust_range: NDArray[np.float64]
    max_tilt: NDArray[np.float64]
    dt: float
    saturated_steps: int = 0

    @property
    def positions(self) -> NDArray[np.float64]:
        return self.states[:, :, 0:3]

    @property
    def followers(self) -> tuple[int, ...]:
        return tuple(i for i in self.ids if i not in self.leaders)

    def sup_deviation(self, agents: Sequence[int] | None = None) -> tuple[float, int, float]:
        """Largest deviation over the given agents: (value, agent, time)."""
        agents = self.followers if agents is None else agents
        idx = [self.ids.index(i) for i in agents]
        k = int(np.argmax(self.max_deviation[idx]))
        return float(self.max_deviation[idx][k]), agents[k], float(self.max_deviation_time[idx][k])


class _TeamModel:
    """Vectorized closed-loop right-hand side for a whole team."""

    def __init__(self, cfg, model, gains: GainSet, bounds: InputBounds, saturation: str):
        self.ids = cfg.real_ids
        self.nl = len(cfg.leaders)
        self.N = len(self.ids)
        self.gains = gains
        self.gamma = np.array(gains.gamma)
        self.bounds = bounds
        self.saturation = saturation
        omega = model.real_weight_matrix()
        self.omega_F = omega[self.nl :]
        self.omega_FF = omega[self.nl :, self.nl :]
        self.omega_FL = omega[self.nl :, : self.nl]
        self.solve_F = np.linalg.inv(np.eye(self.N - self.nl) - self.omega_FF)
        self.last_u = np.zeros((self.N, 3))
        self.clipped = False

    def rhs(self, X: NDArray[np.float64], leader_jet: NDArray[np.float64], t: float) -> NDArray[np.float64]:
        g = self.gains
        nl = self.nl
        phi, theta, psi = X[:, 7], X[:, 8], X[:, 9]
        sf, cf = np.sin(phi), np.cos(phi)
        st, ct = np.sin(theta), np.cos(theta)
        sp, cp = np.sin(psi), np.cos(psi)
        cfst, sfst = cf * st, sf * st
        lam = np.column_stack([cfst * cp + sf * sp, cfst * sp - sf * cp, cf * ct])
        l_f = np.column_stack([-sfst * cp + cf * sp, -sfst * sp - cf * cp, -sf * ct])
        l_t = np.column_stack([cf * ct * cp, cf * ct * sp, -cfst])
        l_p = np.column_stack([-cfst * sp + sf * cp, cfst * cp + sf * sp, np.zeros_like(sf)])
        F = X[:, 6:7]
        Fd = X[:, 10:11]
        wf, wt, wp = X[:, 11:12], X[:, 12:13], X[:, 13:14]
        Jw = l_f * wf + l_t * wt + l_p * wp
        acc = F * lam
        acc[:, 2] -= G
        jerk = Fd * lam + F * Jw
        own = (X[:, 0:3], X[:, 3:6], acc, jerk)

        # second-order terms of the thrust direction
        l_tt = np.column_stack([-cfst * cp, -cfst * sp, -cf * ct])
        l_pp = np.column_stack([-cfst * cp - sf * sp, -cfst * sp + sf * cp, np.zeros_like(sf)])
        l_ft = np.column_stack([-sf * ct * cp, -sf * ct * sp, sfst])
        l_fp = np.column_stack([sfst * sp + cf * cp, -sfst * cp + cf * sp, np.zeros_like(sf)])
        l_tp = np.column_stack([-cf * ct * sp, cf * ct * cp, np.zeros_like(sf)])
        quad = (
            -lam * wf * wf + l_tt * wt * wt + l_pp * wp * wp
            + 2.0 * (l_ft * wf * wt + l_fp * wf * wp + l_tp * wt * wp)
        )
        psi_dd = -g.k_psi_dot * X[:, 13:14] - g.k_psi * X[:, 9:10]
        nvec = 2.0 * Fd * Jw + F * (l_p * psi_dd + quad)

        # references: leaders from the plan, followers from neighbor states
        xi = g.Xi
        v = np.zeros((self.N, 3))
        for k in range(1, RHO + 1):
            order = RHO - k
            q = own[order]
            if k <= RHO - xi - 1:
                v -= self.gamma[k - 1] * q
            else:
                ref = np.empty_like(q)
                ref[:nl] = leader_jet[order]
                ref[nl:] = self.omega_F @ q
                v += self.gamma[k - 1] * (ref - q)
        if xi == RHO:
            v[:nl] += leader_jet[RHO]
            v[nl:] = self.solve_F @ (self.omega_FL @ v[:nl] + v[nl:])

        w = v - nvec
        Fc = F[:, 0]
        u = np.empty((self.N, 3))
        u[:, 0] = np.sum(lam * w, axis=1)
        u[:, 1] = np.sum(l_f * w, axis=1) / Fc
        u[:, 2] = np.sum(l_t * w, axis=1) / (Fc * cf * cf)
        if self.saturation != "none":
            lim = self.bounds.channels
            over = np.abs(u) > lim
            if np.any(over):
                if self.saturation == "fail":
                    a, c = map(int, np.argwhere(over)[0])
                    raise InputSaturated(t, self.ids[a], ("u_T", "u_phi", "u_theta")[c], float(u[a, c]))
                u = np.clip(u, -lim, lim)
                self.clipped = True
        self.last_u = u

        dX = np.empty_like(X)
        dX[:, 0:3] = X[:, 3:6]
        dX[:, 3:6] = acc
        dX[:, 6:10] = X[:, 10:14]
        dX[:, 10:13] = u
        dX[:, 13] = psi_dd[:, 0]
        return dX


def simulate_team(
    cfg,
    model,
    plan,
    gains: GainSet = GainSet(),
    dt: float = 0.005,
    horizon: float | None = None,
    *,
    bounds: InputBounds = InputBounds(),
    saturation: str = "none",
    record_every: int = 1,
    initial_state: ArrayLike | None = None,
    t0: float | None = None,
    engine: str = "numba",
) -> TeamTrajectory:
    """Closed-loop RK4 simulation of the whole team following a leader plan.

    Leaders track the analytic plan. Followers track the real-weight
    combination of their in-neighbors' current positions, with reference
    derivatives from the neighbors' states (and, when ``Xi = 4``, their
    commanded snaps, solved simultaneously).

    Args:
        cfg: reference configuration.
        model: weight model built from ``cfg``.
        plan: object with ``leader_jet(cfg, times, order)`` and ``t0``/``horizon``.
        gains: control gains.
        dt: fixed step.
        horizon: simulated duration; defaults to the plan horizon.
        bounds: input box used for saturation and logging.
        saturation: ``"none"`` (log only), ``"clip"`` or ``"fail"``.
        record_every: keep every k-th step in the record.
        initial_state: ``(N, 14)`` states; defaults to the plan start with
            matching derivatives.
        t0: start time; defaults to ``plan.t0``.
        engine: ``"numba"`` (compiled loop) or ``"numpy"`` (vectorized
            reference implementation). Both give the same trajectory to
            rounding.

    Raises:
        GuardTripped: attitude reaches +-pi/2, thrust turns non-positive or the
            state stops being finite.
        InputSaturated: an input exceeds its bound with ``saturation="fail"``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if saturation not in ("none", "clip", "fail"):
        raise ValueError(f"unknown saturation mode {saturation!r}")
    if engine not in ("numba", "numpy"):
        raise ValueError(f"unknown engine {engine!r}")
    t0 = float(plan.t0 if t0 is None else t0)
    horizon = float(plan.horizon if horizon is None else horizon)
    steps = int(round(horizon / dt))
    team = _TeamModel(cfg, model, gains, bounds, saturation)
    ids = team.ids
    alpha = _alpha(cfg)

    half = t0 + 0.5 * dt * np.arange(2 * steps + 1)
    jets = plan.leader_jet(cfg, half, RHO)  # (5, M, nl, 3)
    lead_pos = jets[0]

    if initial_state is None:
        des = np.einsum("al,klj->kaj", alpha, jets[:4, 0])
        X = state_from_flat_outputs(des[0], des[1], des[2], des[3])
    else:
        X = np.array(initial_state, dtype=float).reshape(len(ids), STATE_DIM)

    n_rec = steps // record_every + 1
    times = np.empty(n_rec)
    states = np.empty((n_rec, len(ids), STATE_DIM))
    inputs = np.empty((n_rec, len(ids), 3))
    desired = np.empty((n_rec, len(ids), 3))
    deviation = np.empty((n_rec, len(ids)))
    max_dev = np.zeros(len(ids))
    max_dev_t = np.full(len(ids), t0)
    max_u = np.zeros((len(ids), 3))
    f_range = np.column_stack([X[:, 6], X[:, 6]])
    max_tilt = np.maximum(np.abs(X[:, 7]), np.abs(X[:, 8]))
    saturated = 0

    if engine == "numba":
        from . import _kernel

        sat_code = {"none": 0, "clip": 1, "fail": 2}[saturation]
        max_step = np.zeros(len(ids), dtype=np.int64)
        code, k, a, c, val, saturated = _kernel.rk4_loop(
            X, np.ascontiguousarray(jets), np.ascontiguousarray(alpha),
            np.ascontiguousarray(team.omega_F), np.ascontiguousarray(team.solve_F),
            np.ascontiguousarray(team.omega_FL), team.gamma.astype(float), int(gains.Xi),
            float(gains.k_psi), float(gains.k_psi_dot), sat_code,
            np.asarray(bounds.channels, dtype=float), float(dt), steps, int(record_every),
            states, inputs, desired, deviation, max_dev, max_step, max_u, f_range, max_tilt,
        )
        t_fail = t0 + k * dt
        if code == _kernel.SATURATED:
            raise InputSaturated(t_fail, ids[a], ("u_T", "u_phi", "u_theta")[c], float(val))
        if code != _kernel.OK:
            reason = {
                _kernel.GUARD_NONFINITE: "non-finite state",
                _kernel.GUARD_THRUST: "thrust not positive",
                _kernel.GUARD_ATTITUDE: "attitude reached pi/2",
            }[code]
            raise GuardTripped(t_fail, ids[a], reason)
        times[:] = t0 + dt * record_every * np.arange(n_rec)
        max_dev_t = t0 + dt * max_step
        return TeamTrajectory(
            ids, cfg.leaders, times, states, inputs, desired, deviation,
            max_dev, max_dev_t, max_u, f_range, max_tilt, dt, int(saturated),
        )

    def leader(idx):
        return jets[:, idx]

    def log(k, t, X, u):
        nonlocal max_dev, max_dev_t, max_u, f_range, max_tilt
        des = alpha @ lead_pos[2 * k]
        dev = np.linalg.norm(X[:, 0:3] - des, axis=1)
        worse = dev > max_dev
        max_dev = np.where(worse, dev, max_dev)
        max_dev_t = np.where(worse, t, max_dev_t)
        np.maximum(max_u, np.abs(u), out=max_u)
        f_range[:, 0] = np.minimum(f_range[:, 0], X[:, 6])
        f_range[:, 1] = np.maximum(f_range[:, 1], X[:, 6])
        np.maximum(max_tilt, np.maximum(np.abs(X[:, 7]), np.abs(X[:, 8])), out=max_tilt)
        if k % record_every == 0:
            r = k // record_every
            times[r] = t
            states[r] = X
            inputs[r] = u
            desired[r] = des
            deviation[r] = dev

    def guard(t, X):
        bad = ~np.all(np.isfinite(X), axis=1)
        bad |= np.abs(X[:, 7]) >= 0.5 * np.pi
        bad |= np.abs(X[:, 8]) >= 0.5 * np.pi
        bad |= X[:, 6] <= 0.0
        if np.any(bad):
            a = int(np.argmax(bad))
            reason = (
                "non-finite state" if not np.all(np.isfinite(X[a]))
                else "thrust not positive" if X[a, 6] <= 0.0
                else "attitude reached pi/2"
            )
            raise GuardTripped(t, ids[a], reason)

    guard(t0, X)
    team.rhs(X, leader(0), t0)
    log(0, t0, X, team.last_u)
    for k in range(steps):
        t = t0 + k * dt
        team.clipped = False
        k1 = team.rhs(X, leader(2 * k), t)
        u_now = team.last_u
        k2 = team.rhs(X + 0.5 * dt * k1, leader(2 * k + 1), t + 0.5 * dt)
        k3 = team.rhs(X + 0.5 * dt * k2, leader(2 * k + 1), t + 0.5 * dt)
        k4 = team.rhs(X + dt * k3, leader(2 * k + 2), t + dt)
        saturated += int(team.clipped)
        X = X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        guard(t + dt, X)
        np.maximum(max_u, np.abs(u_now), out=max_u)
        team.rhs(X, leader(2 * k + 2), t + dt)
        log(k + 1, t + dt, X, team.last_u)

    return TeamTrajectory(
        ids, cfg.leaders, times, states, inputs, desired, deviation,
        max_dev, max_dev_t, max_u, f_range, max_tilt, dt, saturated,
    )


def _alpha(cfg) -> NDArray[np.float64]:
    from .formation import alpha_matrix

    return alpha_matrix(cfg)


# --------------------------------------------------------------------------- error dynamics


@dataclass(frozen=True, eq=False)
class ErrorDynamics:
    """Linear per-axis error model of the team.

    ``A_sys`` acts on the stacked per-axis state ``[q, q', q'', q''']``
    (``4N`` entries, real agents in ``ids`` order) and is the same for x, y
    and z. ``blocks[k-1]`` is ``gamma_k H_k`` with ``H_k = -I`` for own-state
    damping and ``H_k = L`` for error feedback. With ``Xi = 4`` the bottom row
    is premultiplied by ``(-L)^{-1}`` to account for simultaneous snaps.
    """

    ids: tuple[int, ...]
    A_sys: NDArray[np.float64]
    blocks: tuple[NDArray[np.float64], ...]
    L: NDArray[np.float64]
    W_L: NDArray[np.float64]
    gains: GainSet

    @property
    def eigenvalues(self) -> NDArray[np.complex128]:
        return np.linalg.eigvals(self.A_sys)

    @property
    def max_real(self) -> float:
        return float(np.max(self.eigenvalues.real))

    @property
    def is_stable(self) -> bool:
        return self.max_real < 0.0

    def v_sys(self, leader_jet: ArrayLike) -> NDArray[np.float64]:
        """Forcing of the error dynamics.

        Args:
            leader_jet: ``(5, n+1, 3)`` leader plan derivatives at one time.

        Returns:
            ``(N, 3)`` forcing ``-sum_{j=0}^{3-Xi} Gamma_j [I; W_L] z_L^(4-j)``
            with ``Gamma_0 = I``; identically zero when ``Xi = 4``.
        """
        jet = np.asarray(leader_jet, dtype=float)
        expand = np.vstack([np.eye(self.W_L.shape[1]), self.W_L])
        out = np.zeros((expand.shape[0], 3))
        xi = self.gains.Xi
        coeff = (1.0,) + self.gains.gamma
        for j in range(0, RHO - xi):
            out -= coeff[j] * (expand @ jet[RHO - j])
        return out


def assemble_error_dynamics(model, gains: GainSet = GainSet()) -> ErrorDynamics:
    """Companion-form error dynamics for one axis (identical for all three)."""
    L = model.L
    N = L.shape[0]
    xi = gains.Xi
    blocks = []
    for k, g in enumerate(gains.gamma, start=1):
        H = -np.eye(N) if k <= RHO - xi - 1 else L
        blocks.append(g * H)
    bottom = np.hstack([blocks[3], blocks[2], blocks[1], blocks[0]])
    if xi == RHO:
        bottom = np.linalg.solve(-L, bottom)
    A = np.zeros((RHO * N, RHO * N))
    A[: (RHO - 1) * N, N:] = np.eye((RHO - 1) * N)
    A[(RHO - 1) * N :] = bottom
    return ErrorDynamics(tuple(model.cfg.real_ids), A, tuple(blocks), L, model.W_L, gains)


__all__ = [
    "G",
    "ErrorDynamics",
    "GainSet",
    "InputBounds",
    "TeamTrajectory",
    "assemble_error_dynamics",
    "control_law",
    "feedback_linearize",
    "flat_outputs",
    "hover_state",
    "quad_derivative",
    "simulate_team",
    "snap_affine",
    "state_from_flat_outputs",
    "thrust_direction",
    "thrust_partials",
    "yaw_acceleration",
]
