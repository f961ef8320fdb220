"""Compiled RK4 loop for the team closed loop.

Mirrors ``dynamics._TeamModel.rhs`` scalar by scalar; the numpy version is the
reference and the tests check that both agree.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

G = 9.81
RHO = 4

# status codes
OK, GUARD_NONFINITE, GUARD_THRUST, GUARD_ATTITUDE, SATURATED = 0, 1, 2, 3, 4


@njit(cache=True)
def _rhs(X, jet, omega_F, solve_F, omega_FL, gamma, xi, k_psi, k_psi_dot, sat_mode, lim, dX, u, own, ref, v):
    N = X.shape[0]
    nl = N - omega_F.shape[0]
    nf = N - nl
    lam = np.empty((N, 3))
    l_f = np.empty((N, 3))
    l_t = np.empty((N, 3))
    nvec = np.empty((N, 3))
    for a in range(N):
        phi, theta, psi = X[a, 7], X[a, 8], X[a, 9]
        sf, cf = math.sin(phi), math.cos(phi)
        st, ct = math.sin(theta), math.cos(theta)
        sp, cp = math.sin(psi), math.cos(psi)
        cfst = cf * st
        sfst = sf * st
        lam[a, 0] = cfst * cp + sf * sp
        lam[a, 1] = cfst * sp - sf * cp
        lam[a, 2] = cf * ct
        l_f[a, 0] = -sfst * cp + cf * sp
        l_f[a, 1] = -sfst * sp - cf * cp
        l_f[a, 2] = -sf * ct
        l_t[a, 0] = cf * ct * cp
        l_t[a, 1] = cf * ct * sp
        l_t[a, 2] = -cfst
        lp0 = -cfst * sp + sf * cp
        lp1 = cfst * cp + sf * sp
        tt0, tt1, tt2 = -cfst * cp, -cfst * sp, -cf * ct
        pp0, pp1 = -cfst * cp - sf * sp, -cfst * sp + sf * cp
        ft0, ft1, ft2 = -sf * ct * cp, -sf * ct * sp, sfst
        fp0, fp1 = sfst * sp + cf * cp, -sfst * cp + cf * sp
        tp0, tp1 = -cf * ct * sp, cf * ct * cp
        F = X[a, 6]
        Fd = X[a, 10]
        wf, wt, wp = X[a, 11], X[a, 12], X[a, 13]
        jw0 = l_f[a, 0] * wf + l_t[a, 0] * wt + lp0 * wp
        jw1 = l_f[a, 1] * wf + l_t[a, 1] * wt + lp1 * wp
        jw2 = l_f[a, 2] * wf + l_t[a, 2] * wt
        for j in range(3):
            own[0, a, j] = X[a, j]
            own[1, a, j] = X[a, 3 + j]
            own[2, a, j] = F * lam[a, j]
        own[2, a, 2] -= G
        own[3, a, 0] = Fd * lam[a, 0] + F * jw0
        own[3, a, 1] = Fd * lam[a, 1] + F * jw1
        own[3, a, 2] = Fd * lam[a, 2] + F * jw2
        q0 = -lam[a, 0] * wf * wf + tt0 * wt * wt + pp0 * wp * wp + 2.0 * (ft0 * wf * wt + fp0 * wf * wp + tp0 * wt * wp)
        q1 = -lam[a, 1] * wf * wf + tt1 * wt * wt + pp1 * wp * wp + 2.0 * (ft1 * wf * wt + fp1 * wf * wp + tp1 * wt * wp)
        q2 = -lam[a, 2] * wf * wf + tt2 * wt * wt + 2.0 * (ft2 * wf * wt)
        psi_dd = -k_psi_dot * wp - k_psi * X[a, 9]
        nvec[a, 0] = 2.0 * Fd * jw0 + F * (lp0 * psi_dd + q0)
        nvec[a, 1] = 2.0 * Fd * jw1 + F * (lp1 * psi_dd + q1)
        nvec[a, 2] = 2.0 * Fd * jw2 + F * q2
        dX[a, 13] = psi_dd

    for a in range(N):
        for j in range(3):
            v[a, j] = 0.0
    for k in range(1, RHO + 1):
        order = RHO - k
        g = gamma[k - 1]
        if k <= RHO - xi - 1:
            for a in range(N):
                for j in range(3):
                    v[a, j] -= g * own[order, a, j]
        else:
            for a in range(nl):
                for j in range(3):
                    v[a, j] += g * (jet[order, a, j] - own[order, a, j])
            for f in range(nf):
                for j in range(3):
                    acc = 0.0
                    for b in range(N):
                        acc += omega_F[f, b] * own[order, b, j]
                    v[nl + f, j] += g * (acc - own[order, nl + f, j])
    if xi == RHO:
        for a in range(nl):
            for j in range(3):
                v[a, j] += jet[RHO, a, j]
        for f in range(nf):
            for j in range(3):
                acc = v[nl + f, j]
                for b in range(nl):
                    acc += omega_FL[f, b] * v[b, j]
                ref[f, j] = acc
        for f in range(nf):
            for j in range(3):
                acc = 0.0
                for h in range(nf):
                    acc += solve_F[f, h] * ref[h, j]
                v[nl + f, j] = acc

    status = OK
    bad_agent = -1
    bad_channel = -1
    for a in range(N):
        w0 = v[a, 0] - nvec[a, 0]
        w1 = v[a, 1] - nvec[a, 1]
        w2 = v[a, 2] - nvec[a, 2]
        F = X[a, 6]
        cf = math.cos(X[a, 7])
        u[a, 0] = lam[a, 0] * w0 + lam[a, 1] * w1 + lam[a, 2] * w2
        u[a, 1] = (l_f[a, 0] * w0 + l_f[a, 1] * w1 + l_f[a, 2] * w2) / F
        u[a, 2] = (l_t[a, 0] * w0 + l_t[a, 1] * w1 + l_t[a, 2] * w2) / (F * cf * cf)
        if sat_mode != 0:
            for c in range(3):
                if abs(u[a, c]) > lim[c]:
                    if sat_mode == 2 and status == OK:
                        status = SATURATED
                        bad_agent = a
                        bad_channel = c
                    if sat_mode == 1:
                        u[a, c] = lim[c] if u[a, c] > 0 else -lim[c]
                        status = -1 if status == OK else status
        for j in range(3):
            dX[a, j] = X[a, 3 + j]
            dX[a, 3 + j] = own[2, a, j]
        for j in range(4):
            dX[a, 6 + j] = X[a, 10 + j]
        for c in range(3):
            dX[a, 10 + c] = u[a, c]
    return status, bad_agent, bad_channel


@njit(cache=True)
def _guard(X):
    N = X.shape[0]
    half_pi = 0.5 * math.pi
    for a in range(N):
        for j in range(X.shape[1]):
            if not math.isfinite(X[a, j]):
                return GUARD_NONFINITE, a
        if X[a, 6] <= 0.0:
            return GUARD_THRUST, a
        if abs(X[a, 7]) >= half_pi or abs(X[a, 8]) >= half_pi:
            return GUARD_ATTITUDE, a
    return OK, -1


@njit(cache=True)
def rk4_loop(X, jets, alpha, omega_F, solve_F, omega_FL, gamma, xi, k_psi, k_psi_dot,
             sat_mode, lim, dt, steps, record_every,
             rec_states, rec_inputs, rec_desired, rec_dev,
             max_dev, max_dev_step, max_u, f_range, max_tilt):
    """Integrate ``steps`` RK4 steps in place. Returns (code, step, agent, channel, value, clipped_steps)."""
    N = X.shape[0]
    nl = jets.shape[2]
    nf = N - nl
    dX1 = np.empty_like(X)
    dX2 = np.empty_like(X)
    dX3 = np.empty_like(X)
    dX4 = np.empty_like(X)
    Xs = np.empty_like(X)
    u = np.empty((N, 3))
    own = np.empty((4, N, 3))
    ref = np.empty((max(nf, 1), 3))
    v = np.empty((N, 3))
    clipped = 0

    code, a = _guard(X)
    if code != OK:
        return code, 0, a, -1, 0.0, clipped
    for k in range(steps + 1):
        st, ba, bc = _rhs(X, jets[:, 2 * k], omega_F, solve_F, omega_FL, gamma, xi,
                          k_psi, k_psi_dot, sat_mode, lim, dX1, u, own, ref, v)
        if st == SATURATED:
            return SATURATED, k, ba, bc, u[ba, bc], clipped
        # logging at the current step
        for a in range(N):
            d2 = 0.0
            for j in range(3):
                des = 0.0
                for l in range(nl):
                    des += alpha[a, l] * jets[0, 2 * k, l, j]
                diff = X[a, j] - des
                d2 += diff * diff
                if k % record_every == 0:
                    rec_desired[k // record_every, a, j] = des
            dev = math.sqrt(d2)
            if dev > max_dev[a]:
                max_dev[a] = dev
                max_dev_step[a] = k
            for c in range(3):
                if abs(u[a, c]) > max_u[a, c]:
                    max_u[a, c] = abs(u[a, c])
            if X[a, 6] < f_range[a, 0]:
                f_range[a, 0] = X[a, 6]
            if X[a, 6] > f_range[a, 1]:
                f_range[a, 1] = X[a, 6]
            tilt = max(abs(X[a, 7]), abs(X[a, 8]))
            if tilt > max_tilt[a]:
                max_tilt[a] = tilt
            if k % record_every == 0:
                r = k // record_every
                rec_dev[r, a] = dev
                for j in range(14):
                    rec_states[r, a, j] = X[a, j]
                for c in range(3):
                    rec_inputs[r, a, c] = u[a, c]
        if k == steps:
            break
        hit = st == -1
        for a in range(N):
            for j in range(14):
                Xs[a, j] = X[a, j] + 0.5 * dt * dX1[a, j]
        st, ba, bc = _rhs(Xs, jets[:, 2 * k + 1], omega_F, solve_F, omega_FL, gamma, xi,
                          k_psi, k_psi_dot, sat_mode, lim, dX2, u, own, ref, v)
        if st == SATURATED:
            return SATURATED, k, ba, bc, u[ba, bc], clipped
        hit = hit or st == -1
        for a in range(N):
            for j in range(14):
                Xs[a, j] = X[a, j] + 0.5 * dt * dX2[a, j]
        st, ba, bc = _rhs(Xs, jets[:, 2 * k + 1], omega_F, solve_F, omega_FL, gamma, xi,
                          k_psi, k_psi_dot, sat_mode, lim, dX3, u, own, ref, v)
        if st == SATURATED:
            return SATURATED, k, ba, bc, u[ba, bc], clipped
        hit = hit or st == -1
        for a in range(N):
            for j in range(14):
                Xs[a, j] = X[a, j] + dt * dX3[a, j]
        st, ba, bc = _rhs(Xs, jets[:, 2 * k + 2], omega_F, solve_F, omega_FL, gamma, xi,
                          k_psi, k_psi_dot, sat_mode, lim, dX4, u, own, ref, v)
        if st == SATURATED:
            return SATURATED, k, ba, bc, u[ba, bc], clipped
        hit = hit or st == -1
        for a in range(N):
            for j in range(14):
                X[a, j] += (dt / 6.0) * (dX1[a, j] + 2.0 * dX2[a, j] + 2.0 * dX3[a, j] + dX4[a, j])
        if hit:
            clipped += 1
        code, a = _guard(X)
        if code != OK:
            return code, k + 1, a, -1, 0.0, clipped
    return OK, steps, -1, -1, 0.0, clipped
