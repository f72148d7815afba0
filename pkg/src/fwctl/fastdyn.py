"""Compiled batched transition kernel for the full simulation state.

This is the throughput path behind `fwctl.env.advance_sim`: one function
advances N packed simulation states by one control period (throttle PI,
actuator dynamics, rigid-body RK4, error bookkeeping). The environment and
the sampling-based planner both call this kernel, so planner rollouts match
environment transitions exactly. A pure-numpy reference implementation lives
in fwctl.env and the test suite checks agreement between the two.

Packed state layout (SIM_DIM columns):
    0:3   position NED            13:15 servo positions (a, e)
    3:7   quaternion [w,x,y,z]    15:17 servo velocities
    7:10  body velocity           17    throttle level
    10:13 body rates              18    airspeed PI integral
                                  19,20 roll/pitch reference
                                  21,22 roll/pitch integral error
                                  23:25 previous commanded action
"""

from __future__ import annotations

import numpy as np
from numba import njit

SIM_DIM = 25
EXTRA_DIM = 14

# extras columns
EX_PHI, EX_THETA, EX_EPHI, EX_ETHETA, EX_VA, EX_ALPHA, EX_BETA = range(7)
EX_PR, EX_QR, EX_RR, EX_DTCMD, EX_CMDA, EX_CMDE, EX_DEGEN = range(7, 14)


@njit(cache=True)
def _rot_n2b(qw, qx, qy, qz, vx, vy, vz):
    # conjugate rotation: NED -> body
    return _rot(qw, -qx, -qy, -qz, vx, vy, vz)


@njit(cache=True)
def _rot(w, x, y, z, vx, vy, vz):
    cx = y * vz - z * vy
    cy = z * vx - x * vz
    cz = x * vy - y * vx
    dx = y * cz - z * cy
    dy = z * cx - x * cz
    dz = x * cy - y * cx
    return (vx + 2.0 * (w * cx + dx), vy + 2.0 * (w * cy + dy), vz + 2.0 * (w * cz + dz))


@njit(cache=True)
def _deriv(px, py, pz, qw, qx, qy, qz, u, v, w, p, q, r,
           da, de, dt_throttle,
           wind_n, wind_e, wind_d, tbx, tby, tbz, trx, try_, trz,
           mass, gravity, rho, s_area, span, chord, thrust_gain,
           inertia, inertia_inv, tw):
    # relative air
    wbx, wby, wbz = _rot_n2b(qw, qx, qy, qz, wind_n, wind_e, wind_d)
    ur = u - (wbx + tbx)
    vr = v - (wby + tby)
    wr = w - (wbz + tbz)
    pr = p - trx
    qr = q - try_
    rr = r - trz
    vxz = np.sqrt(ur * ur + wr * wr)
    va = np.sqrt(vxz * vxz + vr * vr)
    if va > 1e-9:
        alpha = np.arctan2(wr, ur)
        sb = vr / va
        if sb > 1.0:
            sb = 1.0
        elif sb < -1.0:
            sb = -1.0
        beta = np.arcsin(sb)
        two_va = 2.0 * va
        p_hat = pr * span / two_va
        q_hat = qr * chord / two_va
        r_hat = rr * span / two_va
        # wind-frame trig straight from velocity ratios
        cb = vxz / va
        if vxz > 1e-12:
            ca = ur / vxz
            sa = wr / vxz
        else:
            ca = 1.0
            sa = 0.0
    else:
        alpha = 0.0
        beta = 0.0
        p_hat = 0.0
        q_hat = 0.0
        r_hat = 0.0
        ca, sa, cb, sb = 1.0, 0.0, 1.0, 0.0

    # aero coefficients: fixed term order 1, alpha, alpha2, beta, p^, q^, r^, da, de
    c = np.empty(6)
    for j in range(6):
        c[j] = (tw[0, j] + tw[1, j] * alpha + tw[2, j] * alpha * alpha + tw[3, j] * beta
                + tw[4, j] * p_hat + tw[5, j] * q_hat + tw[6, j] * r_hat
                + tw[7, j] * da + tw[8, j] * de)

    qbar_s = 0.5 * rho * va * va * s_area
    drag = qbar_s * c[0]
    side = qbar_s * c[1]
    lift = qbar_s * c[2]
    fx = ca * cb * (-drag) - ca * sb * side - sa * (-lift)
    fy = sb * (-drag) + cb * side
    fz = sa * cb * (-drag) - sa * sb * side + ca * (-lift)
    mx = qbar_s * span * c[3]
    my = qbar_s * chord * c[4]
    mz = qbar_s * span * c[5]

    thrust = thrust_gain * dt_throttle
    gbx, gby, gbz = _rot_n2b(qw, qx, qy, qz, 0.0, 0.0, gravity)

    dpx, dpy, dpz = _rot(qw, qx, qy, qz, u, v, w)
    dqw = 0.5 * (-p * qx - q * qy - r * qz)
    dqx = 0.5 * (p * qw + r * qy - q * qz)
    dqy = 0.5 * (q * qw - r * qx + p * qz)
    dqz = 0.5 * (r * qw + q * qx - p * qy)

    du = gbx + (fx + thrust) / mass - (q * w - r * v)
    dv = gby + fy / mass - (r * u - p * w)
    dw = gbz + fz / mass - (p * v - q * u)

    iwx = inertia[0, 0] * p + inertia[0, 1] * q + inertia[0, 2] * r
    iwy = inertia[1, 0] * p + inertia[1, 1] * q + inertia[1, 2] * r
    iwz = inertia[2, 0] * p + inertia[2, 1] * q + inertia[2, 2] * r
    tx = mx - (q * iwz - r * iwy)
    ty = my - (r * iwx - p * iwz)
    tz = mz - (p * iwy - q * iwx)
    dp = inertia_inv[0, 0] * tx + inertia_inv[0, 1] * ty + inertia_inv[0, 2] * tz
    dq_ = inertia_inv[1, 0] * tx + inertia_inv[1, 1] * ty + inertia_inv[1, 2] * tz
    dr = inertia_inv[2, 0] * tx + inertia_inv[2, 1] * ty + inertia_inv[2, 2] * tz

    return (dpx, dpy, dpz, dqw, dqx, dqy, dqz, du, dv, dw, dp, dq_, dr)


@njit(cache=True)
def _servo_step(pos, vel, cmd, dt, w0, zeta, max_defl, max_rate):
    if cmd > 1.0:
        cmd = 1.0
    elif cmd < -1.0:
        cmd = -1.0
    target = cmd * max_defl
    w0sq = w0 * w0
    damp = 2.0 * zeta * w0

    k1v = w0sq * (target - pos) - damp * vel
    k1x = vel
    v2 = vel + 0.5 * dt * k1v
    k2v = w0sq * (target - (pos + 0.5 * dt * k1x)) - damp * v2
    k2x = v2
    v3 = vel + 0.5 * dt * k2v
    k3v = w0sq * (target - (pos + 0.5 * dt * k2x)) - damp * v3
    k3x = v3
    v4 = vel + dt * k3v
    k4v = w0sq * (target - (pos + dt * k3x)) - damp * v4
    k4x = v4

    new_pos = pos + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    new_vel = vel + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    if new_vel > max_rate:
        new_vel = max_rate
    elif new_vel < -max_rate:
        new_vel = -max_rate
    lo, hi = pos - max_rate * dt, pos + max_rate * dt
    if new_pos > hi:
        new_pos = hi
    elif new_pos < lo:
        new_pos = lo
    if new_pos > max_defl:
        new_pos = max_defl
    elif new_pos < -max_defl:
        new_pos = -max_defl
    return new_pos, new_vel


@njit(cache=True)
def advance_kernel(state, action, wind, dt, va_ref,
                   mass, gravity, rho, s_area, span, chord, thrust_gain,
                   kp_v, ki_v, servo_w0, servo_zeta, max_defl, max_rate, throttle_tc,
                   inertia, inertia_inv, tw):
    """Advance N packed states by one control period.

    wind is a 9-vector shared by the batch: total NED wind (steady + gust),
    body-frame turbulence velocity, body-frame turbulence rates.
    Returns (new_state (N, SIM_DIM), extras (N, EXTRA_DIM)).
    """
    n = state.shape[0]
    out = np.empty((n, SIM_DIM))
    extras = np.empty((n, EXTRA_DIM))
    wind_n, wind_e, wind_d = wind[0], wind[1], wind[2]
    tbx, tby, tbz = wind[3], wind[4], wind[5]
    trx, try_, trz = wind[6], wind[7], wind[8]
    throttle_decay = np.exp(-dt / throttle_tc)

    for i in range(n):
        px, py, pz = state[i, 0], state[i, 1], state[i, 2]
        qw, qx, qy, qz = state[i, 3], state[i, 4], state[i, 5], state[i, 6]
        u, v, w = state[i, 7], state[i, 8], state[i, 9]
        p, q, r = state[i, 10], state[i, 11], state[i, 12]

        cmd_a = action[i, 0]
        if cmd_a > 1.0:
            cmd_a = 1.0
        elif cmd_a < -1.0:
            cmd_a = -1.0
        cmd_e = action[i, 1]
        if cmd_e > 1.0:
            cmd_e = 1.0
        elif cmd_e < -1.0:
            cmd_e = -1.0

        # airspeed PI on the pre-step relative airspeed
        wbx, wby, wbz = _rot_n2b(qw, qx, qy, qz, wind_n, wind_e, wind_d)
        ur = u - (wbx + tbx)
        vr = v - (wby + tby)
        wr = w - (wbz + tbz)
        va_now = np.sqrt(ur * ur + vr * vr + wr * wr)
        e_va = va_ref - va_now
        pi_int = state[i, 18]
        raw = kp_v * e_va + ki_v * pi_int
        push = ki_v * e_va
        if (0.0 < raw < 1.0) or (raw >= 1.0 and push < 0.0) or (raw <= 0.0 and push > 0.0):
            pi_int = pi_int + e_va * dt
        dt_cmd = raw
        if dt_cmd > 1.0:
            dt_cmd = 1.0
        elif dt_cmd < 0.0:
            dt_cmd = 0.0

        sp_a, sv_a = _servo_step(state[i, 13], state[i, 15], cmd_a, dt,
                                 servo_w0, servo_zeta, max_defl, max_rate)
        sp_e, sv_e = _servo_step(state[i, 14], state[i, 16], cmd_e, dt,
                                 servo_w0, servo_zeta, max_defl, max_rate)
        throttle = dt_cmd + (state[i, 17] - dt_cmd) * throttle_decay

        # rigid-body RK4, surfaces and wind held over the step
        y0 = (px, py, pz, qw, qx, qy, qz, u, v, w, p, q, r)
        k1 = _deriv(px, py, pz, qw, qx, qy, qz, u, v, w, p, q, r,
                    sp_a, sp_e, throttle,
                    wind_n, wind_e, wind_d, tbx, tby, tbz, trx, try_, trz,
                    mass, gravity, rho, s_area, span, chord, thrust_gain,
                    inertia, inertia_inv, tw)
        y = _axpy(y0, k1, 0.5 * dt)
        k2 = _deriv(y[0], y[1], y[2], y[3], y[4], y[5], y[6], y[7], y[8], y[9],
                    y[10], y[11], y[12], sp_a, sp_e, throttle,
                    wind_n, wind_e, wind_d, tbx, tby, tbz, trx, try_, trz,
                    mass, gravity, rho, s_area, span, chord, thrust_gain,
                    inertia, inertia_inv, tw)
        y = _axpy(y0, k2, 0.5 * dt)
        k3 = _deriv(y[0], y[1], y[2], y[3], y[4], y[5], y[6], y[7], y[8], y[9],
                    y[10], y[11], y[12], sp_a, sp_e, throttle,
                    wind_n, wind_e, wind_d, tbx, tby, tbz, trx, try_, trz,
                    mass, gravity, rho, s_area, span, chord, thrust_gain,
                    inertia, inertia_inv, tw)
        y = _axpy(y0, k3, dt)
        k4 = _deriv(y[0], y[1], y[2], y[3], y[4], y[5], y[6], y[7], y[8], y[9],
                    y[10], y[11], y[12], sp_a, sp_e, throttle,
                    wind_n, wind_e, wind_d, tbx, tby, tbz, trx, try_, trz,
                    mass, gravity, rho, s_area, span, chord, thrust_gain,
                    inertia, inertia_inv, tw)

        c6 = dt / 6.0
        npx = px + c6 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        npy = py + c6 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        npz = pz + c6 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        nqw = qw + c6 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
        nqx = qx + c6 * (k1[4] + 2.0 * k2[4] + 2.0 * k3[4] + k4[4])
        nqy = qy + c6 * (k1[5] + 2.0 * k2[5] + 2.0 * k3[5] + k4[5])
        nqz = qz + c6 * (k1[6] + 2.0 * k2[6] + 2.0 * k3[6] + k4[6])
        nu = u + c6 * (k1[7] + 2.0 * k2[7] + 2.0 * k3[7] + k4[7])
        nv = v + c6 * (k1[8] + 2.0 * k2[8] + 2.0 * k3[8] + k4[8])
        nw = w + c6 * (k1[9] + 2.0 * k2[9] + 2.0 * k3[9] + k4[9])
        np_ = p + c6 * (k1[10] + 2.0 * k2[10] + 2.0 * k3[10] + k4[10])
        nq = q + c6 * (k1[11] + 2.0 * k2[11] + 2.0 * k3[11] + k4[11])
        nr = r + c6 * (k1[12] + 2.0 * k2[12] + 2.0 * k3[12] + k4[12])

        qn = np.sqrt(nqw * nqw + nqx * nqx + nqy * nqy + nqz * nqz)
        nqw, nqx, nqy, nqz = nqw / qn, nqx / qn, nqy / qn, nqz / qn

        phi = np.arctan2(2.0 * (nqw * nqx + nqy * nqz), 1.0 - 2.0 * (nqx * nqx + nqy * nqy))
        sth = 2.0 * (nqw * nqy - nqx * nqz)
        if sth > 1.0:
            sth = 1.0
        elif sth < -1.0:
            sth = -1.0
        theta = np.arcsin(sth)

        phi_ref, theta_ref = state[i, 19], state[i, 20]
        e_phi = phi_ref - phi
        e_theta = theta_ref - theta

        out[i, 0], out[i, 1], out[i, 2] = npx, npy, npz
        out[i, 3], out[i, 4], out[i, 5], out[i, 6] = nqw, nqx, nqy, nqz
        out[i, 7], out[i, 8], out[i, 9] = nu, nv, nw
        out[i, 10], out[i, 11], out[i, 12] = np_, nq, nr
        out[i, 13], out[i, 14] = sp_a, sp_e
        out[i, 15], out[i, 16] = sv_a, sv_e
        out[i, 17] = throttle
        out[i, 18] = pi_int
        out[i, 19], out[i, 20] = phi_ref, theta_ref
        out[i, 21] = state[i, 21] + e_phi * dt
        out[i, 22] = state[i, 22] + e_theta * dt
        out[i, 23], out[i, 24] = cmd_a, cmd_e

        # relative air at the new state under the same wind sample
        wbx2, wby2, wbz2 = _rot_n2b(nqw, nqx, nqy, nqz, wind_n, wind_e, wind_d)
        ur2 = nu - (wbx2 + tbx)
        vr2 = nv - (wby2 + tby)
        wr2 = nw - (wbz2 + tbz)
        va2 = np.sqrt(ur2 * ur2 + vr2 * vr2 + wr2 * wr2)
        if va2 > 1e-9:
            alpha2 = np.arctan2(wr2, ur2)
            sb2 = vr2 / va2
            if sb2 > 1.0:
                sb2 = 1.0
            elif sb2 < -1.0:
                sb2 = -1.0
            beta2 = np.arcsin(sb2)
            degen = 0.0
        else:
            alpha2 = 0.0
            beta2 = 0.0
            degen = 1.0

        extras[i, EX_PHI] = phi
        extras[i, EX_THETA] = theta
        extras[i, EX_EPHI] = e_phi
        extras[i, EX_ETHETA] = e_theta
        extras[i, EX_VA] = va2
        extras[i, EX_ALPHA] = alpha2
        extras[i, EX_BETA] = beta2
        extras[i, EX_PR] = np_ - trx
        extras[i, EX_QR] = nq - try_
        extras[i, EX_RR] = nr - trz
        extras[i, EX_DTCMD] = dt_cmd
        extras[i, EX_CMDA] = cmd_a
        extras[i, EX_CMDE] = cmd_e
        extras[i, EX_DEGEN] = degen

    return out, extras


@njit(cache=True)
def _axpy(y0, k, h):
    return (y0[0] + h * k[0], y0[1] + h * k[1], y0[2] + h * k[2],
            y0[3] + h * k[3], y0[4] + h * k[4], y0[5] + h * k[5],
            y0[6] + h * k[6], y0[7] + h * k[7], y0[8] + h * k[8],
            y0[9] + h * k[9], y0[10] + h * k[10], y0[11] + h * k[11],
            y0[12] + h * k[12])
