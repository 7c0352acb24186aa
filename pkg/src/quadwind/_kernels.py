"""Compiled inner loops for the rigid-body simulator.

State vector layout (17 floats): p[0:3], v[3:6], q[6:10] (w, x, y, z),
omega[10:13], pwm[13:17].

Vehicle scalar block ``veh``: mass, gravity xyz, thrust_max, torque_max,
motor_tau, kp_att xyz, kd_att xyz.  Residual scalar block ``rs``: quad_drag,
attitude_coupling, rotor_coupling.  Wind block ``wp``: kind (0 constant,
1 sinusoidal), base xyz, amplitude, angular_freq.
"""

import math

import numpy as np
from numba import njit

NX = 17


@njit(cache=True)
def rotation(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    R = np.empty((3, 3))
    R[0, 0] = 1 - 2 * (y * y + z * z)
    R[0, 1] = 2 * (x * y - w * z)
    R[0, 2] = 2 * (x * z + w * y)
    R[1, 0] = 2 * (x * y + w * z)
    R[1, 1] = 1 - 2 * (x * x + z * z)
    R[1, 2] = 2 * (y * z - w * x)
    R[2, 0] = 2 * (x * z - w * y)
    R[2, 1] = 2 * (y * z + w * x)
    R[2, 2] = 1 - 2 * (x * x + y * y)
    return R


@njit(cache=True)
def wind_at(wp, t):
    out = np.empty(3)
    if wp[0] == 0.0:
        for i in range(3):
            out[i] = wp[1 + i]
        return out
    speed = math.sqrt(wp[1] ** 2 + wp[2] ** 2 + wp[3] ** 2)
    scale = 1.0 + (wp[4] / speed) * math.sin(wp[5] * t)
    for i in range(3):
        out[i] = wp[1 + i] * scale
    return out


@njit(cache=True)
def residual(v, q, pwm, t, wp, D1, rs):
    vw = wind_at(wp, t)
    vrel = v - vw
    nrm = math.sqrt(vrel[0] ** 2 + vrel[1] ** 2 + vrel[2] ** 2)
    f = -(D1 @ vrel) - rs[0] * nrm * vrel
    R = rotation(q)
    tx, ty, tz = R[0, 2], R[1, 2], R[2, 2] - 1.0
    f[0] += rs[1] * (ty * vrel[2] - tz * vrel[1])
    f[1] += rs[1] * (tz * vrel[0] - tx * vrel[2])
    f[2] += rs[1] * (tx * vrel[1] - ty * vrel[0])
    mean_pwm = 0.25 * (pwm[0] + pwm[1] + pwm[2] + pwm[3])
    f += rs[2] * mean_pwm * vrel
    return f


@njit(cache=True)
def deriv(x, pwm_cmd, t, veh, J, Jinv, A, wp, D1, rs):
    dx = np.empty(NX)
    v = x[3:6]
    q = x[6:10]
    om = x[10:13]
    pwm = x[13:17]
    rotor_max = veh[4] / 4.0
    wrench = A @ (pwm * rotor_max)
    R = rotation(q)
    f = residual(v, q, pwm, t, wp, D1, rs)
    m = veh[0]
    for i in range(3):
        dx[i] = v[i]
        dx[3 + i] = veh[1 + i] + (R[i, 2] * wrench[0] + f[i]) / m
    w, qx, qy, qz = q[0], q[1], q[2], q[3]
    dx[6] = 0.5 * (-qx * om[0] - qy * om[1] - qz * om[2])
    dx[7] = 0.5 * (w * om[0] + qy * om[2] - qz * om[1])
    dx[8] = 0.5 * (w * om[1] - qx * om[2] + qz * om[0])
    dx[9] = 0.5 * (w * om[2] + qx * om[1] - qy * om[0])
    Jw = J @ om
    gyro = np.empty(3)
    gyro[0] = om[1] * Jw[2] - om[2] * Jw[1]
    gyro[1] = om[2] * Jw[0] - om[0] * Jw[2]
    gyro[2] = om[0] * Jw[1] - om[1] * Jw[0]
    dom = Jinv @ (wrench[1:4] - gyro)
    for i in range(3):
        dx[10 + i] = dom[i]
    tau_m = veh[6]
    for i in range(4):
        dx[13 + i] = (pwm_cmd[i] - pwm[i]) / tau_m if tau_m > 0.0 else 0.0
    return dx


@njit(cache=True)
def attitude_pwm(x, thrust, qd, veh, J, Ainv):
    """Quaternion-error PD attitude loop followed by the rotor mixer."""
    q = x[6:10]
    om = x[10:13]
    # body-frame error quaternion conj(q) * qd
    w0, x0, y0, z0 = q[0], -q[1], -q[2], -q[3]
    w1, x1, y1, z1 = qd[0], qd[1], qd[2], qd[3]
    ew = w0 * w1 - x0 * x1 - y0 * y1 - z0 * z1
    ex = w0 * x1 + x0 * w1 + y0 * z1 - z0 * y1
    ey = w0 * y1 - x0 * z1 + y0 * w1 + z0 * x1
    ez = w0 * z1 + x0 * y1 - y0 * x1 + z0 * w1
    if ew < 0.0:
        ex, ey, ez = -ex, -ey, -ez
    alpha = np.empty(3)
    alpha[0] = veh[7] * 2.0 * ex - veh[10] * om[0]
    alpha[1] = veh[8] * 2.0 * ey - veh[11] * om[1]
    alpha[2] = veh[9] * 2.0 * ez - veh[12] * om[2]
    Jw = J @ om
    tau = J @ alpha
    tau[0] += om[1] * Jw[2] - om[2] * Jw[1]
    tau[1] += om[2] * Jw[0] - om[0] * Jw[2]
    tau[2] += om[0] * Jw[1] - om[1] * Jw[0]
    for i in range(3):
        tau[i] = min(max(tau[i], -veh[5]), veh[5])
    return allocate(thrust, tau, veh[4] / 4.0, Ainv)


@njit(cache=True)
def _fit_scale(base, d, rotor_max):
    """Largest s in [0, 1] with 0 <= base + s d <= rotor_max for every rotor."""
    s = 1.0
    for i in range(4):
        if d[i] > 0.0:
            room = rotor_max - base[i]
            if room < s * d[i]:
                s = max(room, 0.0) / d[i]
        elif d[i] < 0.0:
            room = base[i]
            if room < -s * d[i]:
                s = max(room, 0.0) / -d[i]
    return s


@njit(cache=True)
def allocate(thrust, tau, rotor_max, Ainv):
    """Rotor signals with priority collective thrust > roll/pitch > yaw.

    Torque demands that do not fit between the rotor limits are scaled down
    (roll/pitch together, then yaw) instead of clipping rotors one by one,
    which would inject spurious torques about the other axes.
    """
    base = np.empty(4)
    d_rp = np.empty(4)
    d_y = np.empty(4)
    T = min(max(thrust, 0.0), 4.0 * rotor_max)
    for i in range(4):
        base[i] = Ainv[i, 0] * T
        d_rp[i] = Ainv[i, 1] * tau[0] + Ainv[i, 2] * tau[1]
        d_y[i] = Ainv[i, 3] * tau[2]
    s = _fit_scale(base, d_rp, rotor_max)
    for i in range(4):
        base[i] += s * d_rp[i]
    s = _fit_scale(base, d_y, rotor_max)
    pwm = np.empty(4)
    for i in range(4):
        pwm[i] = min(max((base[i] + s * d_y[i]) / rotor_max, 0.0), 1.0)
    return pwm


@njit(cache=True)
def rk4(x, pwm_cmd, t, dt, veh, J, Jinv, A, wp, D1, rs):
    if veh[6] <= 0.0:
        x = x.copy()
        for i in range(4):
            x[13 + i] = pwm_cmd[i]
    k1 = deriv(x, pwm_cmd, t, veh, J, Jinv, A, wp, D1, rs)
    k2 = deriv(x + 0.5 * dt * k1, pwm_cmd, t + 0.5 * dt, veh, J, Jinv, A, wp, D1, rs)
    k3 = deriv(x + 0.5 * dt * k2, pwm_cmd, t + 0.5 * dt, veh, J, Jinv, A, wp, D1, rs)
    k4 = deriv(x + dt * k3, pwm_cmd, t + dt, veh, J, Jinv, A, wp, D1, rs)
    xn = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    qn = math.sqrt(xn[6] ** 2 + xn[7] ** 2 + xn[8] ** 2 + xn[9] ** 2)
    for i in range(6, 10):
        xn[i] /= qn
    for i in range(13, 17):
        xn[i] = min(max(xn[i], 0.0), 1.0)
    return xn


@njit(cache=True)
def advance(x, t, thrust, qd, dt, n, veh, J, Jinv, A, Ainv, wp, D1, rs):
    """n physics steps holding the (thrust, attitude) command; attitude loop at physics rate."""
    for k in range(n):
        pwm_cmd = attitude_pwm(x, thrust, qd, veh, J, Ainv)
        x = rk4(x, pwm_cmd, t + k * dt, dt, veh, J, Jinv, A, wp, D1, rs)
    return x


@njit(cache=True)
def advance_rotors(x, t, pwm_cmd, dt, n, veh, J, Jinv, A, wp, D1, rs):
    for k in range(n):
        x = rk4(x, pwm_cmd, t + k * dt, dt, veh, J, Jinv, A, wp, D1, rs)
    return x
