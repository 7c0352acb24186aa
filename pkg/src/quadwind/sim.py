"""Quadrotor rigid-body simulator with a synthetic aerodynamic residual force.

The vehicle follows

    p' = v,   m v' = m g + R f_u + f_true,   R' = R S(omega),
    J omega' = J omega x omega + tau_u,

integrated with fixed-step RK4.  An inner quaternion PD attitude loop runs at
the physics rate and feeds an X-configuration mixer; rotor signals follow a
first-order lag.  ``f_true`` is an analytic drag/coupling model driven by the
velocity relative to the wind.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels, quat
from .errors import InvariantViolation, NonFiniteState
from .wind import WindCondition

MAX_DT = 2e-3
E3 = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class VehicleParams:
    mass: float = 2.5
    inertia: np.ndarray = field(default_factory=lambda: np.diag([0.03, 0.03, 0.05]))
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    thrust_max: float = 60.0
    torque_max: float = 3.0
    # critically damped attitude loop, natural frequency in rad/s
    attitude_natural_freq: float = 20.0
    motor_time_constant: float = 0.03
    arm_length: float = 0.2
    yaw_moment_coeff: float = 0.016

    def __post_init__(self):
        object.__setattr__(self, "inertia", np.array(self.inertia, dtype=float))
        object.__setattr__(self, "gravity", np.array(self.gravity, dtype=float))
        if self.mass <= 0:
            raise InvariantViolation("mass must be positive")
        J = self.inertia
        if J.shape != (3, 3) or not np.allclose(J, J.T) or np.linalg.eigvalsh(J).min() <= 0:
            raise InvariantViolation("inertia must be symmetric positive definite")
        if self.thrust_max <= self.mass * np.linalg.norm(self.gravity):
            raise InvariantViolation("thrust-to-weight ratio must exceed 1")

    @property
    def attitude_gains(self):
        wn = self.attitude_natural_freq
        return wn * wn, 2.0 * wn

    @property
    def hover_thrust(self):
        return self.mass * float(np.linalg.norm(self.gravity))

    @property
    def hover_pwm(self):
        return self.hover_thrust / self.thrust_max

    @cached_property
    def mixer(self):
        """Matrix mapping per-rotor thrusts to (T, tau_x, tau_y, tau_z)."""
        a = self.arm_length / np.sqrt(2.0)
        xs = np.array([a, -a, a, -a])
        ys = np.array([-a, a, a, -a])
        spin = np.array([1.0, 1.0, -1.0, -1.0])
        return np.vstack([np.ones(4), ys, -xs, spin * self.yaw_moment_coeff])

    @cached_property
    def packed(self):
        kp, kd = self.attitude_gains
        veh = np.array([self.mass, *self.gravity, self.thrust_max, self.torque_max,
                        self.motor_time_constant, kp, kp, kp, kd, kd, kd])
        A = self.mixer
        return (veh, self.inertia.copy(), np.linalg.inv(self.inertia),
                A, np.linalg.inv(A))


@dataclass(frozen=True)
class ResidualModelParams:
    linear_drag: np.ndarray = field(default_factory=lambda: np.diag([0.25, 0.25, 0.40]))
    quad_drag: float = 0.05
    attitude_coupling: float = 0.3
    rotor_coupling: float = 0.2
    noise_sigma: float = 0.05

    def __post_init__(self):
        D = np.array(self.linear_drag, dtype=float)
        object.__setattr__(self, "linear_drag", D)
        if D.shape != (3, 3):
            raise InvariantViolation("linear_drag must be 3x3")
        if np.linalg.eigvalsh(0.5 * (D + D.T)).min() < 0 or self.quad_drag < 0:
            raise InvariantViolation("drag terms must be dissipative")
        if self.noise_sigma < 0:
            raise InvariantViolation("noise_sigma must be >= 0")

    @classmethod
    def zero(cls):
        return cls(np.zeros((3, 3)), 0.0, 0.0, 0.0, 0.0)

    @cached_property
    def packed(self):
        return self.linear_drag.copy(), np.array(
            [self.quad_drag, self.attitude_coupling, self.rotor_coupling])


@dataclass
class SimState:
    p: np.ndarray
    v: np.ndarray
    q_att: np.ndarray
    omega: np.ndarray
    pwm: np.ndarray
    t: float = 0.0

    @classmethod
    def hover(cls, vehicle: VehicleParams, p=(0.0, 0.0, 0.0)):
        return cls(np.array(p, dtype=float), np.zeros(3), quat.identity(),
                   np.zeros(3), np.full(4, vehicle.hover_pwm), 0.0)

    @classmethod
    def from_vector(cls, x, t):
        return cls(x[0:3].copy(), x[3:6].copy(), x[6:10].copy(),
                   x[10:13].copy(), x[13:17].copy(), float(t))

    def vector(self):
        return np.concatenate([self.p, self.v, self.q_att, self.omega, self.pwm])

    @property
    def rotation(self):
        return quat.to_rotation(self.q_att)

    def copy(self):
        return SimState.from_vector(self.vector(), self.t)


@dataclass(frozen=True)
class AttitudeThrustCmd:
    thrust: float
    attitude_d: np.ndarray


def residual_force(state: SimState, wind: WindCondition, params: ResidualModelParams):
    D1, rs = params.packed
    return _kernels.residual(np.asarray(state.v, float), np.asarray(state.q_att, float),
                             np.asarray(state.pwm, float), float(state.t),
                             wind.packed(), D1, rs)


def thrust_vector(state: SimState, vehicle: VehicleParams):
    """World-frame rotor force R f_u produced by the current rotor signals."""
    T = float(np.sum(state.pwm)) * vehicle.thrust_max / 4.0
    return quat.to_rotation(state.q_att)[:, 2] * T


def acceleration(state: SimState, wind: WindCondition, vehicle: VehicleParams,
                 residual: ResidualModelParams):
    """True translational acceleration at ``state`` (what an ideal accelerometer + g reports)."""
    f = residual_force(state, wind, residual)
    return vehicle.gravity + (thrust_vector(state, vehicle) + f) / vehicle.mass


def _check(x, t):
    if not np.all(np.isfinite(x)):
        raise NonFiniteState(f"non-finite state at t={t:.4f}s")


def advance(state: SimState, cmd: AttitudeThrustCmd, wind: WindCondition, dt: float,
            n_steps: int, vehicle: VehicleParams, residual: ResidualModelParams) -> SimState:
    """Hold ``cmd`` for ``n_steps`` physics steps of size ``dt``."""
    if not 0 < dt <= MAX_DT:
        raise ValueError(f"dt must be in (0, {MAX_DT}]")
    veh, J, Jinv, A, Ainv = vehicle.packed
    D1, rs = residual.packed
    thrust = float(np.clip(cmd.thrust, 0.0, vehicle.thrust_max))
    x = _kernels.advance(state.vector(), float(state.t), thrust,
                         np.asarray(cmd.attitude_d, float), dt, int(n_steps),
                         veh, J, Jinv, A, Ainv, wind.packed(), D1, rs)
    t = state.t + n_steps * dt
    _check(x, t)
    return SimState.from_vector(x, t)


def step(state: SimState, cmd: AttitudeThrustCmd, wind: WindCondition, dt: float,
         vehicle: VehicleParams, residual: ResidualModelParams) -> SimState:
    return advance(state, cmd, wind, dt, 1, vehicle, residual)


def advance_rotors(state: SimState, pwm_cmd, wind: WindCondition, dt: float, n_steps: int,
                   vehicle: VehicleParams, residual: ResidualModelParams) -> SimState:
    """Bypass the attitude loop and drive the rotors directly."""
    if not 0 < dt <= MAX_DT:
        raise ValueError(f"dt must be in (0, {MAX_DT}]")
    veh, J, Jinv, A, _ = vehicle.packed
    D1, rs = residual.packed
    pwm_cmd = np.clip(np.asarray(pwm_cmd, float), 0.0, 1.0)
    x = _kernels.advance_rotors(state.vector(), float(state.t), pwm_cmd, dt, int(n_steps),
                                veh, J, Jinv, A, wind.packed(), D1, rs)
    t = state.t + n_steps * dt
    _check(x, t)
    return SimState.from_vector(x, t)


def measure_residual(state: SimState, wind: WindCondition, params: ResidualModelParams,
                     rng: np.random.Generator):
    """Noisy residual-force label y = f_true + eps."""
    f = residual_force(state, wind, params)
    if params.noise_sigma == 0.0:
        return f
    return f + rng.normal(0.0, params.noise_sigma, size=3)


TRACE_COLUMNS = (["t"] + [f"p_{a}" for a in "xyz"] + [f"v_{a}" for a in "xyz"]
                 + [f"q_{a}" for a in "wxyz"] + [f"omega_{a}" for a in "xyz"]
                 + [f"pwm_{i}" for i in range(1, 5)] + [f"f_true_{a}" for a in "xyz"]
                 + [f"y_{a}" for a in "xyz"])


def write_trace(path, states, f_true, y):
    """Export a trajectory trace as CSV (one row per state)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for s, f, yy in zip(states, f_true, y):
            row = [s.t, *s.p, *s.v, *s.q_att, *s.omega, *s.pwm, *f, *yy]
            w.writerow([repr(float(c)) for c in row])
