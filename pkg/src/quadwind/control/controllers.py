"""Position controllers producing a desired world-frame force.

All controllers share the composite-error PD core

    u = m qr'' - m g - K s - f_hat

and differ in how the residual-force estimate ``f_hat`` is produced: an
integral of s (nonlinear baseline), composite adaptation on a learned or
identity basis, incremental inversion of measured acceleration (INDI), or a
piecewise-constant L1 estimator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..sim import SimState, VehicleParams
from ..trajectory import DesiredState
from .adaptation import AdaptiveState, adapt_discrete, block_basis


def _spd(name, M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.allclose(M, M.T) or np.linalg.eigvalsh(M).min() <= 0:
        raise ValueError(f"{name} must be symmetric positive definite")
    return M


@dataclass
class ControllerGains:
    K: np.ndarray = field(default_factory=lambda: 15.0 * np.eye(3))
    Lam: np.ndarray = field(default_factory=lambda: 6.0 * np.eye(3))
    K_I: np.ndarray = field(default_factory=lambda: 8.0 * np.eye(3))
    # adaptation gains are scalars times identity
    q: float = 0.1
    r: float = 0.05 ** 2
    lam: float = 0.01
    filter_cutoff_hz: float = 5.0
    # the piecewise-constant law settles at exp(-pole * dt) of the true disturbance,
    # so the pole is kept small relative to the control rate
    l1_predictor_pole: float = 0.5

    def __post_init__(self):
        self.K = _spd("K", self.K)
        self.Lam = _spd("Lam", self.Lam)
        self.K_I = _spd("K_I", self.K_I)
        if self.q <= 0 or self.r <= 0:
            raise ValueError("q and r must be positive")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.filter_cutoff_hz <= 0 or self.l1_predictor_pole <= 0:
            raise ValueError("filter_cutoff_hz and l1_predictor_pole must be positive")

    def Q(self, n):
        return self.q * np.eye(n)

    def R(self):
        return self.r * np.eye(3)


@dataclass
class Observation:
    """What the position loop sees at one control tick."""
    t: float
    dt: float
    state: SimState
    desired: DesiredState
    # measured residual force (None until the differentiation window fills)
    y: np.ndarray | None = None
    # measured translational acceleration
    accel: np.ndarray | None = None
    # measured rotor force R f_u currently applied
    thrust_vector: np.ndarray | None = None
    # state at the sample time of y (the measurement may lag the current tick)
    y_state: SimState | None = None


def composite_error(state: SimState, desired: DesiredState, Lam):
    """Returns (s, qr_dot, qr_ddot)."""
    Lam = np.asarray(Lam, dtype=float)
    pos_err = state.p - desired.pos_d
    vel_err = state.v - desired.vel_d
    s = vel_err + Lam @ pos_err
    qr_dot = desired.vel_d - Lam @ pos_err
    qr_ddot = desired.acc_d - Lam @ vel_err
    return s, qr_dot, qr_ddot


def basis_input(state: SimState):
    """11-d network input: velocity, attitude quaternion, rotor signals."""
    return np.concatenate([state.v, state.q_att, state.pwm])


def lowpass_coeff(cutoff_hz, dt):
    if np.isinf(cutoff_hz):
        return 1.0
    return 1.0 - np.exp(-2.0 * np.pi * cutoff_hz * dt)


class Controller:
    name = "controller"

    def __init__(self, vehicle: VehicleParams, gains: ControllerGains):
        self.vehicle = vehicle
        self.gains = gains
        self.f_hat = np.zeros(3)
        self.s = np.zeros(3)

    def reset(self):
        self.f_hat = np.zeros(3)
        self.s = np.zeros(3)

    def _nominal(self, obs: Observation):
        s, _, qr_ddot = composite_error(obs.state, obs.desired, self.gains.Lam)
        self.s = s
        m = self.vehicle.mass
        return m * qr_ddot - m * self.vehicle.gravity - self.gains.K @ s

    def update(self, obs: Observation) -> np.ndarray:
        raise NotImplementedError

    def telemetry(self):
        return {"trace_P": float("nan"), "a_hat": np.zeros(0)}


class NonlinearBaseline(Controller):
    """Nominal feedforward plus PID on the composite error, with anti-windup."""
    name = "nonlinear"

    def __init__(self, vehicle, gains, clamp=None):
        super().__init__(vehicle, gains)
        self.clamp = 2.0 * vehicle.hover_thrust if clamp is None else clamp
        self.integral = np.zeros(3)

    def reset(self):
        super().reset()
        self.integral = np.zeros(3)

    def update(self, obs):
        u = self._nominal(obs)
        self.integral = self.integral + self.s * obs.dt
        i_force = self.gains.K_I @ self.integral
        norm = np.linalg.norm(i_force)
        if norm > self.clamp:
            # rescale the stored integral so its force sits on the clamp
            self.integral = np.linalg.solve(self.gains.K_I, i_force * (self.clamp / norm))
            i_force = self.gains.K_I @ self.integral
        self.f_hat = i_force
        return u - i_force


class CompositeAdaptive(Controller):
    """Learned-basis feedforward with composite (prediction + tracking) adaptation.

    ``basis`` maps the 11-d input to a basis row; ``None`` uses phi = I
    (constant-disturbance estimation, no learning).
    """
    name = "learned"

    def __init__(self, vehicle, gains, basis=None, p0=None):
        super().__init__(vehicle, gains)
        self.basis = basis
        self.dim = 3 if basis is None else 3 * self._basis_row(np.zeros(11)).size
        self.p0 = p0
        self.adapt = AdaptiveState.initial(self.dim, gains.q, gains.lam, p0)
        if basis is None:
            self.name = "constant"

    def _basis_row(self, x):
        return np.asarray(self.basis(x), dtype=float).ravel()

    def regressor(self, state: SimState):
        if self.basis is None:
            return np.eye(3)
        return block_basis(self._basis_row(basis_input(state)))

    def reset(self):
        super().reset()
        self.adapt = AdaptiveState.initial(self.dim, self.gains.q, self.gains.lam, self.p0)

    def update(self, obs):
        u = self._nominal(obs)
        phi = self.regressor(obs.state)
        # the prediction error compares y with the basis at y's own sample time
        phi_y = phi if obs.y_state is None else self.regressor(obs.y_state)
        g = self.gains
        self.adapt = adapt_discrete(self.adapt, phi_y, obs.y, self.s, obs.dt,
                                    g.Q(self.dim), g.R(), g.lam)
        self.f_hat = phi @ self.adapt.a_hat
        return u - self.f_hat

    def telemetry(self):
        return {"trace_P": float(np.trace(self.adapt.P)), "a_hat": self.adapt.a_hat.copy()}


class Indi(Controller):
    """Incremental inversion: residual from low-passed acceleration and rotor force.

    The actuator feedback is the rotor force realised by the previous
    command (``obs.thrust_vector``); without it the previous command itself
    is used.
    """
    name = "indi"

    def __init__(self, vehicle, gains):
        super().__init__(vehicle, gains)
        self.reset()

    def reset(self):
        super().reset()
        self.acc_f = None
        self.u_f = None
        self.u_prev = None

    def update(self, obs):
        u = self._nominal(obs)
        m = self.vehicle.mass
        if self.u_prev is None:
            self.u_prev = -m * self.vehicle.gravity
        applied = obs.thrust_vector if obs.thrust_vector is not None else self.u_prev
        accel = np.asarray(obs.accel, dtype=float)
        if self.acc_f is None:
            self.acc_f = accel.copy()
            self.u_f = np.array(applied, dtype=float)
        else:
            c = lowpass_coeff(self.gains.filter_cutoff_hz, obs.dt)
            self.acc_f = self.acc_f + c * (accel - self.acc_f)
            self.u_f = self.u_f + c * (applied - self.u_f)
        self.f_hat = m * self.acc_f - m * self.vehicle.gravity - self.u_f
        u = u - self.f_hat
        self.u_prev = u
        return u


class L1Adaptive(Controller):
    """Piecewise-constant L1 estimator on velocity prediction error, low-passed output.

    The baseline's integral term is replaced by the filtered estimate.
    """
    name = "l1"

    def __init__(self, vehicle, gains):
        super().__init__(vehicle, gains)
        self.reset()

    def reset(self):
        super().reset()
        self.v_hat = None
        self.sigma = np.zeros(3)

    def update(self, obs):
        u = self._nominal(obs)
        m = self.vehicle.mass
        a = self.gains.l1_predictor_pole
        dt = obs.dt
        v = obs.state.v
        if self.v_hat is None:
            self.v_hat = v.copy()
        err = self.v_hat - v
        decay = np.exp(-a * dt)
        phi_int = (1.0 - decay) / a
        # acceleration that cancels the predicted error within one period
        self.sigma = -decay * err / phi_int
        c = lowpass_coeff(self.gains.filter_cutoff_hz, dt)
        self.f_hat = self.f_hat + c * (m * self.sigma - self.f_hat)
        applied = obs.thrust_vector if obs.thrust_vector is not None else u - self.f_hat
        self.v_hat = self.v_hat + dt * (self.vehicle.gravity + applied / m + self.sigma - a * err)
        return u - self.f_hat
