"""Closed-loop flights: a position controller at the control rate driving the 1 kHz simulator."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import sim
from .control.controllers import Controller, Observation
from .control.kinematics import force_to_attitude
from .differentiate import stencil_weights
from .errors import DegenerateForce, NonFiniteState, SimDiverged
from .sim import ResidualModelParams, SimState, VehicleParams
from .trajectory import DesiredState
from .wind import WindCondition


@dataclass
class FlightSettings:
    control_rate: float = 50.0
    physics_dt: float = 1e-3
    yaw: float = 0.0
    # the online residual estimate is centred this many ticks in the past;
    # 3 uses the symmetric 7-point stencil, 0 a causal one-sided stencil
    label_delay: int = 3
    label_width: int = 7
    # desired acceleration is sampled this far ahead to offset the lag of the
    # attitude loop and motors in realising a commanded force
    feedforward_lead: float = 0.04

    def __post_init__(self):
        n = round(1.0 / (self.control_rate * self.physics_dt))
        if n < 1 or abs(n * self.control_rate * self.physics_dt - 1.0) > 1e-9:
            raise ValueError("control period must be a whole number of physics steps")
        if self.feedforward_lead < 0:
            raise ValueError("feedforward_lead must be >= 0")
        if not 0 <= self.label_delay < self.label_width:
            raise ValueError("label_delay must lie inside the stencil window")

    @property
    def substeps(self):
        return round(1.0 / (self.control_rate * self.physics_dt))

    @property
    def control_dt(self):
        return 1.0 / self.control_rate


@dataclass
class WindSchedule:
    """Piecewise wind: ``segments`` is a list of (start time, condition), sorted."""
    segments: list

    @classmethod
    def steady(cls, cond: WindCondition):
        return cls([(0.0, cond)])

    def at(self, t):
        current = self.segments[0][1]
        for t0, cond in self.segments:
            if t + 1e-12 >= t0:
                current = cond
        return current


TELEMETRY_FIELDS = ("t", "p", "p_d", "p_err", "v", "q", "pwm", "s", "f_true", "f_hat", "y",
                    "trace_P", "a_hat")


@dataclass
class Telemetry:
    """Per-control-tick log; arrays are stacked along axis 0."""
    t: np.ndarray
    p: np.ndarray
    p_d: np.ndarray
    p_err: np.ndarray
    v: np.ndarray
    q: np.ndarray
    pwm: np.ndarray
    s: np.ndarray
    f_true: np.ndarray
    f_hat: np.ndarray
    # online residual measurement aligned to its own sample time (NaN until available)
    y: np.ndarray
    thrust_vec: np.ndarray
    trace_P: np.ndarray
    a_hat: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def error_norm(self):
        return np.linalg.norm(self.p_err, axis=1)

    def inputs(self):
        """(N, 11) network inputs: velocity, attitude, rotor signals."""
        return np.hstack([self.v, self.q, self.pwm])

    def write_csv(self, path):
        n_a = self.a_hat.shape[1]
        cols = (["t"] + [f"p_err_{a}" for a in "xyz"] + [f"s_{a}" for a in "xyz"]
                + [f"a_hat_{i}" for i in range(n_a)] + ["trace_P"]
                + [f"f_true_{a}" for a in "xyz"] + [f"f_hat_{a}" for a in "xyz"]
                + [f"y_{a}" for a in "xyz"])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for i in range(len(self.t)):
                row = [self.t[i], *self.p_err[i], *self.s[i], *self.a_hat[i], self.trace_P[i],
                       *self.f_true[i], *self.f_hat[i], *self.y[i]]
                w.writerow([f"{float(c):.9g}" for c in row])


class _OnlineLabeler:
    """Residual-force estimate from the trailing window of sampled positions."""

    def __init__(self, settings: FlightSettings, vehicle: VehicleParams):
        W = settings.label_width
        self.centre = W - 1 - settings.label_delay
        self.weights = stencil_weights(tuple(range(-self.centre, W - self.centre)))
        self.dt = settings.control_dt
        self.vehicle = vehicle
        self.width = W

    def estimate(self, positions, thrusts, k):
        """Label for tick ``k - delay`` once ``k + 1`` samples exist, else None."""
        if k + 1 < self.width:
            return None, None
        window = np.asarray(positions[k + 1 - self.width:k + 1])
        acc = self.weights @ window / (self.dt * self.dt)
        j = k + 1 - self.width + self.centre
        m = self.vehicle.mass
        return j, m * acc - m * self.vehicle.gravity - thrusts[j]


def fly(controller: Controller, trajectory, wind, duration: float,
        vehicle: VehicleParams | None = None, residual: ResidualModelParams | None = None,
        rng: np.random.Generator | None = None, settings: FlightSettings | None = None,
        initial: SimState | None = None) -> Telemetry:
    """Fly ``trajectory`` for ``duration`` seconds under ``wind``.

    ``wind`` is a WindCondition or a WindSchedule.  The controller is reset
    first.  Raises SimDiverged if the state stops being finite.
    """
    vehicle = vehicle or VehicleParams()
    residual = residual if residual is not None else ResidualModelParams()
    settings = settings or FlightSettings()
    rng = rng if rng is not None else np.random.default_rng(0)
    schedule = wind if isinstance(wind, WindSchedule) else WindSchedule.steady(wind)
    dt_c = settings.control_dt
    n_ticks = int(round(duration / dt_c))
    labeler = _OnlineLabeler(settings, vehicle)
    sigma = residual.noise_sigma

    if initial is None:
        start = trajectory(0.0)
        state = SimState.hover(vehicle, start.pos_d)
        state.v = np.array(start.vel_d, float)
    else:
        state = initial.copy()
    t0 = state.t
    controller.reset()

    cols = {name: [] for name in ("t", "p", "p_d", "v", "q", "pwm", "s", "f_true", "f_hat",
                                  "trace_P", "a_hat", "thrust_vec")}
    y_log = np.full((n_ticks, 3), np.nan)
    states = []
    prev_q = state.q_att
    for k in range(n_ticks):
        t = t0 + k * dt_c
        state.t = t
        cond = schedule.at(t - t0)
        desired = trajectory(t - t0)
        if settings.feedforward_lead > 0:
            ahead = trajectory(t - t0 + settings.feedforward_lead)
            desired = DesiredState(desired.pos_d, desired.vel_d, ahead.acc_d)
        thr = sim.thrust_vector(state, vehicle)
        cols["thrust_vec"].append(thr)
        cols["p"].append(state.p.copy())
        states.append(state)
        j, y = labeler.estimate(cols["p"], cols["thrust_vec"], k)
        y_state = None
        if y is not None:
            if sigma > 0:
                y = y + rng.normal(0.0, sigma, size=3)
            y_log[j] = y
            y_state = states[j]
        accel = sim.acceleration(state, cond, vehicle, residual)
        if sigma > 0:
            accel = accel + rng.normal(0.0, sigma / vehicle.mass, size=3)
        obs = Observation(t - t0, dt_c, state, desired, y=y, accel=accel, thrust_vector=thr,
                          y_state=y_state)
        u = controller.update(obs)
        tel = controller.telemetry()
        cols["t"].append(t - t0)
        cols["p_d"].append(desired.pos_d)
        cols["v"].append(state.v.copy())
        cols["q"].append(state.q_att.copy())
        cols["pwm"].append(state.pwm.copy())
        cols["s"].append(controller.s.copy())
        cols["f_true"].append(sim.residual_force(state, cond, residual))
        cols["f_hat"].append(np.array(controller.f_hat, float))
        cols["trace_P"].append(tel["trace_P"])
        cols["a_hat"].append(tel["a_hat"])
        try:
            cmd = force_to_attitude(u, settings.yaw, vehicle, previous=prev_q)
            prev_q = cmd.attitude_d
            state = sim.advance(state, cmd, cond, settings.physics_dt, settings.substeps,
                                vehicle, residual)
        except (NonFiniteState, DegenerateForce) as e:
            raise SimDiverged(f"{controller.name} diverged at t={t - t0:.2f} s: {e}") from e

    arr = {k: np.array(v, dtype=float) for k, v in cols.items()}
    return Telemetry(t=arr["t"], p=arr["p"], p_d=arr["p_d"], p_err=arr["p"] - arr["p_d"],
                     v=arr["v"], q=arr["q"], pwm=arr["pwm"], s=arr["s"],
                     f_true=arr["f_true"], f_hat=arr["f_hat"], y=y_log,
                     thrust_vec=arr["thrust_vec"], trace_P=arr["trace_P"],
                     a_hat=arr["a_hat"].reshape(n_ticks, -1),
                     meta={"controller": controller.name})
