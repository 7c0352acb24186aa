import copy

import numpy as np
import pytest

from quadwind import quat
from quadwind.control.controllers import (CompositeAdaptive, Controller, ControllerGains, Indi,
                                          L1Adaptive, NonlinearBaseline, Observation,
                                          composite_error)
from quadwind.control.kinematics import force_to_attitude
from quadwind.errors import DegenerateForce
from quadwind.flight import fly
from quadwind.sim import ResidualModelParams, SimState, VehicleParams
from quadwind.trajectory import DesiredState, Hover
from quadwind.wind import WindCondition

DT = 0.02
HOVER = DesiredState(np.zeros(3), np.zeros(3), np.zeros(3))


def state_at(vehicle, p=(0, 0, 0), v=(0, 0, 0), q=None):
    st = SimState.hover(vehicle, p)
    st.v = np.array(v, float)
    if q is not None:
        st.q_att = np.array(q, float)
    return st


class PointMass:
    """Toy translational plant m v' = m g + u + f with the force held over each tick."""

    def __init__(self, vehicle, f, p=(0, 0, 0), v=(0, 0, 0)):
        self.vehicle = vehicle
        self.f = np.array(f, float)
        self.state = state_at(vehicle, p, v)

    def accel(self, u):
        return self.vehicle.gravity + (u + self.f) / self.vehicle.mass

    def step(self, u, dt=DT):
        a = self.accel(u)
        self.state.p = self.state.p + self.state.v * dt + 0.5 * a * dt * dt
        self.state.v = self.state.v + a * dt
        self.state.t += dt


def drive(ctrl, plant, ticks, desired=HOVER, measure=True, thrust_feedback=False):
    """Closed loop on the toy plant; returns the per-tick f_hat history."""
    u_prev = -plant.vehicle.mass * plant.vehicle.gravity
    hist = []
    for k in range(ticks):
        obs = Observation(k * DT, DT, plant.state, desired,
                          y=plant.f.copy() if measure else None,
                          accel=plant.accel(u_prev),
                          thrust_vector=u_prev if thrust_feedback else None)
        u = ctrl.update(obs)
        hist.append(ctrl.f_hat.copy())
        plant.step(u)
        u_prev = u
    return np.array(hist)


class TestCompositeError:
    def test_perfect_tracking(self, vehicle):
        d = DesiredState(np.array([1.0, 2, 3]), np.array([0.5, 0, -1]), np.zeros(3))
        s, _, _ = composite_error(state_at(vehicle, d.pos_d, d.vel_d), d, 6 * np.eye(3))
        assert not np.any(s)

    def test_pure_position_error(self, vehicle):
        Lam = np.diag([2.0, 3.0, 4.0])
        e = np.array([0.1, -0.2, 0.3])
        s, _, _ = composite_error(state_at(vehicle, e), HOVER, Lam)
        np.testing.assert_allclose(s, Lam @ e, rtol=1e-15)

    def test_random_state_matches_formula(self, vehicle, rng):
        Lam = np.diag(rng.uniform(1, 5, 3))
        d = DesiredState(*rng.normal(size=(3, 3)))
        st = state_at(vehicle, rng.normal(size=3), rng.normal(size=3))
        s, qr_dot, qr_ddot = composite_error(st, d, Lam)
        pe, ve = st.p - d.pos_d, st.v - d.vel_d
        np.testing.assert_allclose(s, ve + Lam @ pe, rtol=1e-14)
        np.testing.assert_allclose(qr_dot, d.vel_d - Lam @ pe, rtol=1e-14)
        np.testing.assert_allclose(qr_ddot, d.acc_d - Lam @ ve, rtol=1e-14)
        np.testing.assert_allclose(st.v - qr_dot, s, rtol=1e-14)


class TestGains:
    @pytest.mark.parametrize("kwargs", [dict(K=-np.eye(3)), dict(Lam=np.diag([1, 0, 1])),
                                        dict(K=[[1, 2, 0], [0, 1, 0], [0, 0, 1]]),
                                        dict(q=0.0), dict(r=-1.0), dict(lam=-0.1),
                                        dict(l1_predictor_pole=0.0)])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ControllerGains(**kwargs)

    def test_stationary_initial_covariance(self):
        ctrl = CompositeAdaptive(VehicleParams(), ControllerGains(q=0.1, lam=0.01))
        np.testing.assert_allclose(ctrl.adapt.P, 5.0 * np.eye(3))


def all_controllers(vehicle, gains):
    return [NonlinearBaseline(vehicle, gains), CompositeAdaptive(vehicle, gains),
            CompositeAdaptive(vehicle, gains, basis=lambda x: np.tanh(x[:4])),
            Indi(vehicle, gains), L1Adaptive(vehicle, gains)]


class TestCompositeAdaptive:
    def test_hover_is_gravity_compensation(self, vehicle):
        ctrl = CompositeAdaptive(vehicle, ControllerGains())
        u = ctrl.update(Observation(0.0, DT, state_at(vehicle), HOVER))
        np.testing.assert_array_equal(u, -vehicle.mass * vehicle.gravity)

    def test_coefficient_linearity(self, vehicle, rng):
        gains = ControllerGains(lam=0.0)
        basis = lambda x: np.tanh(x[:4] + 0.3)  # noqa: E731
        st = state_at(vehicle, rng.normal(size=3), rng.normal(size=3))
        d = DesiredState(*rng.normal(size=(3, 3)))
        outs, coeffs = [], [rng.normal(size=12), rng.normal(size=12)]
        for a in coeffs:
            ctrl = CompositeAdaptive(vehicle, gains, basis=basis)
            ctrl.adapt.a_hat = a.copy()
            # s = 0 and no measurement leave the coefficients untouched
            d0 = DesiredState(st.p, st.v, d.acc_d)
            outs.append(ctrl.update(Observation(0.0, DT, st, d0)))
            np.testing.assert_array_equal(ctrl.adapt.a_hat, a)
        phi = ctrl.regressor(st)
        np.testing.assert_allclose(outs[0] - outs[1], -phi @ (coeffs[0] - coeffs[1]),
                                   rtol=1e-12, atol=1e-12)

    def test_exact_coefficients_remove_tracking_error(self, vehicle):
        f0 = np.array([2.1, -1.0, 0.4])
        ctrl = CompositeAdaptive(vehicle, ControllerGains(lam=0.0))
        ctrl.adapt.a_hat = f0.copy()
        plant = PointMass(vehicle, f0, p=(0.4, -0.3, 0.2))
        drive(ctrl, plant, int(5.0 / DT))
        assert np.linalg.norm(plant.state.p) < 1e-3
        np.testing.assert_allclose(ctrl.adapt.a_hat, f0, atol=1e-3)

    def test_learns_constant_disturbance_from_zero(self, vehicle):
        f0 = np.array([-3.0, 1.5, 2.0])
        ctrl = CompositeAdaptive(vehicle, ControllerGains(lam=0.0))
        plant = PointMass(vehicle, f0)
        drive(ctrl, plant, int(10.0 / DT))
        np.testing.assert_allclose(ctrl.f_hat, f0, rtol=1e-6)
        assert np.linalg.norm(plant.state.p) < 1e-6

    def test_lyapunov_decrease_with_exact_model(self, vehicle, rng):
        class Oracle(Controller):
            def update(self, obs):
                self.f_hat = f0
                return self._nominal(obs) - f0

        f0 = rng.normal(size=3)
        ctrl = Oracle(vehicle, ControllerGains())
        plant = PointMass(vehicle, f0, p=rng.normal(size=3), v=rng.normal(size=3))
        V = []
        for k in range(250):
            u = ctrl.update(Observation(k * DT, DT, plant.state, HOVER))
            V.append(vehicle.mass * ctrl.s @ ctrl.s)
            plant.step(u)
        assert np.all(np.diff(V) <= 1e-6)
        assert V[-1] < 1e-6 * V[0]

    def test_coefficients_stay_bounded(self, vehicle):
        tel = fly(CompositeAdaptive(vehicle, ControllerGains()), Hover(),
                  WindCondition.constant(12.1), 20.0, vehicle)
        assert np.all(np.isfinite(tel.a_hat))
        assert np.linalg.norm(tel.a_hat, axis=1).max() <= 10 * 10.0


class TestNonlinearBaseline:
    def test_zero_error_is_feedforward(self, vehicle):
        ctrl = NonlinearBaseline(vehicle, ControllerGains())
        acc = np.array([0.3, -0.2, 1.0])
        d = DesiredState(np.zeros(3), np.zeros(3), acc)
        u = ctrl.update(Observation(0.0, DT, state_at(vehicle), d))
        np.testing.assert_allclose(u, vehicle.mass * (acc - vehicle.gravity), rtol=1e-15)

    def test_rejects_constant_disturbance(self, vehicle):
        res = ResidualModelParams(np.diag([0.25, 0.25, 0.4]), 0.0, 0.0, 0.0, 0.0)
        tel = fly(NonlinearBaseline(vehicle, ControllerGains()), Hover(),
                  WindCondition.constant(8.5), 20.0, vehicle, res)
        assert tel.error_norm[-1] < 1e-3

    def test_integral_clamp(self, vehicle):
        ctrl = NonlinearBaseline(vehicle, ControllerGains())
        plant = PointMass(vehicle, [500.0, 0.0, 0.0])
        for k in range(100):
            u = ctrl.update(Observation(k * DT, DT, plant.state, HOVER))
            assert np.linalg.norm(ctrl.gains.K_I @ ctrl.integral) <= ctrl.clamp * (1 + 1e-12)
            plant.step(u)
        assert np.linalg.norm(ctrl.f_hat) == pytest.approx(2 * vehicle.hover_thrust)


class TestIndi:
    def test_zero_disturbance(self, vehicle):
        ctrl = Indi(vehicle, ControllerGains())
        hist = drive(ctrl, PointMass(vehicle, np.zeros(3)), 100, thrust_feedback=True)
        assert np.abs(hist).max() < 1e-12

    def test_step_reaches_95_percent_within_three_time_constants(self, vehicle):
        gains = ControllerGains(filter_cutoff_hz=5.0)
        tau = 1.0 / (2 * np.pi * 5.0)
        # samples taken within 3 tau of the step, counting the one at the step itself
        n = int(np.floor(3 * tau / DT)) + 1
        ctrl = Indi(vehicle, gains)
        f0 = np.array([1.0, -2.0, 0.5])
        u = -vehicle.mass * vehicle.gravity
        st = state_at(vehicle)
        for k in range(10):
            ctrl.update(Observation(k * DT, DT, st, HOVER, accel=np.zeros(3), thrust_vector=u))
        for k in range(n):
            accel = vehicle.gravity + (u + f0) / vehicle.mass
            ctrl.update(Observation(k * DT, DT, st, HOVER, accel=accel, thrust_vector=u))
        # first-order step response after n samples
        c = 1 - np.exp(-2 * np.pi * 5.0 * DT)
        np.testing.assert_allclose(ctrl.f_hat, f0 * (1 - (1 - c) ** n), rtol=1e-12)
        assert np.all(ctrl.f_hat / f0 >= 0.95)

    def test_infinite_cutoff_is_instantaneous(self, vehicle, quiet_residual):
        ctrl = Indi(vehicle, ControllerGains(filter_cutoff_hz=np.inf))
        tel = fly(ctrl, Hover(), WindCondition.sinusoidal(6.0, 2.0, 1.5), 5.0, vehicle,
                  quiet_residual)
        np.testing.assert_allclose(tel.f_hat, tel.f_true, atol=1e-9)


class TestL1:
    def test_zero_disturbance(self, vehicle):
        ctrl = L1Adaptive(vehicle, ControllerGains())
        hist = drive(ctrl, PointMass(vehicle, np.zeros(3), p=(0.2, 0, 0)), 200, measure=False)
        assert np.abs(hist[-1]).max() < 1e-9

    def test_converges_within_five_filter_time_constants(self, vehicle):
        f0 = np.array([1.2, -0.8, 2.0])
        ctrl = L1Adaptive(vehicle, ControllerGains(filter_cutoff_hz=5.0))
        hist = drive(ctrl, PointMass(vehicle, f0), 100, measure=False)
        n = int(np.ceil(5 / (2 * np.pi * 5.0) / DT))
        assert np.all(np.abs(hist[n:] - f0) <= 0.02 * np.abs(f0))

    @pytest.mark.parametrize("pole", [0.5, 10.0])
    def test_steady_gain_closed_form(self, vehicle, pole):
        # the prediction error settles at -Phi f0 / m, so the estimate settles at exp(-a T) f0
        f0 = np.array([1.2, -0.8, 2.0])
        ctrl = L1Adaptive(vehicle, ControllerGains(l1_predictor_pole=pole))
        hist = drive(ctrl, PointMass(vehicle, f0), 300, measure=False)
        np.testing.assert_allclose(hist[-1], np.exp(-pole * DT) * f0, rtol=1e-9)

    def test_linear_in_disturbance(self, vehicle):
        f0 = np.array([0.7, 0.3, -1.1])
        steady = []
        for scale in (1.0, 2.0):
            ctrl = L1Adaptive(vehicle, ControllerGains())
            steady.append(drive(ctrl, PointMass(vehicle, scale * f0), 300, measure=False)[-1])
        np.testing.assert_allclose(steady[1], 2 * steady[0], rtol=1e-9)


class TestInterface:
    @pytest.mark.parametrize("index", range(5))
    def test_identical_inputs_identical_outputs(self, vehicle, index, rng):
        gains = ControllerGains()
        ctrl = all_controllers(vehicle, gains)[index]
        plant = PointMass(vehicle, rng.normal(size=3), p=rng.normal(size=3))
        drive(ctrl, plant, 20, thrust_feedback=True)
        twin = copy.deepcopy(ctrl)
        obs = Observation(0.4, DT, plant.state, HOVER, y=rng.normal(size=3),
                          accel=rng.normal(size=3), thrust_vector=rng.normal(size=3))
        a, b = ctrl.update(obs), twin.update(copy.deepcopy(obs))
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(ctrl.f_hat, twin.f_hat)

    @pytest.mark.parametrize("index", range(5))
    def test_reset_restores_initial_behaviour(self, vehicle, index, rng):
        gains = ControllerGains()
        fresh = all_controllers(vehicle, gains)[index]
        used = copy.deepcopy(fresh)
        drive(used, PointMass(vehicle, rng.normal(size=3)), 20, thrust_feedback=True)
        used.reset()
        obs = Observation(0.0, DT, state_at(vehicle, (0.1, 0, 0)), HOVER, y=np.ones(3),
                          accel=np.zeros(3), thrust_vector=-vehicle.mass * vehicle.gravity)
        np.testing.assert_array_equal(fresh.update(obs), used.update(copy.deepcopy(obs)))


class TestForceToAttitude:
    def test_hover_is_identity(self, vehicle):
        u = np.array([0.0, 0.0, vehicle.hover_thrust])
        cmd = force_to_attitude(u, 0.0, vehicle)
        np.testing.assert_allclose(cmd.attitude_d, quat.identity(), atol=1e-15)
        assert cmd.thrust == pytest.approx(vehicle.hover_thrust, rel=1e-15)

    @pytest.mark.parametrize("deg", [10.0, -10.0, 35.0])
    def test_tilt_in_xz_plane(self, vehicle, deg):
        th = np.deg2rad(deg)
        u = 30.0 * np.array([np.sin(th), 0.0, np.cos(th)])
        cmd = force_to_attitude(u, 0.0, vehicle)
        roll, pitch, yaw = quat.euler_angles(cmd.attitude_d)
        assert pitch == pytest.approx(th, abs=1e-12)
        assert abs(roll) < 1e-12 and abs(yaw) < 1e-12
        assert cmd.thrust == pytest.approx(30.0, rel=1e-14)
        np.testing.assert_allclose(quat.to_rotation(cmd.attitude_d)[:, 2], u / 30.0, atol=1e-14)

    def test_yaw_is_respected(self, vehicle):
        cmd = force_to_attitude([0.0, 0.0, 20.0], 0.7, vehicle)
        assert quat.euler_angles(cmd.attitude_d)[2] == pytest.approx(0.7, abs=1e-12)

    def test_thrust_clamp_keeps_direction(self, vehicle):
        u = np.array([50.0, 20.0, 80.0])
        cmd = force_to_attitude(u, 0.0, vehicle)
        assert cmd.thrust == vehicle.thrust_max
        np.testing.assert_allclose(quat.to_rotation(cmd.attitude_d)[:, 2],
                                   u / np.linalg.norm(u), atol=1e-14)

    def test_degenerate_force(self, vehicle):
        with pytest.raises(DegenerateForce):
            force_to_attitude([1e-7, 0.0, 0.0], 0.0, vehicle)

    def test_no_hemisphere_flip(self, vehicle, rng):
        prev = None
        for _ in range(500):
            u = np.array([0.0, 0.0, 25.0]) + 5 * rng.normal(size=3)
            cmd = force_to_attitude(u, rng.uniform(-np.pi, np.pi), vehicle, previous=prev)
            assert np.linalg.norm(cmd.attitude_d) == pytest.approx(1.0, abs=1e-12)
            if prev is not None:
                assert np.dot(cmd.attitude_d, prev) >= 0
            prev = cmd.attitude_d
