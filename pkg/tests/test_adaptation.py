import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadwind.control.adaptation import AdaptiveState, adapt_discrete, block_basis
from quadwind.errors import SingularInnovation


def random_spd(rng, n, scale=1.0):
    A = rng.normal(size=(n, n))
    return scale * (A @ A.T / n + 0.5 * np.eye(n))


def continuous_step(a0, P0, phi, y, s, Q, R, lam, dt, h=1e-4):
    """RK4 integration of the continuous adaptation law over ``dt`` with inputs held."""
    Ri = np.linalg.inv(R)

    def f(a, P):
        da = -lam * a - P @ phi.T @ Ri @ (phi @ a - y) + P @ phi.T @ s
        dP = -2 * lam * P + Q - P @ phi.T @ Ri @ phi @ P
        return da, dP

    a, P = a0.copy(), P0.copy()
    for _ in range(int(round(dt / h))):
        k1 = f(a, P)
        k2 = f(a + h / 2 * k1[0], P + h / 2 * k1[1])
        k3 = f(a + h / 2 * k2[0], P + h / 2 * k2[1])
        k4 = f(a + h * k3[0], P + h * k3[1])
        a = a + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        P = P + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return a, P


def test_block_basis_layout():
    B = block_basis([1.0, 2.0])
    np.testing.assert_array_equal(B, [[1, 2, 0, 0, 0, 0], [0, 0, 1, 2, 0, 0], [0, 0, 0, 0, 1, 2]])


def test_initial_covariance_is_stationary_value():
    st_ = AdaptiveState.initial(12, q=0.1, lam=0.01)
    np.testing.assert_allclose(st_.P, 5.0 * np.eye(12))
    assert not np.any(st_.a_hat)


def test_zero_regressor_is_pure_decay(rng):
    a0 = rng.normal(size=12)
    P0 = random_spd(rng, 12)
    Q, R, lam, dt = 0.1 * np.eye(12), 0.01 * np.eye(3), 0.2, 0.02
    out = adapt_discrete(AdaptiveState(a0, P0), np.zeros((3, 12)), rng.normal(size=3),
                         np.zeros(3), dt, Q, R, lam)
    np.testing.assert_allclose(out.a_hat, (1 - lam * dt) * a0, rtol=1e-15)
    np.testing.assert_allclose(out.P, (1 - lam * dt) ** 2 * P0 + Q * dt, rtol=1e-14)


def test_matches_continuous_law_to_second_order():
    rng = np.random.default_rng(0)
    n = 12
    phi = 0.5 * rng.normal(size=(3, n))
    y, s = rng.normal(size=3), rng.normal(size=3)
    Q, R, lam = 0.1 * np.eye(n), 0.5 * np.eye(3), 0.3
    P0, a0 = random_spd(rng, n), rng.normal(size=n)
    errors = []
    for dt in (0.01, 0.005):
        a_c, P_c = continuous_step(a0, P0, phi, y, s, Q, R, lam, dt)
        d = adapt_discrete(AdaptiveState(a0, P0), phi, y, s, dt, Q, R, lam)
        errors.append(max(np.abs(d.a_hat - a_c).max(), np.abs(d.P - P_c).max()))
    ratio = errors[0] / errors[1]
    assert 4 * 0.7 <= ratio <= 4 * 1.3


def test_scalar_kalman_closed_form():
    """phi = I, s = 0, lambda = 0, Q -> 0: information-form recursion of a constant."""
    y = np.array([1.5, -0.7, 2.0])
    p0, r, dt = 2.0, 0.04, 0.02
    Q = 1e-300 * np.eye(3)
    state = AdaptiveState(np.zeros(3), p0 * np.eye(3))
    for k in range(1, 200):
        state = adapt_discrete(state, np.eye(3), y, np.zeros(3), dt, Q, r * np.eye(3), 0.0)
        info = k * dt / r
        np.testing.assert_allclose(state.a_hat, y * info / (1 / p0 + info), rtol=1e-10)
        np.testing.assert_allclose(np.diag(state.P), 1 / (1 / p0 + info), rtol=1e-10)


def test_converges_to_constant_measurement():
    y = np.array([0.8, -1.1, 0.3])
    state = AdaptiveState.initial(3, 0.1, 0.01, p0=1.0)
    for _ in range(2000):
        state = adapt_discrete(state, np.eye(3), y, np.zeros(3), 0.02, 0.1 * np.eye(3),
                               0.0025 * np.eye(3), 0.0)
    np.testing.assert_allclose(state.a_hat, y, rtol=1e-9)


def test_tracking_term_without_measurement(rng):
    P0 = random_spd(rng, 6)
    phi, s = rng.normal(size=(3, 6)), rng.normal(size=3)
    dt, Q = 0.02, 0.1 * np.eye(6)
    out = adapt_discrete(AdaptiveState(np.zeros(6), P0), phi, None, s, dt, Q, np.eye(3), 0.0)
    np.testing.assert_allclose(out.a_hat, dt * (P0 + Q * dt) @ phi.T @ s, rtol=1e-13)


@given(st.integers(0, 2 ** 31), st.floats(1e-4, 1.0), st.floats(0.0, 0.5))
@settings(max_examples=50, deadline=None)
def test_covariance_stays_spd(seed, r, lam):
    rng = np.random.default_rng(seed)
    n = 12
    state = AdaptiveState.initial(n, 0.1, 0.01)
    Q, R = 0.1 * np.eye(n), r * np.eye(3)
    for _ in range(200):
        phi = block_basis(rng.normal(scale=rng.uniform(0.01, 3.0), size=4))
        state = adapt_discrete(state, phi, rng.normal(size=3), rng.normal(size=3), 0.02, Q, R,
                               lam)
        assert np.abs(state.P - state.P.T).max() < 1e-9
        assert np.linalg.eigvalsh(state.P).min() > 0


def test_singular_innovation():
    state = AdaptiveState.initial(3, 0.1, 0.01)
    phi = np.diag([1e9, 1.0, 1.0])
    with pytest.raises(SingularInnovation):
        adapt_discrete(state, phi, np.zeros(3), np.zeros(3), 0.02, 0.1 * np.eye(3),
                       1e-12 * np.eye(3), 0.01)


def test_rejects_non_positive_dt():
    with pytest.raises(ValueError):
        adapt_discrete(AdaptiveState.initial(3, 0.1, 0.01), np.eye(3), None, np.zeros(3), 0.0,
                       np.eye(3), np.eye(3), 0.0)
