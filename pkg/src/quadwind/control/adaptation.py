"""Composite adaptation of the residual-force coefficients.

Continuous law (regularisation, prediction error, tracking error):

    a' = -lambda a - P phi^T R^-1 (phi a - y) + P phi^T s
    P' = -2 lambda P + Q - P phi^T R^-1 phi P

Implemented as a Kalman-style propagate / update pair per control tick.  The
measurement covariance of the discrete update is R / dt and the tracking
term is integrated over the tick, so the step agrees with the continuous law
to first order in dt.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import SingularInnovation

# reciprocal condition number below which the innovation is treated as singular
SINGULAR_RCOND = 1e-12


@dataclass
class AdaptiveState:
    a_hat: np.ndarray
    P: np.ndarray

    @classmethod
    def initial(cls, dim, q, lam, p0=None):
        """a_hat = 0 and P at the phi = 0 stationary value Q / (2 lambda)."""
        if p0 is None:
            p0 = q / (2.0 * lam) if lam > 0 else 1.0
        return cls(np.zeros(dim), p0 * np.eye(dim))

    def copy(self):
        return AdaptiveState(self.a_hat.copy(), self.P.copy())


def block_basis(phi_row):
    """blockdiag(phi, phi, phi) for a basis row vector: (3, 3 * len(phi))."""
    return np.kron(np.eye(3), np.asarray(phi_row, dtype=float)[None, :])


def adapt_discrete(state: AdaptiveState, phi, y, s, dt, Q, R, lam) -> AdaptiveState:
    """One propagate + update step.

    ``phi`` is the (3, n) regressor, ``y`` the measured residual force (or
    None to skip the prediction-error update), ``s`` the composite tracking
    error, ``Q``/``R`` the (n, n)/(3, 3) adaptation gains, ``lam`` the damping.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    phi = np.asarray(phi, dtype=float)
    decay = 1.0 - lam * dt
    a = decay * state.a_hat
    P = decay * decay * state.P + Q * dt
    PphiT = P @ phi.T
    track = dt * (PphiT @ np.asarray(s, dtype=float))
    if y is None:
        return AdaptiveState(a + track, P)
    Rd = R / dt
    S = phi @ PphiT + Rd
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as e:
        raise SingularInnovation("innovation matrix is not positive definite") from e
    d = np.diag(L)
    if (d.min() / d.max()) ** 2 < SINGULAR_RCOND:
        raise SingularInnovation("innovation matrix is numerically singular; increase R")
    K = np.linalg.solve(S, PphiT.T).T
    a_new = a - K @ (phi @ a - np.asarray(y, dtype=float)) + track
    IKH = np.eye(P.shape[0]) - K @ phi
    P_new = IKH @ P @ IKH.T + K @ Rd @ K.T
    P_new = 0.5 * (P_new + P_new.T)
    return AdaptiveState(a_new, P_new)
