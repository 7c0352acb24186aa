"""Desired force -> (thrust, attitude) decomposition."""

import numpy as np

from .. import quat
from ..errors import DegenerateForce
from ..sim import AttitudeThrustCmd, VehicleParams

MIN_FORCE = 1e-6


def force_to_attitude(u, yaw_d: float, vehicle: VehicleParams, previous=None) -> AttitudeThrustCmd:
    """Align body z with ``u`` at heading ``yaw_d``; thrust is |u| clamped to the rotor limit.

    ``previous`` (a quaternion) picks the sign of the result so consecutive
    commands never flip hemisphere.
    """
    u = np.asarray(u, dtype=float)
    norm = np.linalg.norm(u)
    if norm < MIN_FORCE:
        raise DegenerateForce(f"|u| = {norm:.3g} N")
    b3 = u / norm
    b1c = np.array([np.cos(yaw_d), np.sin(yaw_d), 0.0])
    b2 = np.cross(b3, b1c)
    n2 = np.linalg.norm(b2)
    if n2 < 1e-9:
        # thrust axis horizontal along the heading; fall back to world y
        b2 = np.cross(b3, np.array([0.0, 1.0, 0.0]))
        n2 = np.linalg.norm(b2)
    b2 /= n2
    b1 = np.cross(b2, b3)
    q = quat.from_rotation(np.column_stack([b1, b2, b3]))
    if previous is not None and np.dot(q, previous) < 0:
        q = -q
    return AttitudeThrustCmd(float(min(norm, vehicle.thrust_max)), q)
