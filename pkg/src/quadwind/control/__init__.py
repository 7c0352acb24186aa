"""Position controllers, composite adaptation and force-to-attitude kinematics."""

from ..sim import AttitudeThrustCmd
from .adaptation import AdaptiveState, adapt_discrete, block_basis
from .controllers import (CompositeAdaptive, Controller, ControllerGains, Indi, L1Adaptive,
                          NonlinearBaseline, Observation, basis_input, composite_error)
from .kinematics import force_to_attitude

__all__ = [
    "AdaptiveState", "AttitudeThrustCmd", "CompositeAdaptive", "Controller", "ControllerGains",
    "Indi", "L1Adaptive", "NonlinearBaseline", "Observation", "adapt_discrete", "basis_input",
    "block_basis", "composite_error", "force_to_attitude",
]
