"""Exception types raised across the package."""


class QuadwindError(Exception):
    """Base class for all package errors."""


class NonFiniteState(QuadwindError):
    """A simulation state field became NaN or Inf."""


class DegenerateDirection(QuadwindError):
    """A sinusoidal wind was declared with a zero base velocity."""


class OutOfRange(QuadwindError):
    """A spline segment was evaluated outside its duration."""


class TooShort(QuadwindError):
    """A time series is shorter than the differentiation stencil."""


class SimDiverged(QuadwindError):
    """A closed-loop flight produced a non-finite state."""


class SchemaMismatch(QuadwindError):
    """A persisted artifact carries an unsupported format version."""


class IoFailure(QuadwindError):
    """A persisted artifact is missing, truncated or unreadable."""


class InvariantViolation(QuadwindError):
    """Loaded or constructed data breaks a documented invariant."""


class DimMismatch(QuadwindError):
    """Network input does not match the layer dimensions."""


class StaleCache(QuadwindError):
    """Backward pass requested with a cache from another forward pass."""


class DivergedLoss(QuadwindError):
    """Training loss became non-finite."""


class SingularInnovation(QuadwindError):
    """The adaptation innovation matrix is numerically singular."""


class DegenerateForce(QuadwindError):
    """Desired force too small to define a thrust direction."""


class ConfigError(QuadwindError):
    """Experiment configuration failed validation."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
