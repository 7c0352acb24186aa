"""Spatially uniform wind profiles (the hidden environment condition)."""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateDirection, InvariantViolation

MAX_WIND_SPEED = 15.0


class WindKind(str, Enum):
    CONSTANT = "constant"
    SINUSOIDAL = "sinusoidal"


@dataclass(frozen=True)
class WindCondition:
    kind: WindKind
    base_velocity: tuple
    amplitude: float = 0.0
    angular_freq: float = 1.0
    label: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", WindKind(self.kind))
        base = tuple(float(c) for c in self.base_velocity)
        if len(base) != 3:
            raise InvariantViolation("base_velocity must have 3 components")
        object.__setattr__(self, "base_velocity", base)
        if np.linalg.norm(base) > MAX_WIND_SPEED:
            raise InvariantViolation(f"wind speed above {MAX_WIND_SPEED} m/s")
        if self.amplitude < 0:
            raise InvariantViolation("amplitude must be >= 0")
        if self.kind is WindKind.CONSTANT and self.amplitude != 0:
            raise InvariantViolation("constant wind cannot have an amplitude")

    @classmethod
    def constant(cls, speed, heading=0.0, label=0):
        """Horizontal wind of ``speed`` m/s blowing along ``heading`` rad from +x."""
        return cls(WindKind.CONSTANT,
                   (speed * np.cos(heading), speed * np.sin(heading), 0.0),
                   label=label)

    @classmethod
    def sinusoidal(cls, speed, amplitude, angular_freq=1.0, heading=0.0, label=0):
        return cls(WindKind.SINUSOIDAL,
                   (speed * np.cos(heading), speed * np.sin(heading), 0.0),
                   amplitude=amplitude, angular_freq=angular_freq, label=label)

    @property
    def speed(self):
        return float(np.linalg.norm(self.base_velocity))

    def describe(self):
        if self.kind is WindKind.CONSTANT:
            return f"{self.speed:g}"
        return f"{self.speed:g}+{self.amplitude:g}sin({self.angular_freq:g}t)"

    def packed(self):
        """(kind code, base xyz, amplitude, angular_freq) for the compiled kernels."""
        kind = 0 if self.kind is WindKind.CONSTANT else 1
        if kind == 1 and self.speed == 0.0:
            raise DegenerateDirection("sinusoidal wind needs a nonzero base velocity")
        return np.array([kind, *self.base_velocity, self.amplitude, self.angular_freq])


def wind_velocity(cond: WindCondition, t: float) -> np.ndarray:
    base = np.asarray(cond.base_velocity)
    if cond.kind is WindKind.CONSTANT:
        return base.copy()
    speed = np.linalg.norm(base)
    if speed == 0.0:
        raise DegenerateDirection("sinusoidal wind needs a nonzero base velocity")
    return base * (1.0 + (cond.amplitude / speed) * np.sin(cond.angular_freq * t))


# Six static training conditions and the benchmark set (extrapolation beyond 6.1 m/s).
TRAINING_SPEEDS = (0.0, 1.3, 2.5, 3.7, 4.9, 6.1)
BENCHMARK_SPEEDS = (0.0, 4.2, 8.5, 12.1)


def training_conditions():
    return [WindCondition.constant(s, label=k) for k, s in enumerate(TRAINING_SPEEDS)]


def benchmark_conditions():
    conds = [WindCondition.constant(s, label=k) for k, s in enumerate(BENCHMARK_SPEEDS)]
    conds.append(WindCondition.sinusoidal(8.5, 2.4, 1.0, label=len(conds)))
    return conds
