"""Desired trajectories: benchmark figure-8 / ellipse and random rest-to-rest splines."""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from .errors import OutOfRange

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class DesiredState:
    pos_d: np.ndarray
    vel_d: np.ndarray
    acc_d: np.ndarray


def figure8(width: float, height: float, period: float, t: float, z0: float = 0.0) -> DesiredState:
    """Lemniscate in the x-z plane; x runs at the lap frequency, z at twice it."""
    if width <= 0 or height <= 0 or period <= 0:
        raise ValueError("width, height and period must be positive")
    w1 = TWO_PI / period
    w2 = 2.0 * w1
    ax, az = width / 2.0, height / 2.0
    s1, c1 = np.sin(w1 * t), np.cos(w1 * t)
    s2, c2 = np.sin(w2 * t), np.cos(w2 * t)
    return DesiredState(
        np.array([ax * s1, 0.0, z0 + az * s2]),
        np.array([ax * w1 * c1, 0.0, az * w2 * c2]),
        np.array([-ax * w1 * w1 * s1, 0.0, -az * w2 * w2 * s2]),
    )


def ellipse(a: float, b: float, period: float, t: float, z0: float = 0.0) -> DesiredState:
    """Horizontal ellipse in the x-y plane."""
    w = TWO_PI / period
    s, c = np.sin(w * t), np.cos(w * t)
    return DesiredState(np.array([a * c, b * s, z0]),
                        np.array([-a * w * s, b * w * c, 0.0]),
                        np.array([-a * w * w * c, -b * w * w * s, 0.0]))


@dataclass(frozen=True)
class Figure8:
    width: float = 2.5
    height: float = 1.5
    period: float = 6.28
    z0: float = 0.0

    def __call__(self, t):
        return figure8(self.width, self.height, self.period, t, self.z0)


@dataclass(frozen=True)
class Ellipse:
    a: float = 1.5
    b: float = 1.25
    period: float = 5.0
    z0: float = 0.0

    def __call__(self, t):
        return ellipse(self.a, self.b, self.period, t, self.z0)


@dataclass(frozen=True)
class Hover:
    point: tuple = (0.0, 0.0, 0.0)

    def __call__(self, t):
        return DesiredState(np.array(self.point, float), np.zeros(3), np.zeros(3))


# Rest-to-rest septic blend s(u) = 35u^4 - 84u^5 + 70u^6 - 20u^7.
_BLEND = np.array([0.0, 0.0, 0.0, 0.0, 35.0, -84.0, 70.0, -20.0])


@dataclass(frozen=True)
class SplineSegment:
    """Degree-7 polynomial per axis; ``coeffs[axis, k]`` multiplies tau**k."""
    coeffs: np.ndarray
    duration: float

    @classmethod
    def rest_to_rest(cls, start, end, duration):
        start = np.asarray(start, float)
        end = np.asarray(end, float)
        scale = duration ** -np.arange(8.0)
        coeffs = np.outer(end - start, _BLEND * scale)
        coeffs[:, 0] += start
        return cls(coeffs, float(duration))

    def derivative_coeffs(self, order):
        c = self.coeffs
        for _ in range(order):
            c = c[:, 1:] * np.arange(1, c.shape[1])
        return c


def _horner(c, tau):
    out = np.zeros(c.shape[0])
    for k in range(c.shape[1] - 1, -1, -1):
        out = out * tau + c[:, k]
    return out


def eval_segment(seg: SplineSegment, tau: float) -> DesiredState:
    if tau < 0 or tau > seg.duration:
        raise OutOfRange(f"tau={tau} outside [0, {seg.duration}]")
    return DesiredState(_horner(seg.coeffs, tau),
                        _horner(seg.derivative_coeffs(1), tau),
                        _horner(seg.derivative_coeffs(2), tau))


def eval_jerk(seg: SplineSegment, tau: float):
    if tau < 0 or tau > seg.duration:
        raise OutOfRange(f"tau={tau} outside [0, {seg.duration}]")
    return _horner(seg.derivative_coeffs(3), tau)


class SplineTrajectory:
    """Chain of rest-to-rest segments; holds the final waypoint after the end."""

    def __init__(self, segments):
        self.segments = list(segments)
        self.knots = np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    @property
    def duration(self):
        return float(self.knots[-1])

    @property
    def waypoints(self):
        pts = [self.segments[0].coeffs[:, 0]]
        pts += [eval_segment(s, s.duration).pos_d for s in self.segments]
        return np.array(pts)

    def locate(self, t):
        i = bisect.bisect_right(self.knots, t) - 1
        return min(max(i, 0), len(self.segments) - 1)

    def __call__(self, t):
        if t >= self.duration:
            seg = self.segments[-1]
            return DesiredState(eval_segment(seg, seg.duration).pos_d, np.zeros(3), np.zeros(3))
        i = self.locate(max(t, 0.0))
        seg = self.segments[i]
        return eval_segment(seg, min(max(t - self.knots[i], 0.0), seg.duration))


def random_spline_trajectory(bounds, segment_duration_range, total_duration, rng,
                             start=None) -> SplineTrajectory:
    """Rest-to-rest spline through uniformly sampled waypoints inside an axis-aligned box.

    ``bounds`` is ``(lower_xyz, upper_xyz)``.  Each spline visits two fresh
    random targets from the current point; splines are chained until
    ``total_duration`` is covered.
    """
    lo, hi = (np.asarray(b, float) for b in bounds)
    if np.any(hi < lo):
        raise ValueError("empty bounds")
    dmin, dmax = segment_duration_range
    if dmin <= 0 or dmax < dmin or total_duration <= 0:
        raise ValueError("durations must be positive")
    current = np.asarray(start, float) if start is not None else rng.uniform(lo, hi)
    segments, elapsed = [], 0.0
    while elapsed < total_duration:
        for _ in range(2):
            target = rng.uniform(lo, hi)
            duration = rng.uniform(dmin, dmax)
            segments.append(SplineSegment.rest_to_rest(current, target, duration))
            current, elapsed = target, elapsed + duration
    return SplineTrajectory(segments)
