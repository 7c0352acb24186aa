"""Data-collection flights, residual-force labels and the on-disk dataset format.

A dataset directory holds ``meta.json`` plus one CSV per wind condition
(``train_<k>.csv``) and, optionally, per-condition validation flights
(``val_<k>.csv``).  Every CSV has the columns of ``SAMPLE_COLUMNS``; floats
are written with ``repr`` so a save/load round trip is exact.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .control.controllers import ControllerGains, NonlinearBaseline
from .differentiate import second_derivative
from .errors import InvariantViolation, IoFailure, SchemaMismatch
from .flight import FlightSettings, Telemetry, fly
from .sim import ResidualModelParams, VehicleParams
from .trajectory import Figure8, random_spline_trajectory
from .wind import WindCondition, WindKind

log = logging.getLogger(__name__)

DATASET_VERSION = 1
SAMPLE_COLUMNS = (["t"] + [f"v_{a}" for a in "xyz"] + [f"q_{a}" for a in "wxyz"]
                  + [f"pwm_{i}" for i in range(1, 5)] + [f"y_{a}" for a in "xyz"]
                  + [f"f_true_{a}" for a in "xyz"] + ["k"])


def residual_label(positions, thrust_vectors, vehicle: VehicleParams, dt: float):
    """y = m a - m g - R f_u with a from the 7-point second-derivative stencil."""
    acc = second_derivative(positions, dt)
    m = vehicle.mass
    return m * acc - m * vehicle.gravity - np.asarray(thrust_vectors, dtype=float)


@dataclass
class SubDataset:
    """Samples from one wind condition: inputs x (N, 11), labels y (N, 3)."""
    k: int
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    f_true: np.ndarray
    condition: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.x)

    def validate(self):
        n = len(self.x)
        if n == 0:
            raise InvariantViolation(f"subdataset {self.k} is empty")
        if self.x.shape != (n, 11) or self.y.shape != (n, 3) or self.f_true.shape != (n, 3):
            raise InvariantViolation(f"subdataset {self.k} has inconsistent shapes")
        if not np.all(np.isfinite(self.x)):
            raise InvariantViolation(f"subdataset {self.k} has non-finite inputs")
        qn = np.linalg.norm(self.x[:, 3:7], axis=1)
        if np.max(np.abs(qn - 1.0)) > 1e-6:
            raise InvariantViolation(f"subdataset {self.k} has non-unit quaternions")


@dataclass
class FlightDataset:
    subdatasets: list
    validation: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n_samples(self):
        return sum(len(s) for s in self.subdatasets)

    def validate(self):
        if not self.subdatasets:
            raise InvariantViolation("dataset has no subdatasets")
        for i, sub in enumerate(self.subdatasets):
            if sub.k != i:
                raise InvariantViolation(f"subdataset {i} carries label {sub.k}")
            sub.validate()
        for sub in self.validation:
            sub.validate()


@dataclass
class CollectionSettings:
    duration: float = 120.0
    validation_duration: float = 20.0
    bounds: tuple = ((-1.5, -1.5, -1.0), (1.5, 1.5, 1.0))
    segment_duration_range: tuple = (2.5, 4.0)


def _subdataset(tel: Telemetry, k, cond, vehicle, residual, rng, dt):
    y = residual_label(tel.p, tel.thrust_vec, vehicle, dt)
    if residual.noise_sigma > 0:
        y = y + rng.normal(0.0, residual.noise_sigma, size=y.shape)
    return SubDataset(k, tel.inputs(), y, tel.t.copy(), tel.f_true.copy(),
                      condition=_condition_dict(cond))


def _condition_dict(cond: WindCondition):
    d = asdict(cond)
    d["kind"] = cond.kind.value
    d["base_velocity"] = list(cond.base_velocity)
    return d


def _condition_from_dict(d):
    return WindCondition(WindKind(d["kind"]), tuple(d["base_velocity"]), d["amplitude"],
                         d["angular_freq"], d["label"])


def collect(conditions, duration_per_condition=None, controller_gains=None, seed=0,
            vehicle=None, residual=None, settings: CollectionSettings | None = None,
            flight: FlightSettings | None = None, validation=True) -> FlightDataset:
    """Fly the nonlinear baseline on a fresh random spline per condition and label the log."""
    conditions = list(conditions)
    if len(conditions) < 2:
        raise ValueError("need at least two wind conditions")
    settings = settings or CollectionSettings()
    if duration_per_condition is not None:
        settings = CollectionSettings(duration_per_condition, settings.validation_duration,
                                      settings.bounds, settings.segment_duration_range)
    if settings.duration <= 0:
        raise ValueError("duration must be positive")
    vehicle = vehicle or VehicleParams()
    residual = residual if residual is not None else ResidualModelParams()
    flight = flight or FlightSettings()
    gains = controller_gains or ControllerGains()
    dt = flight.control_dt

    subs, vals = [], []
    for k, cond in enumerate(conditions):
        rng = np.random.default_rng([seed, k])
        traj = random_spline_trajectory(settings.bounds, settings.segment_duration_range,
                                        settings.duration, rng)
        ctrl = NonlinearBaseline(vehicle, gains)
        tel = fly(ctrl, traj, cond, settings.duration, vehicle, residual, rng, flight)
        subs.append(_subdataset(tel, k, cond, vehicle, residual, rng, dt))
        if validation and settings.validation_duration > 0:
            tel = fly(NonlinearBaseline(vehicle, gains), Figure8(), cond,
                      settings.validation_duration, vehicle, residual, rng, flight)
            vals.append(_subdataset(tel, k, cond, vehicle, residual, rng, dt))
        log.info("collected condition %d (%s): %d samples", k, cond.describe(), len(subs[-1]))

    meta = {"seed": int(seed), "sample_rate_hz": flight.control_rate,
            "conditions": [_condition_dict(c) for c in conditions],
            "settings": json.loads(json.dumps(asdict(settings)))}
    meta["config_hash"] = hashlib.sha256(json.dumps(
        {"meta": meta, "vehicle": repr(vehicle), "residual": repr(residual)},
        sort_keys=True, default=str).encode()).hexdigest()[:16]
    ds = FlightDataset(subs, vals, meta)
    ds.validate()
    return ds


def _write_sub(path, sub: SubDataset):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SAMPLE_COLUMNS)
        for i in range(len(sub)):
            row = [sub.t[i], *sub.x[i], *sub.y[i], *sub.f_true[i]]
            w.writerow([repr(float(c)) for c in row] + [sub.k])


def _read_sub(path, k, condition):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    if not rows or tuple(rows[0]) != tuple(SAMPLE_COLUMNS):
        raise IoFailure(f"{path}: missing or unexpected header")
    body = rows[1:]
    if any(len(r) != len(SAMPLE_COLUMNS) for r in body):
        raise IoFailure(f"{path}: truncated row")
    try:
        arr = np.array([[float(c) for c in r] for r in body], dtype=float)
    except ValueError as e:
        raise IoFailure(f"{path}: malformed row ({e})") from e
    if len(body) == 0:
        arr = np.zeros((0, len(SAMPLE_COLUMNS)))
    if np.any(arr[:, -1] != k):
        raise InvariantViolation(f"{path}: sample labels do not match condition {k}")
    return SubDataset(k, arr[:, 1:12].copy(), arr[:, 12:15].copy(), arr[:, 0].copy(),
                      arr[:, 15:18].copy(), condition)


def save_dataset(path, ds: FlightDataset):
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    for sub in ds.subdatasets:
        _write_sub(d / f"train_{sub.k}.csv", sub)
    for sub in ds.validation:
        _write_sub(d / f"val_{sub.k}.csv", sub)
    doc = {"format_version": DATASET_VERSION, "n_conditions": len(ds.subdatasets),
           "n_validation": len(ds.validation),
           "conditions": [s.condition for s in ds.subdatasets], "meta": ds.meta}
    (d / "meta.json").write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_dataset(path) -> FlightDataset:
    d = Path(path)
    try:
        doc = json.loads((d / "meta.json").read_text())
    except FileNotFoundError as e:
        raise IoFailure(f"no dataset at {d}") from e
    except (OSError, ValueError) as e:
        raise IoFailure(f"unreadable dataset metadata in {d}: {e}") from e
    if doc.get("format_version") != DATASET_VERSION:
        raise SchemaMismatch(f"dataset version {doc.get('format_version')!r}, "
                             f"expected {DATASET_VERSION}")
    try:
        K, n_val, conds = doc["n_conditions"], doc["n_validation"], doc["conditions"]
    except KeyError as e:
        raise IoFailure(f"dataset metadata missing {e}") from e
    subs = [_read_sub(d / f"train_{k}.csv", k, conds[k]) for k in range(K)]
    vals = [_read_sub(d / f"val_{k}.csv", k, conds[k]) for k in range(n_val)]
    ds = FlightDataset(subs, vals, doc.get("meta", {}))
    ds.validate()
    return ds


def dataset_conditions(ds: FlightDataset):
    return [_condition_from_dict(s.condition) for s in ds.subdatasets]
