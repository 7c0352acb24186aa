"""Experiment configuration loaded from YAML.

Unknown keys and wrongly typed values are rejected with a ConfigError that
names the offending field path (``benchmark.winds[2].speed``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .control.controllers import ControllerGains
from .data import CollectionSettings
from .errors import ConfigError
from .flight import FlightSettings
from .meta import DaimlConfig
from .sim import ResidualModelParams, VehicleParams
from .trajectory import Ellipse, Figure8
from .wind import WindCondition

CONTROLLERS = ("learned", "constant", "nonlinear", "indi", "l1")
LEARNING_CONTROLLERS = ("learned",)


@dataclass
class BenchmarkSettings:
    winds: list
    controllers: tuple = CONTROLLERS
    seeds: tuple = (0, 1, 2, 3, 4)
    warmup_laps: int = 1
    laps: int = 6
    trajectory: object = field(default_factory=Figure8)
    workers: int = 1


@dataclass
class ExperimentConfig:
    vehicle: VehicleParams
    residual: ResidualModelParams
    gains: ControllerGains
    flight: FlightSettings
    collection_winds: list
    collection: CollectionSettings
    collection_seed: int
    training: DaimlConfig
    benchmark: BenchmarkSettings
    output_dir: Path
    paths: dict
    source: str = "<dict>"

    def path(self, name):
        return self.output_dir / self.paths[name]


_DEFAULT_PATHS = {"dataset": "data", "checkpoint": "model.json", "training_log": "training_log.csv",
                  "report_csv": "report.csv", "report_txt": "report.txt",
                  "telemetry_dir": "telemetry"}


def _expect(value, kinds, path):
    if isinstance(value, bool) and bool not in kinds:
        raise ConfigError(path, f"expected {'/'.join(k.__name__ for k in kinds)}, got bool")
    if not isinstance(value, kinds):
        raise ConfigError(path, f"expected {'/'.join(k.__name__ for k in kinds)}, "
                                f"got {type(value).__name__}")
    return value


def _number(value, path):
    return float(_expect(value, (int, float), path))


def _mapping(value, path, allowed):
    if value is None:
        return {}
    _expect(value, (dict,), path)
    for key in value:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else str(key), "unknown field")
    return value


def _vector(value, n, path):
    _expect(value, (list, tuple), path)
    if len(value) != n:
        raise ConfigError(path, f"expected {n} numbers, got {len(value)}")
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _gain_matrix(value, path):
    """A scalar, a 3-vector (diagonal) or a 3x3 nested list."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value) * np.eye(3)
    _expect(value, (list,), path)
    if len(value) == 3 and all(isinstance(v, (int, float)) for v in value):
        return np.diag(_vector(value, 3, path))
    if len(value) == 3:
        return np.array([_vector(r, 3, f"{path}[{i}]") for i, r in enumerate(value)])
    raise ConfigError(path, "expected a scalar, a 3-vector or a 3x3 matrix")


def _build(cls, kwargs, path):
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as e:
        raise ConfigError(path, str(e)) from e
    except Exception as e:  # invariant violations from the value types
        raise ConfigError(path, str(e)) from e


def _parse_wind(d, path, label=0):
    d = _mapping(d, path, {"kind", "speed", "heading_deg", "amplitude", "angular_freq"})
    kind = _expect(d.get("kind", "constant"), (str,), f"{path}.kind")
    speed = _number(d.get("speed", 0.0), f"{path}.speed")
    heading = np.deg2rad(_number(d.get("heading_deg", 0.0), f"{path}.heading_deg"))
    try:
        if kind == "constant":
            if "amplitude" in d and _number(d["amplitude"], f"{path}.amplitude") != 0:
                raise ConfigError(f"{path}.amplitude", "constant wind cannot have an amplitude")
            return WindCondition.constant(speed, heading, label)
        if kind == "sinusoidal":
            return WindCondition.sinusoidal(
                speed, _number(d.get("amplitude", 0.0), f"{path}.amplitude"),
                _number(d.get("angular_freq", 1.0), f"{path}.angular_freq"), heading, label)
    except ConfigError:
        raise
    except Exception as e:
        raise ConfigError(path, str(e)) from e
    raise ConfigError(f"{path}.kind", f"unknown wind kind {kind!r}")


def _parse_winds(value, path):
    _expect(value, (list,), path)
    if not value:
        raise ConfigError(path, "at least one wind condition is required")
    return [_parse_wind(w, f"{path}[{i}]", label=i) for i, w in enumerate(value)]


def _parse_trajectory(d, path):
    d = _mapping(d, path, {"kind", "width", "height", "period", "z0", "a", "b"})
    kind = d.get("kind", "figure8")
    if kind == "figure8":
        kw = {k: _number(d[k], f"{path}.{k}") for k in ("width", "height", "period", "z0")
              if k in d}
        traj = _build(Figure8, kw, path)
        if min(traj.width, traj.height, traj.period) <= 0:
            raise ConfigError(path, "width, height and period must be positive")
        return traj
    if kind == "ellipse":
        kw = {k: _number(d[k], f"{path}.{k}") for k in ("a", "b", "period", "z0") if k in d}
        return _build(Ellipse, kw, path)
    raise ConfigError(f"{path}.kind", f"unknown trajectory kind {kind!r}")


def _scalar_fields(cls, d, path, skip=()):
    """Numbers and ints for the plain scalar fields of a dataclass."""
    out = {}
    types = {f.name: f.type if isinstance(f.type, str) else f.type.__name__
             for f in fields(cls)}
    for key, value in d.items():
        if key in skip:
            continue
        t = types[key]
        p = f"{path}.{key}"
        if value is None and "None" in t:
            out[key] = None
        elif t.startswith("int"):
            out[key] = int(_expect(value, (int,), p))
        else:
            out[key] = _number(value, p)
    return out


def from_dict(doc: dict, base_dir=".", source="<dict>") -> ExperimentConfig:
    top = _mapping(doc, "", {"output_dir", "vehicle", "residual", "gains", "flight",
                             "collection", "training", "benchmark", "paths"})

    vd = _mapping(top.get("vehicle"), "vehicle", {f.name for f in fields(VehicleParams)})
    vkw = _scalar_fields(VehicleParams, vd, "vehicle", skip=("inertia", "gravity"))
    if "inertia" in vd:
        vkw["inertia"] = _gain_matrix(vd["inertia"], "vehicle.inertia")
    if "gravity" in vd:
        vkw["gravity"] = np.array(_vector(vd["gravity"], 3, "vehicle.gravity"))
    vehicle = _build(VehicleParams, vkw, "vehicle")

    rd = _mapping(top.get("residual"), "residual",
                  {f.name for f in fields(ResidualModelParams)})
    rkw = _scalar_fields(ResidualModelParams, rd, "residual", skip=("linear_drag",))
    if "linear_drag" in rd:
        rkw["linear_drag"] = _gain_matrix(rd["linear_drag"], "residual.linear_drag")
    residual = _build(ResidualModelParams, rkw, "residual")

    gd = _mapping(top.get("gains"), "gains", {f.name for f in fields(ControllerGains)})
    gkw = _scalar_fields(ControllerGains, gd, "gains", skip=("K", "Lam", "K_I", "r"))
    for key in ("K", "Lam", "K_I"):
        if key in gd:
            gkw[key] = _gain_matrix(gd[key], f"gains.{key}")
    # measurement covariance defaults to the label noise variance
    r = gd.get("r")
    gkw["r"] = _number(r, "gains.r") if r is not None else max(residual.noise_sigma ** 2, 1e-6)
    gains = _build(ControllerGains, gkw, "gains")

    fd = _mapping(top.get("flight"), "flight", {f.name for f in fields(FlightSettings)})
    flight = _build(FlightSettings, _scalar_fields(FlightSettings, fd, "flight"), "flight")

    cd = _mapping(top.get("collection"), "collection",
                  {"winds", "duration", "validation_duration", "seed", "bounds",
                   "segment_duration_range"})
    ckw = {}
    for key in ("duration", "validation_duration"):
        if key in cd:
            ckw[key] = _number(cd[key], f"collection.{key}")
    if "bounds" in cd:
        b = _expect(cd["bounds"], (list,), "collection.bounds")
        if len(b) != 2:
            raise ConfigError("collection.bounds", "expected [lower_xyz, upper_xyz]")
        ckw["bounds"] = tuple(tuple(_vector(v, 3, f"collection.bounds[{i}]"))
                              for i, v in enumerate(b))
    if "segment_duration_range" in cd:
        ckw["segment_duration_range"] = tuple(
            _vector(cd["segment_duration_range"], 2, "collection.segment_duration_range"))
    collection = CollectionSettings(**ckw)
    if collection.duration <= 0:
        raise ConfigError("collection.duration", "must be positive")
    cwinds = _parse_winds(cd.get("winds", [{"kind": "constant", "speed": s} for s in
                                           (0.0, 1.3, 2.5, 3.7, 4.9, 6.1)]), "collection.winds")
    if len(cwinds) < 2:
        raise ConfigError("collection.winds", "at least two conditions are required")
    cseed = int(_expect(cd.get("seed", 0), (int,), "collection.seed"))

    td = _mapping(top.get("training"), "training", {f.name for f in fields(DaimlConfig)})
    training = _build(DaimlConfig, _scalar_fields(DaimlConfig, td, "training"), "training")
    try:
        training.validate()
    except Exception as e:
        raise ConfigError("training", str(e)) from e

    bd = _mapping(top.get("benchmark"), "benchmark",
                  {"winds", "controllers", "seeds", "warmup_laps", "laps", "trajectory", "workers"})
    bwinds = _parse_winds(bd.get("winds", [{"kind": "constant", "speed": s}
                                           for s in (0.0, 4.2, 8.5, 12.1)]
                          + [{"kind": "sinusoidal", "speed": 8.5, "amplitude": 2.4}]),
                          "benchmark.winds")
    ctrls = tuple(_expect(bd.get("controllers", list(CONTROLLERS)), (list,),
                          "benchmark.controllers"))
    for i, c in enumerate(ctrls):
        if c not in CONTROLLERS:
            raise ConfigError(f"benchmark.controllers[{i}]", f"unknown controller {c!r}")
    seeds = _expect(bd.get("seeds", [0, 1, 2, 3, 4]), (list,), "benchmark.seeds")
    if not seeds:
        raise ConfigError("benchmark.seeds", "seed list must be non-empty")
    seeds = tuple(int(_expect(s, (int,), f"benchmark.seeds[{i}]")) for i, s in enumerate(seeds))
    bench = BenchmarkSettings(
        winds=bwinds, controllers=ctrls, seeds=seeds,
        warmup_laps=int(_expect(bd.get("warmup_laps", 1), (int,), "benchmark.warmup_laps")),
        laps=int(_expect(bd.get("laps", 6), (int,), "benchmark.laps")),
        trajectory=_parse_trajectory(bd.get("trajectory"), "benchmark.trajectory"),
        workers=int(_expect(bd.get("workers", 1), (int,), "benchmark.workers")))
    if bench.laps < 1 or bench.warmup_laps < 0 or bench.workers < 1:
        raise ConfigError("benchmark", "laps >= 1, warmup_laps >= 0 and workers >= 1 required")

    pd = _mapping(top.get("paths"), "paths", set(_DEFAULT_PATHS))
    paths = dict(_DEFAULT_PATHS)
    for key, value in pd.items():
        paths[key] = _expect(value, (str,), f"paths.{key}")
    out = Path(_expect(top.get("output_dir", "runs/default"), (str,), "output_dir"))
    if not out.is_absolute():
        out = Path(base_dir) / out
    return ExperimentConfig(vehicle, residual, gains, flight, cwinds, collection, cseed,
                            training, bench, out, paths, source)


def default_config_text():
    return resources.files("quadwind").joinpath("configs/default.yaml").read_text()


def load_config(name, output_dir=None) -> ExperimentConfig:
    """Load a YAML file; ``"default"`` names the bundled default configuration.

    ``output_dir`` overrides the configured output directory.
    """
    if name in ("default", None):
        text, source, base = default_config_text(), "default", Path.cwd()
    else:
        path = Path(name)
        try:
            text = path.read_text()
        except OSError as e:
            raise ConfigError("", f"cannot read config {path}: {e}") from e
        source, base = str(path), path.parent
    try:
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        raise ConfigError("", f"invalid YAML: {e}") from e
    if output_dir is not None:
        doc = dict(doc)
        doc["output_dir"] = str(Path(output_dir).resolve())
    return from_dict(doc, base_dir=base, source=source)
