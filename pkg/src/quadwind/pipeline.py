"""collect -> train -> bench orchestration on an ExperimentConfig."""

from __future__ import annotations

import logging
from pathlib import Path

from . import bench, data, meta
from .config import ExperimentConfig
from .errors import QuadwindError

log = logging.getLogger(__name__)


def collect(cfg: ExperimentConfig, out=None):
    out = Path(out) if out is not None else cfg.path("dataset")
    ds = data.collect(cfg.collection_winds, None, cfg.gains, cfg.collection_seed,
                      cfg.vehicle, cfg.residual, cfg.collection, cfg.flight)
    data.save_dataset(out, ds)
    log.info("wrote %d samples in %d conditions to %s", ds.n_samples, len(ds.subdatasets), out)
    return ds


def train(cfg: ExperimentConfig, data_dir=None, out=None, log_path=None, callback=None):
    """Train on a saved dataset; ``callback(epoch, phi, h)`` runs after every epoch."""
    data_dir = Path(data_dir) if data_dir is not None else cfg.path("dataset")
    out = Path(out) if out is not None else cfg.path("checkpoint")
    ds = data.load_dataset(data_dir)
    val = ds.validation or None
    result = meta.train(ds, cfg.training, validation=val, callback=callback)
    out.parent.mkdir(parents=True, exist_ok=True)
    meta.save_model(out, result)
    log_path = Path(log_path) if log_path is not None else out.with_name(
        cfg.paths["training_log"])
    result.log.write_csv(log_path)
    return result


def ensure_artifacts(cfg: ExperimentConfig):
    """Collect and train only when the dataset / checkpoint are missing."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    if not (cfg.path("dataset") / "meta.json").exists():
        log.info("no dataset at %s, collecting", cfg.path("dataset"))
        collect(cfg)
    if "learned" in cfg.benchmark.controllers and not cfg.path("checkpoint").exists():
        log.info("no checkpoint at %s, training", cfg.path("checkpoint"))
        train(cfg, log_path=cfg.path("training_log"))


def load_basis(path):
    """Frozen feature map from a checkpoint, or (None, error message)."""
    try:
        phi, _ = meta.load_basis(path)
    except QuadwindError as e:
        return None, f"{type(e).__name__}: {e}"
    return phi, ""


def benchmark(cfg: ExperimentConfig, checkpoint=None, auto=True, telemetry=True):
    """Run the matrix and write report.csv / report.txt; returns (report, text)."""
    if auto:
        ensure_artifacts(cfg)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    ckpt = Path(checkpoint) if checkpoint is not None else cfg.path("checkpoint")
    basis, err = (None, "")
    if "learned" in cfg.benchmark.controllers:
        basis, err = load_basis(ckpt)
    tdir = None
    if telemetry:
        tdir = cfg.path("telemetry_dir")
        tdir.mkdir(parents=True, exist_ok=True)
    report = bench.run_benchmark(cfg, basis, tdir, basis_error=err)
    cfg.path("report_csv").write_text(bench.report_csv(report))
    text = bench.summarize(report)
    cfg.path("report_txt").write_text(text)
    return report, text
