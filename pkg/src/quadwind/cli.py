"""Command-line entry point: ``quadwind collect | train | eval | bench | traj dump``."""

from __future__ import annotations

import csv
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import bench, pipeline
from .config import CONTROLLERS, load_config
from .errors import ConfigError, QuadwindError
from .flight import fly
from .trajectory import Figure8, random_spline_trajectory


def _load(config, output_dir=None):
    try:
        return load_config(config, output_dir)
    except ConfigError as e:
        raise click.ClickException(f"config error at {e}") from e


def _run(fn):
    try:
        return fn()
    except ConfigError as e:
        raise click.ClickException(f"config error at {e}") from e
    except QuadwindError as e:
        raise click.ClickException(f"{type(e).__name__}: {e}") from e


@click.group()
@click.option("-v", "--verbose", count=True, help="-v for progress, -vv for debug output.")
def main(verbose):
    """Wind-adaptive quadrotor control: data collection, basis training and benchmarks."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


config_option = click.option("--config", "config", default="default", show_default=True,
                             help="Experiment YAML file, or 'default' for the bundled one.")
outdir_option = click.option("--output-dir", type=click.Path(file_okay=False), default=None,
                             help="Override the configured output directory.")


@main.command()
@config_option
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Dataset directory (default: <output_dir>/data).")
@outdir_option
def collect(config, out, output_dir):
    """Fly the baseline across the training winds and write the labelled dataset."""
    cfg = _load(config, output_dir)
    ds = _run(lambda: pipeline.collect(cfg, out))
    click.echo(f"collected {ds.n_samples} samples in {len(ds.subdatasets)} conditions "
               f"-> {out or cfg.path('dataset')}")


@main.command()
@config_option
@click.option("--data", "data_dir", type=click.Path(file_okay=False), default=None,
              help="Dataset directory (default: <output_dir>/data).")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Checkpoint path (default: <output_dir>/model.json).")
@outdir_option
def train(config, data_dir, out, output_dir):
    """Meta-train the residual basis on a collected dataset."""
    cfg = _load(config, output_dir)
    result = _run(lambda: pipeline.train(cfg, data_dir, out))
    first, last = result.log.rows[0], result.log.rows[-1]
    click.echo(f"epochs: {last['epoch']}  val f-loss {first['val_f_loss']:.4f} -> "
               f"{last['val_f_loss']:.4f}  cluster ratio {first['cluster_metric']:.3f} -> "
               f"{last['cluster_metric']:.3f}")


@main.command("eval")
@config_option
@click.option("--controller", type=click.Choice(CONTROLLERS), default="learned",
              show_default=True)
@click.option("--wind", "wind_index", type=int, default=0, show_default=True,
              help="Index into the benchmark wind list.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--checkpoint", type=click.Path(dir_okay=False), default=None)
@click.option("--telemetry", type=click.Path(dir_okay=False), default=None,
              help="Write the per-tick telemetry CSV here.")
@outdir_option
def evaluate(config, controller, wind_index, seed, checkpoint, telemetry, output_dir):
    """Fly one benchmark cell and print its tracking and force-prediction errors."""
    cfg = _load(config, output_dir)
    winds = cfg.benchmark.winds
    if not 0 <= wind_index < len(winds):
        raise click.BadParameter(f"must be in [0, {len(winds) - 1}]", param_hint="--wind")
    basis = None
    if controller == "learned":
        basis, err = pipeline.load_basis(checkpoint or cfg.path("checkpoint"))
        if basis is None:
            raise click.ClickException(err)
    cell = bench.run_cell(controller, winds[wind_index], seed, cfg, basis,
                          cfg.benchmark.controllers.index(controller)
                          if controller in cfg.benchmark.controllers else 0,
                          wind_index, telemetry)
    if not cell.ok:
        raise click.ClickException(cell.error)
    click.echo(f"{controller} @ {cell.wind} seed {seed}: rms {cell.rms_cm:.3f} cm  "
               f"mean {cell.mean_cm:.3f} cm  force RMSE {cell.force_rmse:.3f} N")


@main.command("bench")
@config_option
@click.option("--check", is_flag=True,
              help="Evaluate the reproduced orderings; exit 1 if any fails.")
@click.option("--checkpoint", type=click.Path(dir_okay=False), default=None)
@click.option("--no-telemetry", is_flag=True, help="Skip the per-cell telemetry CSVs.")
@outdir_option
def bench_cmd(config, check, checkpoint, no_telemetry, output_dir):
    """Run the controller x wind matrix (collecting and training first if needed)."""
    cfg = _load(config, output_dir)
    report, text = _run(lambda: pipeline.benchmark(cfg, checkpoint, telemetry=not no_telemetry))
    click.echo(text, nl=False)
    click.echo(f"report: {cfg.path('report_csv')}")
    if check:
        results = bench.trend_checks(report)
        for name, ok, detail in results:
            click.echo(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        if not all(ok for _, ok, _ in results):
            sys.exit(1)


@main.group()
def traj():
    """Trajectory utilities."""


@traj.command("dump")
@config_option
@click.option("--kind", type=click.Choice(["benchmark", "spline"]), default="benchmark",
              show_default=True)
@click.option("--duration", type=float, default=None,
              help="Seconds to sample (default: one lap / one collection flight).")
@click.option("--rate", type=float, default=50.0, show_default=True, help="Samples per second.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default="-", show_default=True)
def traj_dump(config, kind, duration, rate, seed, out):
    """Write t, position, velocity and acceleration samples as CSV."""
    cfg = _load(config)
    if kind == "benchmark":
        tr = cfg.benchmark.trajectory
        duration = duration or getattr(tr, "period", Figure8().period)
    else:
        duration = duration or cfg.collection.duration
        tr = random_spline_trajectory(cfg.collection.bounds, cfg.collection.segment_duration_range,
                                      duration, np.random.default_rng(seed))
    n = int(round(duration * rate)) + 1
    fh = sys.stdout if out == "-" else open(Path(out), "w", newline="")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"{q}_{a}" for q in ("pos", "vel", "acc") for a in "xyz"])
        for i in range(n):
            t = i / rate
            d = tr(t)
            w.writerow([f"{t:.6f}"] + [f"{float(c):.9g}" for c in
                                       (*d.pos_d, *d.vel_d, *d.acc_d)])
    finally:
        if fh is not sys.stdout:
            fh.close()


if __name__ == "__main__":
    main()
