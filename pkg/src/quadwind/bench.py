"""Controller x wind benchmark on the figure-8, its report table and the trend checks."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .control.controllers import CompositeAdaptive, Indi, L1Adaptive, NonlinearBaseline
from .errors import IoFailure, QuadwindError
from .flight import fly

log = logging.getLogger(__name__)

FOOTER = ("Absolute errors depend on the synthetic residual model and are not targets. "
          "The reproduced claims are the orderings: learned <= constant <= nonlinear "
          "at each wind speed, nonlinear error rising with wind speed, and lower "
          "force-prediction error for the learned basis under sinusoidal wind.")
REPORT_COLUMNS = ("controller", "wind", "seed", "rms_cm", "mean_cm", "force_rmse_n",
                  "lap_means_cm", "error")


@dataclass
class CellResult:
    controller: str
    wind: str
    seed: int
    rms_cm: float = float("nan")
    mean_cm: float = float("nan")
    force_rmse: float = float("nan")
    lap_means_cm: list = field(default_factory=list)
    error: str = ""

    @property
    def ok(self):
        return not self.error


@dataclass
class TrackingReport:
    cells: list
    controllers: list
    winds: list

    def get(self, controller, wind):
        return [c for c in self.cells if c.controller == controller and c.wind == wind]

    def stat(self, controller, wind, attr="mean_cm"):
        """(mean, std) across seeds of the successful cells, NaN if none succeeded."""
        vals = [getattr(c, attr) for c in self.get(controller, wind) if c.ok]
        if not vals:
            return float("nan"), float("nan")
        return float(np.mean(vals)), float(np.std(vals))


def tracking_stats(error_norm, t, period, warmup_laps, laps):
    """RMS, mean and per-lap mean of the error over the scored laps (inputs in m, outputs in cm)."""
    lap_idx = np.floor(t / period + 1e-9).astype(int)
    scored = (lap_idx >= warmup_laps) & (lap_idx < warmup_laps + laps)
    e = error_norm[scored] * 100.0
    lap_means = [float(np.mean(error_norm[lap_idx == warmup_laps + i]) * 100.0)
                 for i in range(laps)]
    # scale by the peak so squaring tiny errors cannot underflow below the mean
    peak = float(np.max(e)) if e.size else 0.0
    rms = peak * float(np.sqrt(np.mean((e / peak) ** 2))) if peak > 0 else float(np.mean(e * e))
    return rms, float(np.mean(e)), lap_means


def make_controller(name, vehicle, gains, basis=None):
    if name == "nonlinear":
        return NonlinearBaseline(vehicle, gains)
    if name == "constant":
        return CompositeAdaptive(vehicle, gains, basis=None)
    if name == "learned":
        if basis is None:
            raise IoFailure("learned controller needs a trained basis checkpoint")
        ctrl = CompositeAdaptive(vehicle, gains, basis=basis)
        ctrl.name = "learned"
        return ctrl
    if name == "indi":
        return Indi(vehicle, gains)
    if name == "l1":
        return L1Adaptive(vehicle, gains)
    raise ValueError(f"unknown controller {name!r}")


def _cell_seed(seed, ci, wi):
    return np.random.default_rng([seed, ci, wi])


def run_cell(controller, wind, seed, cfg, basis, ci=0, wi=0, telemetry_path=None) -> CellResult:
    """One (controller, wind, seed) flight; errors are captured in the result."""
    b = cfg.benchmark
    period = b.trajectory.period
    duration = period * (b.warmup_laps + b.laps)
    cell = CellResult(controller, wind.describe(), seed)
    try:
        ctrl = make_controller(controller, cfg.vehicle, cfg.gains, basis)
        tel = fly(ctrl, b.trajectory, wind, duration, cfg.vehicle, cfg.residual,
                  _cell_seed(seed, ci, wi), cfg.flight)
    except QuadwindError as e:
        cell.error = f"{type(e).__name__}: {e}"
        return cell
    cell.rms_cm, cell.mean_cm, cell.lap_means_cm = tracking_stats(
        tel.error_norm, tel.t, period, b.warmup_laps, b.laps)
    scored = tel.t >= period * b.warmup_laps - 1e-9
    df = tel.f_hat[scored] - tel.f_true[scored]
    cell.force_rmse = float(np.sqrt(np.mean(np.sum(df * df, axis=1))))
    if telemetry_path is not None:
        tel.write_csv(telemetry_path)
    return cell


def _run_cell_job(args):
    return run_cell(*args)


def run_benchmark(cfg, basis=None, telemetry_dir=None, basis_error="") -> TrackingReport:
    """All cells of the configured matrix, reduced in (controller, wind, seed) order.

    ``basis`` is the frozen learned feature map (or None).  Cells needing it
    when it is missing record ``basis_error`` instead of aborting the run.
    """
    b = cfg.benchmark
    jobs, results = [], {}
    for ci, name in enumerate(b.controllers):
        for wi, wind in enumerate(b.winds):
            for seed in b.seeds:
                key = (ci, wi, seed)
                if name == "learned" and basis is None:
                    results[key] = CellResult(name, wind.describe(), seed,
                                              error=basis_error or "no trained basis available")
                    continue
                tpath = None
                if telemetry_dir is not None:
                    tpath = Path(telemetry_dir) / f"{name}_w{wi}_s{seed}.csv"
                jobs.append((key, (name, wind, seed, cfg, basis, ci, wi, tpath)))
    if b.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(b.workers) as pool:
            for (key, _), res in zip(jobs, pool.map(_run_cell_job, [a for _, a in jobs])):
                results[key] = res
    else:
        for key, args in jobs:
            results[key] = run_cell(*args)
            r = results[key]
            log.info("%-9s %-16s seed %d: %s", r.controller, r.wind, r.seed,
                     r.error or f"mean {r.mean_cm:.2f} cm")
    cells = [results[k] for k in sorted(results)]
    return TrackingReport(cells, list(b.controllers), [w.describe() for w in b.winds])


def report_csv(report: TrackingReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for c in report.cells:
        w.writerow([c.controller, c.wind, c.seed, repr(c.rms_cm), repr(c.mean_cm),
                    repr(c.force_rmse), ";".join(repr(x) for x in c.lap_means_cm), c.error])
    return buf.getvalue()


def parse_report_csv(text: str) -> TrackingReport:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != REPORT_COLUMNS:
        raise IoFailure("not a benchmark report: unexpected header")
    cells, controllers, winds = [], [], []
    for r in rows[1:]:
        laps = [float(x) for x in r[6].split(";")] if r[6] else []
        cells.append(CellResult(r[0], r[1], int(r[2]), float(r[3]), float(r[4]), float(r[5]),
                                laps, r[7]))
        if r[0] not in controllers:
            controllers.append(r[0])
        if r[1] not in winds:
            winds.append(r[1])
    return TrackingReport(cells, controllers, winds)


def summarize(report: TrackingReport):
    """Fixed-column text table (mean +- std across seeds) with per-column minima in bold."""
    cols = [(w, attr) for w in report.winds for attr in ("rms_cm", "mean_cm")]
    stats = {(c, w, a): report.stat(c, w, a) for c in report.controllers for w, a in cols}
    best = {}
    for w, a in cols:
        vals = [stats[(c, w, a)][0] for c in report.controllers]
        finite = [v for v in vals if np.isfinite(v)]
        best[(w, a)] = min(finite) if finite else None

    def fmt(c, w, a):
        m, s = stats[(c, w, a)]
        if not np.isfinite(m):
            return "failed"
        txt = f"{m:.2f}+-{s:.2f}"
        return f"**{txt}**" if best[(w, a)] == m else txt

    head1 = ["wind [m/s]"] + [w for w in report.winds for _ in (0, 1)]
    head2 = ["method"] + ["RMS" if a == "rms_cm" else "Mean" for _, a in cols]
    body = [[c] + [fmt(c, w, a) for w, a in cols] for c in report.controllers]
    force = [["force RMSE [N]"] + [""] * len(cols)]
    for c in report.controllers:
        row = [c]
        for w, a in cols:
            m, _ = report.stat(c, w, "force_rmse")
            row.append(f"{m:.3f}" if a == "mean_cm" and np.isfinite(m) else "")
        force.append(row)
    table = [head1, head2] + body
    widths = [max(len(r[i]) for r in table + force) for i in range(len(head1))]

    def line(r):
        return "  ".join(x.ljust(wd) for x, wd in zip(r, widths)).rstrip()

    out = ["Tracking error [cm] over the scored laps, mean +- std across seeds"]
    out += [line(r) for r in table]
    out += ["", *[line(r) for r in force]]
    errors = [c for c in report.cells if not c.ok]
    if errors:
        out += ["", "Failed cells:"]
        out += [f"  {c.controller} / {c.wind} / seed {c.seed}: {c.error}" for c in errors]
    out += ["", FOOTER]
    return "\n".join(out) + "\n"


def _is_constant(wind_label):
    try:
        float(wind_label)
        return True
    except ValueError:
        return False


def trend_checks(report: TrackingReport, min_ordered=4):
    """Evaluate the reproduced orderings; returns a list of (name, passed, detail)."""
    checks = []
    need = {"learned", "constant", "nonlinear"}
    if need <= set(report.controllers):
        ordered = []
        for w in report.winds:
            nf = report.stat("learned", w)[0]
            cst = report.stat("constant", w)[0]
            nl = report.stat("nonlinear", w)[0]
            ordered.append(bool(nf <= cst <= nl))
        n_ok = sum(ordered)
        target = min(min_ordered, len(report.winds))
        checks.append(("ordering learned <= constant <= nonlinear", n_ok >= target,
                       f"{n_ok}/{len(report.winds)} winds ordered (need {target})"))
    if "nonlinear" in report.controllers:
        const = sorted((float(w), w) for w in report.winds if _is_constant(w) and float(w) > 0)
        means = [report.stat("nonlinear", w)[0] for _, w in const]
        mono = len(means) >= 2 and all(b > a for a, b in zip(means, means[1:]))
        checks.append(("nonlinear error rises with wind speed", mono,
                       " -> ".join(f"{w}: {m:.2f}" for (_, w), m in zip(const, means))))
    sinus = [w for w in report.winds if not _is_constant(w)]
    if sinus and {"learned", "constant"} <= set(report.controllers):
        w = sinus[0]
        nf = report.stat("learned", w, "force_rmse")[0]
        cst = report.stat("constant", w, "force_rmse")[0]
        checks.append(("learned force RMSE <= constant under sinusoidal wind", bool(nf <= cst),
                       f"{nf:.3f} N vs {cst:.3f} N"))
    return checks
