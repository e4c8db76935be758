"""Sweep harness: run experiments over a swept axis, emit CSV rows and
summaries, and grid-search tuning knobs."""

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .config import (
    DEFAULT_VSB_BANDWIDTH,
    DEFAULT_VSB_OFFSET_RATIO,
    DEFAULT_VSB_ORDER,
    ExperimentConfig,
)
from .errors import ConfigError, SimulationError
from .fiber import OpticalFilterSpec
from .sigcore import derived_seed, wilson_upper_bound
from .wdm import run_link

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "sweep_axis", "sweep_value", "channel", "seed", "ber", "bits", "errors",
    "pass", "achieved_rate", "wilson_upper_95", "error",
)


@dataclass(frozen=True)
class SweepRow:
    sweep_axis: str
    sweep_value: float
    channel: int
    seed: int
    ber: float | None
    bits: int | None
    errors: int | None
    passed: bool | None
    achieved_rate_gbps: float | None
    wilson_upper_95: float | None
    error: str | None = None


def apply_knob(link, axis, value):
    """Return a copy of the link config with one swept/tuned knob applied."""
    if axis == "none":
        return link
    if axis == "residual_dispersion":
        return replace(link, tdcm_ps_nm=link.fiber.total_dispersion_ps_nm - value)
    if axis == "tdcm":
        return replace(link, tdcm_ps_nm=value)
    if axis == "fiber_length":
        return replace(link, fiber=replace(link.fiber, length_km=value))
    if axis == "osnr":
        return replace(link, target_osnr_db=value)
    if axis == "channel_count":
        return replace(link, plan=replace(link.plan, channel_count=int(value)))
    if axis == "vsb_offset":
        vsb = link.vsb_filter or OpticalFilterSpec(
            bandwidth_3db_hz=DEFAULT_VSB_BANDWIDTH,
            order=DEFAULT_VSB_ORDER,
            center_offset_hz=DEFAULT_VSB_OFFSET_RATIO * DEFAULT_VSB_BANDWIDTH,
        )
        return replace(link, vsb_filter=replace(vsb, center_offset_hz=value))
    if axis == "level_adjust":
        adj = (0.0, -value, value, 0.0)
        return replace(link, pam4_tx=replace(link.pam4_tx, level_adjustment=adj))
    raise ConfigError(f"unknown sweep axis {axis!r}", field="sweep.axis")


def _run_point(args):
    axis, value, link, replicate = args
    seeded = replace(apply_knob(link, axis, value), seed=derived_seed(link.seed, 9000 + replicate))
    rows = []
    try:
        results = run_link(seeded)
    except SimulationError as exc:
        return [
            SweepRow(axis, value, -1, replicate, None, None, None, None, None, None,
                     error=str(exc))
        ]
    for res in results:
        if res.report is None:
            rows.append(
                SweepRow(axis, value, res.channel, replicate, None, None, None,
                         None, res.achieved_rate_gbps, None, error=res.error)
            )
        else:
            rep = res.report
            rows.append(
                SweepRow(
                    axis, value, res.channel, replicate, rep.ber, rep.bits_compared,
                    rep.bit_errors, rep.passed, res.achieved_rate_gbps,
                    wilson_upper_bound(rep.bit_errors, rep.bits_compared),
                )
            )
    return rows


def default_thread_count():
    env = os.environ.get("DWDMSIM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring invalid DWDMSIM_THREADS=%r", env)
    return 1


def run_experiment(experiment, threads=None):
    """Execute run_link per sweep point per replicate seed; returns the sorted
    row list and writes the CSV when output_path is set."""
    threads = threads or default_thread_count()
    values = experiment.sweep_values if experiment.sweep_axis != "none" else (0.0,)
    jobs = [
        (experiment.sweep_axis, value, experiment.link, replicate)
        for value in values
        for replicate in range(experiment.replicate_seeds)
    ]
    rows = []
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for chunk in pool.map(_run_point, jobs):
                rows.extend(chunk)
    else:
        for job in jobs:
            rows.extend(_run_point(job))
    rows.sort(key=lambda r: (r.sweep_value, r.channel, r.seed))
    if experiment.output_path:
        write_csv(experiment.output_path, rows)
    return rows


def write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow([
                r.sweep_axis,
                f"{r.sweep_value:.10g}",
                r.channel,
                r.seed,
                "" if r.ber is None else f"{r.ber:.10g}",
                "" if r.bits is None else r.bits,
                "" if r.errors is None else r.errors,
                "" if r.passed is None else int(r.passed),
                "" if r.achieved_rate_gbps is None else f"{r.achieved_rate_gbps:.10g}",
                "" if r.wilson_upper_95 is None else f"{r.wilson_upper_95:.10g}",
                r.error or "",
            ])


def summarize(rows):
    """Human-readable per-sweep-value summary (median BER over channels/seeds)."""
    lines = [f"{'sweep_value':>14} {'rows':>5} {'median_ber':>12} {'pass':>5} {'rate_gbps':>10}"]
    for value in sorted({r.sweep_value for r in rows}):
        group = [r for r in rows if r.sweep_value == value]
        bers = [r.ber for r in group if r.ber is not None]
        rates = [r.achieved_rate_gbps for r in group if r.achieved_rate_gbps is not None]
        n_pass = sum(1 for r in group if r.passed)
        med = f"{np.median(bers):.3e}" if bers else "n/a"
        rate = f"{np.median(rates):.2f}" if rates else ""
        lines.append(f"{value:>14.6g} {len(group):>5} {med:>12} {n_pass:>5} {rate:>10}")
    return "\n".join(lines)


def median_ber(rows, value):
    bers = [r.ber for r in rows if r.sweep_value == value and r.ber is not None]
    return float(np.median(bers)) if bers else float("inf")


def optimize_knob(experiment, knob, grid, threads=None):
    """Grid-search one tuning knob; returns (best value, all rows).

    Best value minimizes the median BER over channels and replicate seeds;
    ties break toward the smallest absolute knob value.
    """
    if not grid:
        raise ConfigError("optimization grid must be nonempty", field="grid")
    swept = ExperimentConfig(
        link=experiment.link,
        sweep_axis=knob,
        sweep_values=tuple(sorted(grid)),
        output_path=experiment.output_path,
        replicate_seeds=experiment.replicate_seeds,
    )
    rows = run_experiment(swept, threads=threads)
    best = min(sorted(grid), key=lambda v: (median_ber(rows, v), abs(v)))
    return best, rows


def all_points_failed(rows):
    return bool(rows) and all(r.error for r in rows)
