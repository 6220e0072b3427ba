"""Trace and summary emission: delimited per-iteration records, a flat
key-value run summary, and a rendered convergence figure next to each
trace.

Float columns are written with repr-round-trip precision so identical
runs produce identical bytes; the elapsed-time column and the wall-time
summary field are the only nondeterministic outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .core import IterationTrace

__all__ = [
    "RunSummary",
    "TRACE_COLUMNS",
    "nats_to_display",
    "trace_rows",
    "write_trace_csv",
    "write_summary",
    "render_trace_figure",
]

TRACE_COLUMNS = ("iter", "objective_nats", "objective_display", "residual",
                 "elapsed_ms")


@dataclass
class RunSummary:
    """Final state of one experiment run."""

    name: str
    algorithm: str
    seed: int
    final_objective: float
    final_objective_display: float
    display_unit: str
    iterations: int
    wall_time_s: float
    converged: bool
    residual: float
    trace_path: str

    def lines(self) -> list[str]:
        return [
            f"run.name = {self.name}",
            f"run.algorithm = {self.algorithm}",
            f"run.seed = {self.seed}",
            f"result.objective_nats = {_fmt(self.final_objective)}",
            f"result.objective_display = {_fmt(self.final_objective_display)}",
            f"result.display_unit = {self.display_unit}",
            f"result.iterations = {self.iterations}",
            f"result.converged = {str(self.converged).lower()}",
            f"result.residual = {_fmt(self.residual)}",
            f"result.trace = {self.trace_path}",
            f"timing.wall_time_s = {_fmt(self.wall_time_s)}",
        ]


def _fmt(x: float) -> str:
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if math.isnan(x):
        return "nan"
    return format(float(x), ".17g")


def nats_to_display(value_nats: float, bandwidth_hz: float) -> float:
    """Convert a rate in nats per channel use to Mbit/s at the given
    bandwidth (or nats/J to Mbit/J for efficiency objectives)."""
    return value_nats / math.log(2.0) * bandwidth_hz / 1e6


def trace_rows(trace: IterationTrace, display_scale: float,
               extra: dict[str, Sequence[float]] | None = None):
    """Rows of (fixed columns + extras) ready for the CSV writer."""
    rows = []
    extra = extra or {}
    for idx, rec in enumerate(trace.records):
        row = [rec.iteration, rec.objective, rec.objective * display_scale,
               rec.residual, rec.elapsed * 1e3]
        for name in extra:
            row.append(extra[name][idx])
        rows.append(row)
    return list(extra.keys()), rows


def write_trace_csv(path: str | Path, rows, extra_names: Sequence[str] = ()) -> None:
    """Write iteration records as CSV with the fixed column set plus
    any fixture-specific extras."""
    header = ",".join(list(TRACE_COLUMNS) + list(extra_names))
    lines = [header]
    for row in rows:
        cells = [str(int(row[0]))] + [_fmt(v) for v in row[1:]]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def write_summary(path: str | Path, summary: RunSummary) -> None:
    Path(path).write_text("\n".join(summary.lines()) + "\n")


def render_trace_figure(path: str | Path, rows, title: str,
                        objective_label: str) -> None:
    """Render the convergence figure for one trace: objective per
    iteration on top, stationarity residual below on a log axis."""
    iters = [row[0] for row in rows]
    objective = [row[2] for row in rows]
    residual = [row[3] for row in rows]
    fig, (ax0, ax1) = plt.subplots(2, 1, sharex=True, figsize=(6.0, 5.0),
                                   height_ratios=[2, 1])
    ax0.plot(iters, objective, marker="o", ms=3, lw=1.2)
    ax0.set_ylabel(objective_label)
    ax0.set_title(title)
    ax0.grid(alpha=0.3)
    finite = [r for r in residual if r > 0 and math.isfinite(r)]
    if finite:
        clipped = [min(max(r, 1e-300), 10.0 * max(finite)) for r in residual]
        ax1.semilogy(iters, clipped, lw=1.0, color="tab:red")
    else:
        ax1.plot(iters, residual, lw=1.0, color="tab:red")
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("residual")
    ax1.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
