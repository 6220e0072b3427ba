"""Command-line front end: scenario generation, solver dispatch, and
trace/summary/figure emission.

Subcommands: ``power``, ``beamform``, ``ee``, ``textbook``.  Every run
writes a trace CSV, a summary text file, and a rendered convergence
figure into the output directory.  Exit codes: 0 when all runs
converged, 2 when a run did not converge (the fixed-point baseline may
legitimately fail to), 1 on configuration or usage errors.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import beamforming, energy, power, reporting, textbook
from .core import IterationTrace, OuterFunction
from .exceptions import ConfigError
from .numerics import make_rng
from .reporting import RunSummary, nats_to_display, render_trace_figure, \
    trace_rows, write_summary, write_trace_csv
from .scenarios import ScenarioConfig, ScenarioKind, generate_ee_scenarios, \
    generate_mimo_hex, generate_siso_hex, parse_config_file

_POWER_ALGOS = ("direct", "closed", "fixed-point", "maxmin", "utility")
_BEAMFORM_ALGOS = ("direct", "closed")
_EE_ALGOS = ("direct", "dinkelbach", "nested")
_ALL_ALGOS = ("direct", "closed", "fixed-point", "dinkelbach", "nested",
              "maxmin", "utility")

#: offset added to the rate inside the proportional-fairness utility so
#: a silent link keeps a finite utility
_PF_RATE_FLOOR = 1e-6


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fpopt",
        description="ratio-maximization experiments: power control, "
                    "beamforming, energy efficiency, textbook fixtures",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("power", "single-antenna weighted sum-rate power control"),
        ("beamform", "MIMO weighted sum-rate beamforming"),
        ("ee", "energy-efficiency maximization"),
        ("textbook", "deterministic convergence fixtures"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", type=Path, default=None,
                       help="flat key=value configuration file")
        p.add_argument("--seed", type=int, default=None,
                       help="random seed (unsigned 64-bit)")
        p.add_argument("--algo", choices=_ALL_ALGOS, default=None,
                       help="algorithm to run")
        p.add_argument("--tol", type=float, default=None,
                       help="convergence tolerance")
        p.add_argument("--max-iters", type=int, default=None,
                       help="outer iteration cap")
        p.add_argument("--out", type=Path, default=Path("runs"),
                       help="output directory (default: runs)")
        p.add_argument("--seeds", type=int, default=1,
                       help="number of consecutive seeds to run")
    return parser


def _default_config(command: str, algo: str | None) -> ScenarioConfig:
    if command == "power":
        return ScenarioConfig(kind=ScenarioKind.SISO_HEX)
    if command == "beamform":
        return ScenarioConfig(kind=ScenarioKind.MIMO_HEX, users_per_cell=2,
                              algorithm="closed")
    if command == "ee":
        kind = ScenarioKind.EE_BROADCAST if algo == "nested" else ScenarioKind.EE_SINGLE
        return ScenarioConfig(kind=kind, bs_antennas=3, ue_antennas=2,
                              bandwidth_hz=1e6, p_max_dbm=21.0, p_on_dbm=5.0,
                              algorithm="dinkelbach" if algo is None else algo)
    return ScenarioConfig(kind=ScenarioKind.TEXTBOOK, algorithm="direct")


def _load_config(args) -> ScenarioConfig:
    if args.config is not None:
        config = parse_config_file(args.config)
    else:
        config = _default_config(args.command, args.algo)
    if args.seed is not None:
        config.seed = args.seed
    if args.algo is not None:
        config.algorithm = args.algo
    if args.tol is not None:
        config.tol = args.tol
    if args.max_iters is not None:
        config.max_iters = args.max_iters
    return config


def _check_algo(command: str, algo: str) -> None:
    allowed = {"power": _POWER_ALGOS, "beamform": _BEAMFORM_ALGOS,
               "ee": _EE_ALGOS, "textbook": ("direct", "dinkelbach")}[command]
    if algo not in allowed:
        raise ConfigError(
            f"algorithm {algo!r} is not available for {command!r} "
            f"(choose from {', '.join(allowed)})")


def _emit(out_dir: Path, name: str, config: ScenarioConfig, trace,
          display_scale: float, unit: str, converged: bool,
          extra: dict | None = None) -> RunSummary:
    out_dir.mkdir(parents=True, exist_ok=True)
    extra_names, rows = trace_rows(trace, display_scale, extra)
    trace_path = out_dir / f"{name}.trace.csv"
    write_trace_csv(trace_path, rows, extra_names)
    summary = RunSummary(
        name=name,
        algorithm=config.algorithm,
        seed=config.seed,
        final_objective=trace.records[-1].objective,
        final_objective_display=trace.records[-1].objective * display_scale,
        display_unit=unit,
        iterations=trace.records[-1].iteration,
        wall_time_s=trace.records[-1].elapsed,
        converged=converged,
        residual=trace.records[-1].residual,
        trace_path=trace_path.name,
    )
    write_summary(out_dir / f"{name}.summary.txt", summary)
    render_trace_figure(out_dir / f"{name}.png", rows,
                        title=name, objective_label=unit)
    return summary


def _rows_to_trace(rows) -> IterationTrace:
    trace = IterationTrace()
    for row in rows:
        trace.append(row.iteration, row.objective, abs(row.residual), 0.0)
    return trace


def _run_power(config: ScenarioConfig, out_dir: Path) -> RunSummary:
    rng = make_rng(config.seed)
    net = generate_siso_hex(config, rng)
    algo = config.algorithm
    mbps = 1.0 / math.log(2.0) * config.bandwidth_hz / 1e6
    name = f"power_{algo}_seed{config.seed}"
    if algo == "fixed-point":
        p, trace, converged = power.pc_fixed_point_solve(
            net, max_iters=config.max_iters)
        return _emit(out_dir, name, config, trace, mbps, "Mbit/s", converged)
    if algo == "direct":
        if net.n_bands > 1:
            p, trace = power.pc_multiband_solve(net, tol=config.tol,
                                                max_iters=config.max_iters)
        else:
            p, aux, trace = power.pc_direct_solve(net, tol=config.tol,
                                                  max_iters=config.max_iters)
    elif algo == "closed":
        p, aux, trace = power.pc_closed_form_solve(net, tol=config.tol,
                                                   max_iters=config.max_iters)
    elif algo == "maxmin":
        p, trace = power.pc_maxmin_solve(net, tol=config.tol,
                                         max_iters=config.max_iters)
        return _emit(out_dir, name, config, trace, 1.0, "min-SINR",
                     trace.records[-1].iteration < config.max_iters)
    elif algo == "utility":
        # extended-value log keeps trial points outside the domain
        # rejectable instead of raising
        pf = OuterFunction(
            value=lambda r: math.log(r + _PF_RATE_FLOOR)
            if r + _PF_RATE_FLOOR > 0 else -math.inf,
            derivative=lambda r: 1.0 / max(r + _PF_RATE_FLOOR, 1e-300))
        p, trace = power.pc_utility_solve(net, [pf] * net.n_links,
                                          tol=config.tol,
                                          max_iters=config.max_iters)
        return _emit(out_dir, name, config, trace, 1.0, "sum log-rate",
                     trace.records[-1].iteration < config.max_iters)
    else:
        raise ConfigError(f"unknown power algorithm {algo!r}")
    converged = trace.records[-1].iteration < config.max_iters
    return _emit(out_dir, name, config, trace, mbps, "Mbit/s", converged)


def _run_beamform(config: ScenarioConfig, out_dir: Path) -> RunSummary:
    rng = make_rng(config.seed)
    net = generate_mimo_hex(config, rng)
    algo = config.algorithm
    mbps = 1.0 / math.log(2.0) * config.bandwidth_hz / 1e6
    name = f"beamform_{algo}_seed{config.seed}"
    solver = {"direct": beamforming.bf_direct_solve,
              "closed": beamforming.bf_closed_form_solve}[algo]
    V, aux, trace = solver(net, tol=config.tol, max_iters=config.max_iters)
    converged = trace.records[-1].iteration < config.max_iters
    return _emit(out_dir, name, config, trace, mbps, "Mbit/s", converged)


def _run_ee(config: ScenarioConfig, out_dir: Path) -> RunSummary:
    rng = make_rng(config.seed)
    scenario = generate_ee_scenarios(config, rng)
    algo = config.algorithm
    scale = nats_to_display(1.0, config.bandwidth_hz)  # Mbit per joule
    name = f"ee_{algo}_seed{config.seed}"
    if algo == "nested":
        if config.kind is not ScenarioKind.EE_BROADCAST:
            raise ConfigError("the nested solver needs an ee-broadcast scenario")
        V, aux, trace = energy.ee_nested_solve(scenario, tol=config.tol,
                                               max_iters=config.max_iters)
    else:
        if config.kind is not ScenarioKind.EE_SINGLE:
            raise ConfigError(
                f"{algo!r} applies to the ee-single scenario only: with "
                "multiple receivers the classic parametric surrogate is not "
                "concave in the beamformers, so its inner step cannot be "
                "solved reliably; use the nested solver")
        solver = {"direct": energy.ee_single_link_qt,
                  "dinkelbach": energy.ee_single_link_dinkelbach}[algo]
        p, trace = solver(scenario, tol=config.tol, max_iters=config.max_iters)
    converged = trace.records[-1].iteration < config.max_iters
    return _emit(out_dir, name, config, trace, scale, "Mbit/J", converged)


def _run_textbook(config: ScenarioConfig, out_dir: Path,
                  algo: str | None) -> list[RunSummary]:
    summaries = []
    fixtures = []
    if algo in (None, "direct"):
        fixtures.append(("textbook_qt_rate", textbook.qt_rate_fixture()))
    if algo in (None, "dinkelbach"):
        fixtures.append(("textbook_dinkelbach", textbook.dinkelbach_fixture()))
    if algo is None:
        fixtures.append(("textbook_ratio2d", textbook.fig_ratio_fixture()))
    for name, rows in fixtures:
        trace = _rows_to_trace(rows)
        extra = {"y": [r.y for r in rows],
                 "error_ratio": [r.error_ratio for r in rows]}
        cfg = ScenarioConfig(kind=ScenarioKind.TEXTBOOK,
                             algorithm=algo or "all")
        summaries.append(_emit(out_dir, name, cfg, trace, 1.0, "ratio",
                               True, extra=extra))
    return summaries


def run_experiment(config: ScenarioConfig, out_dir: Path) -> list[RunSummary]:
    """Generate the configured scenario, run its algorithm, and write
    the trace, summary, and figure files."""
    if config.kind is ScenarioKind.TEXTBOOK:
        return _run_textbook(config, out_dir, None)
    runner = {ScenarioKind.SISO_HEX: _run_power,
              ScenarioKind.MIMO_HEX: _run_beamform,
              ScenarioKind.EE_SINGLE: _run_ee,
              ScenarioKind.EE_BROADCAST: _run_ee}[config.kind]
    return [runner(config, out_dir)]


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if not exc.code else 1
    try:
        if args.command == "textbook":
            if args.algo is not None:
                _check_algo("textbook", args.algo)
            config = _load_config(args)
            summaries = _run_textbook(config, args.out, args.algo)
        else:
            config = _load_config(args)
            _check_algo(args.command, config.algorithm)
            summaries = []
            base_seed = config.seed
            for k in range(max(args.seeds, 1)):
                config.seed = base_seed + k
                summaries.extend(run_experiment(config, args.out))
        for s in summaries:
            status = "converged" if s.converged else "NOT converged"
            print(f"{s.name}: objective={s.final_objective:.9g} "
                  f"({s.final_objective_display:.6g} {s.display_unit}), "
                  f"{s.iterations} iterations, {status}")
        return 0 if all(s.converged for s in summaries) else 2
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
