"""Command-line entry point.

    lobefit sld    --config run.cfg --out curve.csv [--format svg] [--records ref.csv]
    lobefit synth  --config run.cfg --out ref.csv
    lobefit fit    --config run.cfg --records ref.csv --out fit.txt
    lobefit sweep  --config run.cfg --out sweep.csv
    lobefit mc     --config run.cfg --out mc.txt --paths 1000 --seed 7

Command-line flags override the matching configuration keys.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import io
from .errors import ConfigError, LobefitError
from .inverse import FitOptions, fit, random_guesses
from .model import BoundarySamples, axisymmetric_ties, flatten
from .sensitivity import mc_sensitivity, perturbation_grid, sweep
from .zoa import build_sld, sample_at_speeds

COMMANDS = ("sld", "synth", "fit", "sweep", "mc")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lobefit", description="Milling stability lobes and inverse identification of tool-tip modes."
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="run configuration (key = value lines)")
    parser.add_argument("--records", help="reference records table (spindle_speed_rpm, depth_mm[, weight])")
    parser.add_argument("--out", help="output file")
    parser.add_argument("--seed", type=int, help="seed for every random draw")
    parser.add_argument("--paths", type=int, help="Monte Carlo path count")
    parser.add_argument("--neighborhood", type=float, help="Monte Carlo neighbourhood half-width (relative)")
    parser.add_argument("--grid", type=int, help="number of spindle speeds sampled over the speed range")
    parser.add_argument("--max-iters", type=int, dest="max_iterations", help="fit iteration budget")
    parser.add_argument("--alpha", type=float, dest="pace", help="Newton step multiplier in (0, 1]")
    parser.add_argument("--axisymmetric", action="store_true", default=None, help="tie x and y modes together")
    parser.add_argument("--format", choices=("table", "svg"), help="sld output format")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _merge(cfg: io.RunConfig, args) -> io.RunConfig:
    overrides = {
        "records": args.records,
        "out": args.out,
        "seed": args.seed,
        "paths": args.paths,
        "neighborhood": args.neighborhood,
        "speed_points": args.grid,
        "max_iterations": args.max_iterations,
        "pace": args.pace,
        "axisymmetric": args.axisymmetric,
        "format": args.format,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if cfg.out is None:
        raise ConfigError("no output path: give --out or set 'out' in the configuration")
    if cfg.paths < 1:
        raise ConfigError("--paths must be >= 1")
    if cfg.speed_points < 2:
        raise ConfigError("--grid must be >= 2")
    if not 0 <= cfg.neighborhood < 0.5:
        raise ConfigError("--neighborhood must lie in [0, 0.5)")
    return cfg


def _params(cfg: io.RunConfig):
    dyn = cfg.need_dynamics()
    return flatten(dyn, axisymmetric_ties(dyn) if cfg.axisymmetric else None)


def _sld_options(cfg: io.RunConfig) -> dict:
    return {"grid_points": cfg.grid_points}


def cmd_sld(cfg: io.RunConfig) -> None:
    curve = build_sld(cfg.need_dynamics(), cfg.need_cutting(), cfg.speed_range(), **_sld_options(cfg))
    overlay = io.load_records(cfg.records) if cfg.records else None
    io.export_curve(curve, cfg.out, cfg.format, overlay)


def cmd_synth(cfg: io.RunConfig) -> None:
    curve = build_sld(cfg.need_dynamics(), cfg.need_cutting(), cfg.speed_range(), **_sld_options(cfg))
    io.write_records(sample_at_speeds(curve, cfg.speeds()), cfg.out)


def _fit_options(cfg: io.RunConfig, start) -> FitOptions:
    if cfg.guesses == 1:
        guesses = [start]
    else:
        guesses = random_guesses(start, cfg.guess_spread, cfg.guesses, cfg.seed)
    return FitOptions(
        initial_guesses=guesses,
        pace=cfg.pace,
        fd_step=cfg.fd_step,
        max_iterations=cfg.max_iterations,
        objective_threshold=cfg.objective_threshold,
        stall_window=cfg.stall_window,
        stall_improvement=cfg.stall_improvement,
        jump_ratio=cfg.jump_ratio,
        burn_in=min(cfg.burn_in, max(cfg.max_iterations - 1, 0)),
        weight_scheme=cfg.weight_scheme,
        critical_weight=cfg.critical_weight,
        seed=cfg.seed,
        sld_options=_sld_options(cfg),
    )


def fit_entries(report, reference: BoundarySamples) -> list[tuple[str, object]]:
    entries = [
        ("converged", report.converged),
        ("reason", report.reason),
        ("iterations", report.iterations),
        ("objective", report.objective),
        ("points", len(reference)),
    ]
    for label, value in zip(report.final.labels(), report.final.values):
        entries.append((f"param.{label}", value))
    counts = {}
    for h in report.history:
        counts[h.event] = counts.get(h.event, 0) + 1
    for event in sorted(counts):
        entries.append((f"events.{event}", counts[event]))
    return entries


def trace_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.stem + "_trace.csv")


def cmd_fit(cfg: io.RunConfig) -> None:
    if not cfg.records:
        raise ConfigError("fit needs reference records: give --records or set 'records'")
    reference = io.load_records(cfg.records)
    report = fit(reference, cfg.need_cutting(), _fit_options(cfg, _params(cfg)))
    io.write_report(cfg.out, "fit", fit_entries(report, reference))
    io.write_table(trace_path(cfg.out), ["iteration", "objective"], report.objective_trace())


def cmd_sweep(cfg: io.RunConfig) -> None:
    grid = perturbation_grid(cfg.sweep_limit, cfg.sweep_step)
    rep = sweep(_params(cfg), cfg.need_cutting(), grid, cfg.speeds(), _sld_options(cfg))
    rows = []
    for j, label in enumerate(rep.labels):
        for e, ratio in enumerate(rep.grid):
            reason = rep.missing.get((j, float(ratio)), "")
            rows.append((label, float(ratio), float(rep.values[j, e]), reason))
    io.write_table(cfg.out, ["parameter", "ratio", "mse_mm2", "missing"], rows)


def cmd_mc(cfg: io.RunConfig) -> None:
    rep = mc_sensitivity(_params(cfg), cfg.need_cutting(), cfg.neighborhood, cfg.paths, cfg.inner_ratio, cfg.seed,
                         cfg.speeds(), _sld_options(cfg))
    entries = [
        ("paths", rep.paths),
        ("neighborhood", rep.neighborhood),
        ("inner_ratio", rep.inner_ratio),
        ("seed", rep.seed),
        ("redraws", rep.redraws),
        ("skipped", len(rep.skipped)),
    ]
    for label, mean, std in zip(rep.labels, rep.mean, rep.std):
        entries.append((f"mean.{label}", float(mean)))
        entries.append((f"std.{label}", float(std)))
    io.write_report(cfg.out, "mc", entries)


HANDLERS = {"sld": cmd_sld, "synth": cmd_synth, "fit": cmd_fit, "sweep": cmd_sweep, "mc": cmd_mc}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = _merge(io.load_config(args.config), args)
        HANDLERS[args.command](cfg)
    except LobefitError as exc:
        print(f"lobefit {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
