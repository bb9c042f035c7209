"""Command line interface: ``rsma-leo {solve,sweep,plot,trace}``.

Exit codes: 0 success, 1 configuration error, 2 solver structural error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from ..model import ChannelSet, SystemConfig
from ..solver import SCHEMES, SolverOptions
from .export import export_results, export_trace, load_json, to_json_text
from .plot import PlotError, render_plot
from .scenario import ScenarioParams, generate_scenario
from .sweep import SweepSpec, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3


class ConfigError(Exception):
    pass


class SolverFailure(Exception):
    pass


_SOLVER_ERRORS = (ValueError, ArithmeticError, np.linalg.LinAlgError)
_CONFIG_ERRORS = (ValueError, TypeError, KeyError)


def _read_json(path):
    try:
        return load_json(path)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _settings_file(path):
    data = _read_json(path) if path else {}
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(data) - {"system", "config", "scenario", "solver", "channels", "seed"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    if "system" in data and "config" in data:
        raise ConfigError("give the system parameters as either 'system' or 'config', not both")
    return data


def load_settings(path):
    """``(SystemConfig, ScenarioParams, SolverOptions)`` from an optional JSON file.

    The file may hold ``system`` (alias ``config``), ``scenario`` and
    ``solver`` sections; all are optional and default to the built-in values.
    """
    data = _settings_file(path)
    try:
        return (SystemConfig.from_dict(data.get("system", data.get("config", {}))),
                ScenarioParams.from_dict(data.get("scenario", {})),
                SolverOptions.from_dict(data.get("solver", {})))
    except _CONFIG_ERRORS as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def _out_path(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _report_summary(report):
    return {
        "scheme": report.scheme,
        "sum_rate_bps": report.sum_rate,
        "feasible": report.feasible,
        "converged": report.converged,
        "stop_reason": report.stop_reason,
        "iterations": report.iterations,
        "outer_iterations": len(report.inner_iterations),
        "wall_time_s": report.wall_time,
        "per_user_rate_bps": report.rates.per_user_total.tolist(),
        "power_w": report.alloc.p.tolist(),
        "common_split": report.alloc.eta0.tolist(),
        "private_split": report.alloc.eta.tolist(),
        "common_share_bps": report.alloc.c.tolist(),
        "assignment": report.assignment.x.tolist(),
    }


def _solve_one(scheme, config, channels, options, seed):
    try:
        if scheme == "rand_x":
            return SCHEMES[scheme](config, channels, options, seed=seed)
        return SCHEMES[scheme](config, channels, options)
    except _SOLVER_ERRORS as exc:
        raise SolverFailure(f"{scheme}: {type(exc).__name__}: {exc}") from exc


def _scenario(args):
    """Config, channels and options; explicit ``channels`` in the file skip generation."""
    config, scenario, options = load_settings(args.config)
    data = _settings_file(args.config)
    try:
        if args.seed is None:
            args.seed = int(data.get("seed", 0))
        if "channels" in data:
            channels = ChannelSet.from_dict(data["channels"])
            if channels.shape != config.shape:
                raise ValueError(f"channel shape {channels.shape} does not match "
                                 f"(M, U, K) = {config.shape}")
        else:
            channels = generate_scenario(config, args.seed, scenario)
    except _CONFIG_ERRORS as exc:
        raise ConfigError(f"cannot build scenario: {exc}") from exc
    return config, channels, options


def cmd_solve(args):
    config, channels, options = _scenario(args)
    schemes = list(SCHEMES) if args.scheme == "all" else [args.scheme]
    options.record_trace = False
    reports = [_solve_one(s, config, channels, options, args.seed) for s in schemes]
    for r in reports:
        print(f"{r.scheme:7s} sum rate {r.sum_rate / 1e6:10.3f} Mbit/s  feasible={r.feasible}  "
              f"stop={r.stop_reason}  iterations={r.iterations}")
    payload = {"kind": "solve", "seed": args.seed, "system": config.to_dict(),
               "channels_fingerprint": channels.fingerprint(),
               "reports": [_report_summary(r) for r in reports]}
    path = _out_path(args, "solve.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_json_text(payload))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_sweep(args):
    data = _read_json(args.spec)
    if not isinstance(data, dict):
        raise ConfigError("sweep spec must hold a JSON object")
    if args.config:
        defaults = _settings_file(args.config)
        if "config" in defaults:
            defaults["system"] = defaults.pop("config")
        for section in ("system", "scenario", "solver"):
            if section in defaults and section not in data:
                data[section] = defaults[section]
    if args.seed is not None:
        data["seed_base"] = args.seed
    try:
        spec = SweepSpec.from_dict(data)
    except _CONFIG_ERRORS as exc:
        raise ConfigError(f"invalid sweep spec: {exc}") from exc
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    try:
        result = run_sweep(spec, threads=args.threads)
    except _SOLVER_ERRORS as exc:
        raise SolverFailure(str(exc)) from exc
    stem = args.name
    export_results(result, "csv", _out_path(args, f"{stem}.csv"))
    export_results(result, "json", _out_path(args, f"{stem}.json"))
    render_plot(result, _out_path(args, f"{stem}.svg"))
    for row in result.summary:
        print(f"{row.scheme:7s} {spec.variable}={row.sweep_value!s:>8}  mean {row.mean_mbps:10.3f} "
              f"Mbit/s  +- {row.stderr_mbps:.3f}  feasible {row.feasible}/{row.trials}")
    print(f"wrote {stem}.csv, {stem}.json, {stem}.svg to {args.out}")
    return EXIT_OK


def cmd_plot(args):
    data = _read_json(args.input)
    output = args.output or _out_path(
        args, os.path.splitext(os.path.basename(args.input))[0] + ".svg")
    try:
        render_plot(data, output, title=args.title)
    except (PlotError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot plot {args.input}: {exc}") from exc
    print(f"wrote {output}")
    return EXIT_OK


def cmd_trace(args):
    config, channels, options = _scenario(args)
    options.record_trace = True
    report = _solve_one(args.scheme, config, channels, options, args.seed)
    export_trace(report, _out_path(args, "trace.json"), "json", seed=args.seed)
    export_trace(report, _out_path(args, "trace.csv"), "csv")
    render_plot(report.trace, _out_path(args, "trace.svg"),
                title=f"Multiplier norms, {args.scheme}, seed {args.seed}")
    print(f"{report.scheme}: {len(report.trace['lambda1'])} inner iterations over "
          f"{len(report.inner_iterations)} outer iterations; wrote trace.json, trace.csv, "
          f"trace.svg to {args.out}")
    return EXIT_OK


def _global_flags(suppress):
    """Global flags; subcommands get their own copy that only overrides when given."""
    flags = argparse.ArgumentParser(add_help=False)

    def default(value):
        return argparse.SUPPRESS if suppress else value

    flags.add_argument("--config", default=default(None),
                       help="JSON with system/scenario/solver sections (optionally channels, seed)")
    flags.add_argument("--seed", type=int, default=default(None), help="scenario seed (sweep: seed base)")
    flags.add_argument("--out", default=default("."), help="output directory")
    flags.add_argument("--threads", type=int, default=default(1), help="worker threads for sweeps")
    flags.add_argument("-v", "--verbose", action="store_true", default=default(False))
    return flags


def build_parser():
    parser = argparse.ArgumentParser(prog="rsma-leo", parents=[_global_flags(False)],
                                     description="RSMA power and assignment optimisation for a LEO downlink.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _global_flags(True)

    p = sub.add_parser("solve", parents=[common], help="solve one scenario")
    p.add_argument("--scheme", choices=[*SCHEMES, "all"], default="all")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", parents=[common], help="run a Monte Carlo sweep from a spec file")
    p.add_argument("spec", help="sweep spec JSON")
    p.add_argument("--name", default="sweep", help="output file stem")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", parents=[common], help="render a sweep or trace JSON as SVG")
    p.add_argument("input")
    p.add_argument("-o", "--output", help="SVG path (default: <out>/<input stem>.svg)")
    p.add_argument("--title", default="")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("trace", parents=[common], help="export the multiplier trace of one solve")
    p.add_argument("--scheme", choices=list(SCHEMES), default="opt")
    p.set_defaults(func=cmd_trace)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
