"""Command-line entry point.

Subcommands:
  ensemble     run the full shared-initial-condition protocol over a tau grid
  run          execute and report a single run at one tau
  sweep        repeat the ensemble across population sizes
  validate     run the oracle/invariant battery and print PASS/FAIL lines
  show-config  print the effective configuration after all overrides

Configuration precedence: defaults < --config file < TEMPORAL_BALANCE_*
environment variables < command-line flags.

Exit codes: 0 success, 1 validation-battery failure, 2 usage error,
3 configuration error, 4 execution (numerical) error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional

from . import __version__
from .config import ConfigError, ConfigFile, apply_env_overrides, \
    parse_config, serialize_config
from .dynamics import IntegrationError
from .experiments import (
    EnsembleError,
    generate_initial_state,
    run_ensemble,
    scheduler_rng,
    size_sweep,
)
from .output import emit_results, emit_sweep, fmt_float
from .schedulers import Scheduler, run_single
from .validation import run_battery

__all__ = ["cli_main", "main"]

_EXIT_OK = 0
_EXIT_CHECK_FAILED = 1
_EXIT_USAGE = 2
_EXIT_CONFIG = 3
_EXIT_EXECUTION = 4


def _add_override_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="TOML config file")
    parser.add_argument("--seed", type=int, metavar="INT",
                        help="master seed (overrides master_seed)")
    parser.add_argument("--threads", type=int, metavar="INT",
                        help="worker processes")
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument("--n", type=int, help="population size")
    parser.add_argument("--mu", type=float, help="initial weight mean")
    parser.add_argument("--sigma", type=float, help="initial weight std")
    parser.add_argument("--r-bound", type=float, help="saturation bound R")
    parser.add_argument("--epsilon", type=float, help="sign threshold")
    parser.add_argument("--tau-grid", metavar="LIST",
                        help="comma-separated activation durations")
    parser.add_argument("--variant",
                        choices=["no_self_loops", "self_loops"])
    parser.add_argument("--scheduler",
                        choices=["with_replacement", "without_replacement"])
    parser.add_argument("--runs", type=int, help="ensemble size")
    parser.add_argument("--t-max", type=float, help="run time cap")
    parser.add_argument("--sample-interval", type=float,
                        help="timecourse sampling interval")
    parser.add_argument("--emit-raw", action="store_true", default=None,
                        help="also write per-run records (runs.jsonl)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="temporal-balance",
        description="Structural-balance dynamics on temporal complete graphs")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_ens = sub.add_parser("ensemble", help="full protocol over the tau grid")
    _add_override_flags(p_ens)

    p_run = sub.add_parser("run", help="single run at one tau")
    _add_override_flags(p_run)
    p_run.add_argument("--tau", type=float,
                       help="activation duration (default: first of tau_grid)")
    p_run.add_argument("--run-index", type=int, default=0,
                       help="which seeded initial condition to use")

    p_sweep = sub.add_parser("sweep", help="ensemble across population sizes")
    _add_override_flags(p_sweep)
    p_sweep.add_argument("--n-grid", metavar="LIST", default="50,100,200,400",
                         help="comma-separated population sizes")

    p_val = sub.add_parser("validate", help="run the oracle battery")
    p_val.add_argument("--quick", action="store_true",
                       help="reduced case counts")

    p_show = sub.add_parser("show-config", help="print effective configuration")
    _add_override_flags(p_show)
    return parser


def _parse_float_list(raw: str, flag: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in raw.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"{flag}: cannot parse {raw!r}") from exc
    if not values:
        raise ConfigError(f"{flag}: empty list")
    return values


def _effective_config(args: argparse.Namespace) -> ConfigFile:
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        cfg = parse_config(text)
    else:
        cfg = ConfigFile()
    cfg = apply_env_overrides(cfg, os.environ)

    overrides = {}
    mapping = [
        ("n", "n"), ("mu", "mu"), ("sigma", "sigma"), ("r_bound", "r_bound"),
        ("epsilon", "epsilon"), ("variant", "variant"),
        ("scheduler", "scheduler"), ("runs", "runs"), ("t_max", "t_max"),
        ("sample_interval", "sample_interval"), ("seed", "master_seed"),
        ("threads", "threads"), ("out", "out_dir"), ("emit_raw", "emit_raw"),
    ]
    for attr, key in mapping:
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "tau_grid", None) is not None:
        overrides["tau_grid"] = _parse_float_list(args.tau_grid, "--tau-grid")
    if overrides:
        cfg = replace(cfg, **overrides)
    # re-validate after flag overrides
    return parse_config(serialize_config(cfg))


def _cmd_ensemble(args: argparse.Namespace) -> int:
    cfg = _effective_config(args)
    started = time.time()
    stats = run_ensemble(cfg.ensemble_config(), threads=cfg.threads)
    paths = emit_results(stats, cfg)
    elapsed = time.time() - started
    print(f"ensemble: n={cfg.n} mu={cfg.mu:g} runs={cfg.runs} "
          f"taus={len(cfg.tau_grid)} discarded={len(stats.discarded_indices)} "
          f"elapsed={elapsed:.1f}s")
    for ts in stats.per_tau:
        print(f"  tau={ts.tau:g}: finished {ts.finished_count}/{cfg.runs}, "
              f"mean_T={ts.mean_t:.6g}, updates_per_link="
              f"{ts.updates_per_link:.6g}")
    print("wrote " + ", ".join(str(p) for p in paths))
    return _EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _effective_config(args)
    tau = args.tau if args.tau is not None else cfg.tau_grid[0]
    if tau <= 0:
        raise ConfigError(f"--tau must be positive, got {tau}")
    ens = cfg.ensemble_config()
    initial = generate_initial_state(ens, args.run_index)
    rng = scheduler_rng(ens.master_seed, args.run_index,
                        list(cfg.tau_grid).index(tau)
                        if tau in cfg.tau_grid else 0)
    started = time.time()
    outcome = run_single(initial, ens.model_spec(), Scheduler(ens.scheduler, tau),
                         rng, epsilon=ens.epsilon, t_max=ens.t_max,
                         sample_interval=ens.sample_interval)
    elapsed = time.time() - started
    status = f"T={outcome.t_balance:g}" if outcome.finished else "unfinished"
    print(f"run: n={cfg.n} mu={cfg.mu:g} tau={tau:g} "
          f"scheduler={cfg.scheduler} variant={cfg.variant}")
    print(f"  {status} after {outcome.event_count} events "
          f"({elapsed:.1f}s wall)")

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"single_run_{tau:g}.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "unbalanced_count"])
        for idx, count in enumerate(outcome.timecourse):
            writer.writerow([fmt_float(idx * outcome.sample_interval),
                             str(int(count))])
    print(f"wrote {path}")
    return _EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _effective_config(args)
    n_grid = tuple(int(v) for v in _parse_float_list(args.n_grid, "--n-grid"))
    rows = size_sweep(cfg.ensemble_config(), n_grid, threads=cfg.threads)
    path = emit_sweep(rows, Path(cfg.out_dir))
    print(f"sweep over n={list(n_grid)}: wrote {path}")
    return _EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    results = run_battery(quick=args.quick)
    failed = 0
    for res in results:
        tag = "PASS" if res.passed else "FAIL"
        print(f"[{tag}] {res.name}: {res.detail}")
        failed += 0 if res.passed else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return _EXIT_OK if failed == 0 else _EXIT_CHECK_FAILED


def _cmd_show_config(args: argparse.Namespace) -> int:
    cfg = _effective_config(args)
    sys.stdout.write(serialize_config(cfg))
    return _EXIT_OK


def cli_main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses exit code 2 for usage errors
        return int(exc.code) if exc.code is not None else _EXIT_USAGE
    try:
        if args.command == "ensemble":
            return _cmd_ensemble(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "show-config":
            return _cmd_show_config(args)
        parser.error(f"unknown command {args.command!r}")
        return _EXIT_USAGE
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except (EnsembleError, IntegrationError) as exc:
        print(f"execution error: {exc}", file=sys.stderr)
        return _EXIT_EXECUTION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return _EXIT_EXECUTION


def main() -> None:
    sys.exit(cli_main())
