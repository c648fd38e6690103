"""Command line entry point.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 input/output error.  Failed expectations are reported but do not change
the exit code.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import __version__, _kernels
from .config import SCENARIOS, ConfigError, load_config, validate
from .runner import StageError, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

_SUMMARIES = {
    "oscillator-stationary": "harmonic ground state: spectrum, ensemble statistics, phase space, balance",
    "oscillator-excited": "first excited level: node handling, negative phase-space density",
    "free-packet": "spreading Gaussian: tracking, variance growth, velocity-equation consistency",
    "coherent-slosh": "displaced coherent state: density tracking over one period",
    "custom": "any user-defined combination",
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nelsonlab", description="Stochastic mechanics and phase-space laboratory")
    p.add_argument("--version", action="version", version=f"nelsonlab {__version__} ({_kernels.BACKEND} kernels)")
    p.add_argument("-v", "--verbose", action="store_true", help="log stage timings to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario config")
    run.add_argument("config", type=Path)
    run.add_argument("--output-dir", type=Path, help="override the config's output_dir")
    run.add_argument("--seed", type=int, help="override ensemble.seed")
    run.add_argument("--threads", type=int, default=1, help="threads for the particle loop (results do not change)")
    run.add_argument("--no-plots", action="store_true", help="skip SVG figures")

    sub.add_parser("list-scenarios", help="list the named scenarios")

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config", type=Path)
    return p


def _run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, ensemble=dataclasses.replace(cfg.ensemble, seed=args.seed))
        validate(cfg)
    try:
        _kernels.set_num_threads(args.threads)
    except ValueError as exc:
        raise ConfigError(f"--threads: {exc}") from None
    out = args.output_dir if args.output_dir is not None else Path(cfg.output_dir)
    rep = run_scenario(cfg, out, plots=not args.no_plots)
    width = max((len(c["metric"]) for c in rep.checks), default=0)
    for c in rep.checks:
        print(f"{c['status'].upper():7s} {c['metric']:{width}s}  {c['value']!s:>24}  {c['rule']}")
    print(f"wrote {out}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "list-scenarios":
            for name in SCENARIOS:
                print(f"{name:22s} {_SUMMARIES[name]}")
            return EXIT_OK
        if args.command == "validate":
            cfg = load_config(args.config)
            print(f"{args.config}: ok ({cfg.scenario}, sha256 {cfg.config_hash()[:12]})")
            return EXIT_OK
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"numerical failure in {exc.stage}: {exc.cause}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
