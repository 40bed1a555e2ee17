"""Command-line entry point.

Exit codes: 0 success, 2 invalid config or arguments, 3 infeasible plan,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from .experiments import (
    ANALYSIS_KINDS,
    PRESETS,
    ConfigError,
    ExperimentConfig,
    default_out_dir,
    load_config,
    preset,
    run_characterization,
    run_experiment,
    run_oracle_only,
    run_plan_only,
    run_scheme_comparison,
)
from .rate_control import InfeasiblePlanError

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO = 0, 2, 3, 4

logger = logging.getLogger("nasim")


def _global_flags(parser: argparse.ArgumentParser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="experiment config (YAML) or a run manifest")
    parser.add_argument("--preset", choices=PRESETS, default=default, help="built-in config when --config is absent")
    parser.add_argument("--seed", type=int, default=default, help="override the config seed")
    parser.add_argument("--threads", type=int, default=default,
                        help="worker threads for shot chunks (default: $NASIM_THREADS or 1)")
    parser.add_argument("--out-dir", default=default, help="output directory (default: results/<kind>)")
    parser.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nasim", description="Noise-assisted open-system simulation")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "characterize": "estimate device Pauli errors from fidelity decays",
        "plan": "write the mitigation plan and per-point costs",
        "run": "run the experiment and its master-equation reference",
        "oracle": "write the master-equation reference only",
        "compare-schemes": "scheme I versus II tables (eps_bar, cost ratio)",
        "dt-scan": "circuit counts versus initial time step",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        _global_flags(p, suppress=True)
    return parser


def _resolve_config(args, command: str) -> ExperimentConfig:
    if args.config:
        config = load_config(args.config)
    elif args.preset:
        config = preset(args.preset)
    elif command == "compare-schemes":
        config = preset("scheme-compare")
    elif command == "dt-scan":
        config = preset("dt-scan")
    else:
        raise ConfigError("config: pass --config FILE or --preset NAME")
    wanted = {"compare-schemes": "scheme-compare", "dt-scan": "dt-scan"}.get(command)
    if wanted and config.kind != wanted:
        raise ConfigError(f"config.experiment: {command} needs kind {wanted!r}, got {config.kind!r}")
    if not wanted and config.kind in ANALYSIS_KINDS and command != "run":
        raise ConfigError(f"config.experiment: {command} needs a simulation kind, got {config.kind!r}")
    threads = args.threads if args.threads is not None else None
    return config.with_overrides(seed=args.seed, threads=threads)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        config = _resolve_config(args, args.command)
        out_dir = args.out_dir or default_out_dir(config)
        runner = {
            "characterize": run_characterization,
            "plan": run_plan_only,
            "run": run_experiment,
            "oracle": run_oracle_only,
            "compare-schemes": run_scheme_comparison,
            "dt-scan": run_scheme_comparison,
        }[args.command]
        runner(config, out_dir)
    except InfeasiblePlanError as exc:
        print(f"infeasible plan: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(os.path.abspath(out_dir))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
