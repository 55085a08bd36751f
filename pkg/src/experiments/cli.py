import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from src import __version__
from src.experiments.commands import COMMANDS, run_dir
from src.experiments.config_schema import apply_overrides, load_experiment_config
from src.experiments.verify import VerificationReport
from src.utils.config_loader import ConfigLoader
from src.utils.errors import ConfigValidationError, SpectralSolverError
from src.utils.logging_config import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SOLVER = 2
EXIT_VERIFY = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="run_experiment",
        description="Spectral fractional Laplacian experiments with moving Dirichlet-Neumann data",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, type=Path, help="Experiment YAML or JSON file")
        cmd.add_argument("--config-dir", default="config", help="Directory holding config.yaml defaults")
        cmd.add_argument("--out", type=Path, help="Output directory (overrides output_dir)")
        cmd.add_argument("--jobs", type=int, help="Worker processes for sweeps")
        cmd.add_argument("--seed", type=int, help="Seed for randomized checks")
        cmd.add_argument("--tol", type=float, help="Monotone and Newton tolerance")
        cmd.add_argument("--verbose", "-v", action="store_true", help="Debug logging and per-check margins")
        cmd.add_argument("--log-json", action="store_true", help="Write JSON logs into the run directory")
    return parser


def _print_checks(report: VerificationReport, verbose: bool):
    for check in report.checks:
        if not verbose and check.passed:
            continue
        status = "PASS" if check.passed else "FAIL"
        line = f"{status} {check.suite}.{check.name}"
        if check.value is not None:
            line += f" value={check.value:.6e}"
        if check.threshold is not None:
            line += f" threshold={check.threshold:.3e} margin={check.margin:.3e}"
        if check.detail:
            line += f" ({check.detail})"
        print(line)
    print(f"{len(report.checks) - len(report.failures)}/{len(report.checks)} checks passed")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    loader = ConfigLoader(args.config_dir)
    logging_config = loader.get_logging_config()
    setup_logging(level="DEBUG" if args.verbose else logging_config["level"])

    try:
        raw = loader.load_experiment(args.config)
        config = load_experiment_config(raw)
        config = apply_overrides(config, out=args.out, jobs=args.jobs, seed=args.seed, tol=args.tol)
    except (ConfigValidationError, FileNotFoundError, ValueError) as exc:
        logger.error(f"{exc}")
        if isinstance(exc, ConfigValidationError) and exc.field_paths:
            logger.error(f"Offending fields: {', '.join(exc.field_paths)}")
        return EXIT_VALIDATION

    if args.log_json or logging_config["json_logs"]:
        log_file = run_dir(config, args.command) / "run.log"
        setup_logging(level="DEBUG" if args.verbose else logging_config["level"], log_file=str(log_file), json_logs=True)

    logger.info(f"{args.command}: config '{config.name}' hash {config.hash()[:12]}")
    try:
        result = COMMANDS[args.command](config)
    except ConfigValidationError as exc:
        logger.error(f"{exc}")
        return EXIT_VALIDATION
    except SpectralSolverError as exc:
        logger.error(f"{args.command} failed: {type(exc).__name__}: {exc}")
        return EXIT_SOLVER

    if isinstance(result, VerificationReport):
        _print_checks(result, args.verbose)
        return EXIT_OK if result.passed else EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
