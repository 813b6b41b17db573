"""Command-line entry point: ``vi-sharp run|sweep|oracle <config.json>``.

Exit status is 0 for a completed run whatever accuracy it reached, 2 for a
configuration error and 3 for a numerical failure.
"""
import argparse
import sys
from typing import List, Optional

from loguru import logger
from pydantic import ValidationError

from vi_sharp import __version__
from vi_sharp.core.config import settings
from vi_sharp.core.exceptions import (
    ConfigError,
    GeometryError,
    NonUniqueSolution,
    UnknownProblem,
    ViSharpError,
)
from vi_sharp.services.run_service import SWEEP_PARAMETERS, RunService

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

CONFIG_ERRORS = (
    ConfigError, ValidationError, UnknownProblem, NonUniqueSolution, GeometryError, OSError
)


def configure_logging(quiet: bool = False) -> None:
    logger.remove()
    level = "WARNING" if quiet else settings.LOG_LEVEL
    logger.add(
        sys.stderr,
        level=level,
        format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | {message}",
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="Path to the JSON run configuration")
    common.add_argument("--seed", type=int, default=None, help="Override solver.seed")
    common.add_argument(
        "--max-iters", type=int, default=None, help="Override solver.max_iters"
    )
    common.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    common.add_argument(
        "--thread-count", type=int, default=None, help="Worker threads for sweeps and grids"
    )

    parser = argparse.ArgumentParser(
        prog="vi-sharp", description=f"{settings.PROJECT_NAME} {__version__}"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("run", parents=[common], help="Solve and write trace and summary")

    sweep = commands.add_parser("sweep", parents=[common], help="One solve per parameter value")
    sweep.add_argument("--param", required=True, choices=SWEEP_PARAMETERS)
    sweep.add_argument(
        "--values",
        required=True,
        help="Comma-separated values; lambda accepts multiples of its bound, e.g. 0.5L,2L",
    )
    sweep.add_argument("--output", default=None, help="Sweep table path")

    oracle = commands.add_parser("oracle", parents=[common], help="Mint and cache a certificate")
    oracle.add_argument(
        "--max-age-minutes",
        type=int,
        default=None,
        help="First delete cached certificates older than this",
    )
    return parser


def _run(args: argparse.Namespace, service: RunService) -> None:
    config = service.load_config(args.config)
    config = service.with_solver_overrides(config, seed=args.seed, max_iters=args.max_iters)

    if args.command == "run":
        summary = service.run(config)
        logger.info(
            f"{summary.problem}: certified eps {summary.certified_eps:.3e} after "
            f"{summary.iters_run} iterations ({summary.restarts} restarts)"
        )
    elif args.command == "sweep":
        values = [v for v in args.values.split(",") if v.strip()]
        service.sweep(config, args.param, values, args.output)
    else:
        if args.max_age_minutes is not None:
            deleted = service.certificate_store.delete_older_than_minutes(args.max_age_minutes)
            logger.info(f"Deleted {deleted} stale certificates")
        problem, _, _ = service.prepare(config)
        certificate = service.certificate(config, problem)
        logger.info(
            f"{certificate.problem}: {certificate.method} x* = {certificate.x_star} "
            f"(residual {certificate.residual:.2e})"
        )


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.quiet)
    service = RunService(thread_count=args.thread_count)
    try:
        _run(args, service)
    except CONFIG_ERRORS as e:
        logger.error(f"configuration error: {e}")
        return EXIT_CONFIG
    except ViSharpError as e:
        logger.error(f"numerical failure: {e}")
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
