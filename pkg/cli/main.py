import argparse
import sys

from loguru import logger
from pydantic import ValidationError

from src.infrastructure.settings import settings

log_level = settings.LOG_LEVEL
log_format = "<green>{time:YYYY-MM-DD HH:mm:ss.SSS zz}</green> | <level>{level: <8}</level> | <yellow>Line {line: >4} ({file}):</yellow> <b>{message}</b>"
logger.remove()
logger.add(sys.stderr, level=log_level, format=log_format, colorize=True, backtrace=True, diagnose=True)
logger.add(settings.LOG_FILE, level=log_level, format=log_format, colorize=False, backtrace=True, diagnose=True)


from src.application.harness.runner import SUBCOMMANDS, ExperimentRunner
from src.domain.errors import ConfigConstraintError, LabError
from src.infrastructure.parallel.pool import WorkerPool
from src.infrastructure.storage.formats import load_config

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="horolab",
        description="Perturbed geodesic flow experiments on the Bolza surface",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS, help="Experiment to run")
    parser.add_argument("--config", "-c", default=settings.DEFAULT_CONFIG, help="Flat key = value config file")
    parser.add_argument("--seed", type=int, default=None, help="Override the config seed")
    parser.add_argument("--out", "-o", default=None, help="Output directory (default from config)")
    parser.add_argument("--threads", type=int, default=None, help="Worker processes (default all cores)")
    parser.add_argument("--quick", action="store_true", help="Reduced grids for CI")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    try:
        config = load_config(args.config, {"seed": args.seed, "output_dir": args.out})
    except (ConfigConstraintError, ValidationError, ValueError, OSError) as e:
        logger.error(f"Invalid config {args.config}: {e}")
        return EXIT_CONFIG

    WorkerPool.init(args.threads)
    try:
        out = ExperimentRunner(config, args.out, quick=args.quick).run(args.subcommand)
    except LabError as e:
        logger.error(f"{args.subcommand} failed: {e}")
        return EXIT_FAILURE
    finally:
        WorkerPool.close()

    logger.success(f"{args.subcommand} finished, artifacts in {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
