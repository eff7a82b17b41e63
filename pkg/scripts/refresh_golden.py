import argparse
import shutil
from pathlib import Path

from loguru import logger

from src.application.harness.runner import GOLDEN_SUBCOMMANDS, SUBCOMMANDS, ExperimentRunner
from src.infrastructure.parallel.pool import WorkerPool
from src.infrastructure.settings import settings
from src.infrastructure.storage.formats import load_config


def main(config_path: Path, output: Path, subcommands: list[str]):
    config = load_config(config_path, {"seed": settings.SEED})
    if output.exists():
        logger.warning("Replacing golden directory", output=str(output))
        shutil.rmtree(output)

    WorkerPool.init(1)
    try:
        runner = ExperimentRunner(config, output, quick=True)
        for subcommand in subcommands:
            runner.run(subcommand)
    finally:
        WorkerPool.close()

    # manifests carry wall time and versions, which never match byte-for-byte
    for manifest in output.glob("*/manifest.json"):
        manifest.unlink()

    logger.info("Golden files refreshed", output=str(output), subcommands=len(subcommands))


if __name__ == "__main__":
    parser = argparse.ArgumentParser(
        description="Regenerate the golden CSV/JSON files of the quick suite"
    )
    parser.add_argument(
        "--config", "-c", default=settings.DEFAULT_CONFIG, help="Config file"
    )
    parser.add_argument(
        "--output", "-o", default=settings.GOLDEN_DIR, help="Golden directory"
    )
    parser.add_argument(
        "--only", nargs="*", choices=SUBCOMMANDS, default=list(GOLDEN_SUBCOMMANDS), help="Subcommands to refresh"
    )

    args = parser.parse_args()

    main(config_path=Path(args.config), output=Path(args.output), subcommands=args.only)
