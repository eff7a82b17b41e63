import argparse
from pathlib import Path

from loguru import logger

from src.domain.surface import bolza_group
from src.infrastructure.settings import settings
from src.infrastructure.storage.formats import load_group, write_group_file


def main(output: Path, word_length: int):
    group = bolza_group(word_length)
    write_group_file(output, group)

    # the written file has to load back into the same group
    reloaded = load_group(output, word_length)
    logger.info(
        "Group exported",
        output=str(output),
        generators=len(reloaded.generators),
        relation_residual=reloaded.relation_residual(),
    )


if __name__ == "__main__":
    parser = argparse.ArgumentParser(
        description="Export the Bolza side pairings as a group file"
    )
    parser.add_argument(
        "--output", "-o", default="bolza.group", help="Output group file under data/"
    )
    parser.add_argument(
        "--word-length", "-w", type=int, default=settings.WORD_CACHE_LENGTH, help="Word cache length"
    )

    args = parser.parse_args()

    main(output=Path("data") / args.output, word_length=args.word_length)
