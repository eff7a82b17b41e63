from pathlib import Path
from typing import Any, get_origin

from loguru import logger

from src.domain.config import INTEGRATOR_KEYS, ExperimentConfig
from src.domain.hyperbolic import GroupElement
from src.domain.potential import Bump
from src.domain.surface import BOLZA_RELATION, OCTAGON_RADIUS, FuchsianGroup


def _content_lines(path: str | Path) -> list[tuple[int, str]]:
    lines = []
    for number, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append((number, line))
    return lines


def _floats(path: str | Path, count: int) -> list[list[float]]:
    rows = []
    for number, line in _content_lines(path):
        parts = line.split()
        if len(parts) != count:
            raise ValueError(f"{path}:{number}: expected {count} numbers, got {len(parts)}")
        rows.append([float(p) for p in parts])
    return rows


def read_group_file(path: str | Path) -> list[GroupElement]:
    """One generator per line as `a b c d`."""
    generators = []
    for a, b, c, d in _floats(path, 4):
        det = a * d - b * c
        if abs(det - 1.0) > 1e-9:
            raise ValueError(f"{path}: generator has determinant {det:.12g}, expected 1")
        generators.append(GroupElement.from_entries(a, b, c, d))
    return generators


def write_group_file(path: str | Path, group: FuchsianGroup) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# a b c d, one side-pairing generator per line"]
    lines += [" ".join(format(x, ".17g") for x in g.entries()) for g in group.generators]
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    logger.info(f"Wrote {len(group.generators)} generators to {path}")
    return path


def load_group(path: str | Path, word_length: int = 4) -> FuchsianGroup:
    group = FuchsianGroup.build(read_group_file(path), BOLZA_RELATION, OCTAGON_RADIUS, word_length)
    residual = group.relation_residual()
    if residual > 1e-9:
        raise ValueError(f"{path}: generators break the octagon relation (residual {residual:.3e})")
    logger.info(f"Loaded group from {path} (relation residual {residual:.2e})")
    return group


def read_potential_file(path: str | Path) -> list[Bump]:
    """One bump per line as `center_u center_v radius amplitude`."""
    return [Bump(u, v, radius, amplitude) for u, v, radius, amplitude in _floats(path, 4)]


def write_potential_file(path: str | Path, bumps: list[Bump]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# center_u center_v radius amplitude"]
    lines += [" ".join(format(x, ".17g") for x in (b.u, b.v, b.radius, b.amplitude)) for b in bumps]
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    return path


def _list_field(key: str) -> bool:
    field = ExperimentConfig.model_fields.get(key)
    return field is not None and get_origin(field.annotation) is list


def parse_config_text(text: str) -> dict[str, Any]:
    """Flat `key = value` lines; list values are comma separated."""
    known = set(ExperimentConfig.model_fields) | set(INTEGRATOR_KEYS)
    values: dict[str, Any] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {number}: expected `key = value`, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ValueError(f"config line {number}: unknown key {key!r}")
        if _list_field(key):
            values[key] = [item.strip() for item in value.split(",") if item.strip()]
        else:
            values[key] = value
    return values


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    values = parse_config_text(Path(path).read_text(encoding="utf-8"))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig.from_flat(values)


def config_echo(config: ExperimentConfig) -> dict[str, Any]:
    data = config.model_dump(mode="json")
    integrator = data.pop("integrator")
    reverse = {v: k for k, v in INTEGRATOR_KEYS.items()}
    data.update({reverse[k]: v for k, v in integrator.items()})
    return data

