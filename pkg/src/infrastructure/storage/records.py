from typing import Any, ClassVar, Type, TypeVar
from pathlib import Path
import csv
import io
import json

from pydantic import BaseModel
from loguru import logger


T = TypeVar("T", bound="BaseRecord")


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, (dict, list, tuple)):
        return json.dumps(value)
    if value is None:
        return ""
    return str(value)


class BaseRecord(BaseModel):
    """A row of a run artifact; one artifact per record class."""

    __artifact__: ClassVar[str]

    @staticmethod
    def _parse_row(row: dict[str, str]) -> dict[str, Any]:
        data: dict[str, Any] = dict(row)
        for key, value in data.items():
            # JSON-encoded nested values come back as objects
            if isinstance(value, str) and value.strip().startswith(("[", "{")):
                try:
                    data[key] = json.loads(value)
                except (json.JSONDecodeError, ValueError):
                    pass
            elif value == "":
                data[key] = None
        return data

    @classmethod
    def columns(cls) -> list[str]:
        return list(cls.model_fields)

    @classmethod
    def to_record(cls, model: BaseModel) -> dict[str, str]:
        data = model.model_dump(mode="json")
        return {k: _format_value(v) for k, v in data.items()}

    @classmethod
    def from_record(cls: Type[T], row: dict[str, str]) -> T:
        return cls(**cls._parse_row(row))


class RecordStore:
    """Writes record batches as CSV (fixed columns, .17g floats, LF) and as a JSON array."""

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def save(self, records: list[BaseRecord], name: str | None = None) -> tuple[Path, Path]:
        if not records:
            raise ValueError("Nothing to save: empty record batch")
        record_cls = type(records[0])
        name = name or record_cls.__artifact__

        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=record_cls.columns(), lineterminator="\n")
        writer.writeheader()
        for record in records:
            writer.writerow(record_cls.to_record(record))

        csv_path = self.out_dir / f"{name}.csv"
        json_path = self.out_dir / f"{name}.json"
        csv_path.write_bytes(buffer.getvalue().encode("utf-8"))
        payload = json.dumps([r.model_dump(mode="json") for r in records], indent=2) + "\n"
        json_path.write_bytes(payload.encode("utf-8"))

        logger.success(f"Saved {len(records)} {name} rows to {csv_path}")
        return csv_path, json_path

    def load(self, record_cls: Type[T], name: str | None = None) -> list[T]:
        path = self.out_dir / f"{name or record_cls.__artifact__}.csv"
        with open(path, newline="", encoding="utf-8") as f:
            return [record_cls.from_record(row) for row in csv.DictReader(f)]

    def write_manifest(self, manifest: dict[str, Any]) -> Path:
        path = self.out_dir / "manifest.json"
        path.write_bytes((json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode("utf-8"))
        logger.info(f"Run manifest written to {path}")
        return path
