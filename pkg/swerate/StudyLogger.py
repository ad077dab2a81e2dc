import csv
import hashlib
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'


def format_value(value) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return format(value, '.17g')
    if value is None:
        return ''
    try:
        # numpy scalars
        return format_value(value.item())
    except AttributeError:
        return str(value)


def write_table(rows: Iterable[Mapping], schema: Sequence[str], path) -> Path:
    """CSV with a header row, LF line endings and reals at 17 significant digits."""
    path = Path(path)
    rows = list(rows)
    for idx, row in enumerate(rows):
        extra = set(row) - set(schema)
        missing = [col for col in schema if col not in row]
        if extra or missing:
            raise ValueError(
                f"row {idx} does not match the schema (missing {missing}, unexpected {sorted(extra)})"
            )
    try:
        if not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='', encoding='utf-8') as fh:
            writer = csv.writer(fh, lineterminator='\n')
            writer.writerow(schema)
            for row in rows:
                writer.writerow([format_value(row[col]) for col in schema])
    except OSError as exc:
        raise OSError(f"cannot write table {path}: {exc}") from exc
    logger.info("wrote %d rows to %s", len(rows), path)
    return path


def read_table(path) -> List[Dict[str, str]]:
    path = Path(path)
    try:
        with open(path, newline='', encoding='utf-8') as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise OSError(f"cannot read table {path}: {exc}") from exc


def file_digest(path) -> str:
    sha = hashlib.sha256()
    with open(path, 'rb') as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b''):
            sha.update(chunk)
    return sha.hexdigest()


@dataclass
class StudyManifest:
    command: str
    parameters: Dict[str, object] = field(default_factory=dict)
    cells: List[Dict[str, object]] = field(default_factory=list)
    outputs: Dict[str, str] = field(default_factory=dict)

    def record_cell(self, parameters: Mapping[str, object], seconds: float) -> None:
        self.cells.append({'parameters': dict(parameters), 'seconds': round(seconds, 6)})

    def record_output(self, path) -> None:
        path = Path(path)
        self.outputs[path.name] = file_digest(path)

    def to_json(self) -> str:
        payload = {
            'command': self.command,
            'parameters': self.parameters,
            'cells': self.cells,
            'outputs': dict(sorted(self.outputs.items())),
        }
        return json.dumps(payload, indent=2, sort_keys=True, default=format_value)


class StudyLogger:
    """Writes result tables into one output directory and keeps their manifest."""

    def __init__(self, out_dir, command: str, parameters: Optional[Mapping[str, object]] = None):
        self.out_dir = Path(out_dir)
        self.manifest = StudyManifest(command, dict(parameters or {}))
        self._started = time.perf_counter()

    def cell_done(self, parameters: Mapping[str, object], started: float) -> None:
        self.manifest.record_cell(parameters, time.perf_counter() - started)

    def write(self, name: str, rows: Iterable[Mapping], schema: Sequence[str]) -> Path:
        path = write_table(rows, schema, self.out_dir / name)
        self.manifest.record_output(path)
        return path

    def close(self) -> Path:
        self.manifest.parameters.setdefault('wall_seconds', round(time.perf_counter() - self._started, 3))
        path = self.out_dir / MANIFEST_NAME
        try:
            os.makedirs(self.out_dir, exist_ok=True)
            path.write_text(self.manifest.to_json() + '\n', encoding='utf-8')
        except OSError as exc:
            raise OSError(f"cannot write manifest {path}: {exc}") from exc
        logger.info("manifest with %d outputs written to %s", len(self.manifest.outputs), path)
        return path
