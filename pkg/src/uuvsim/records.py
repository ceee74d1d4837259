"""Line-oriented run records: JSONL data files and run manifests.

Every data file starts with one header line carrying ``schema_version``,
the record ``kind``, and any run metadata, followed by one JSON object
per line.  Payloads are reduced to plain Python types and non-finite
floats become ``null``, so files round-trip through any JSON parser.
Wall-clock information lives only in manifests: data files produced from
the same seed are byte-identical run to run.
"""

from __future__ import annotations

import json
import os
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator

import numpy as np

from . import __version__

SCHEMA_VERSION = 1

# Canonical per-step trajectory export: one record per env per step.
TRAJECTORY_FIELDS = ("env", "step", "t", "p", "quat", "euler", "nu",
                     "commands", "reward")


class RecordError(ValueError):
    pass


def sanitize(value: Any) -> Any:
    """Reduce to JSON-safe plain Python; non-finite floats become None."""
    if isinstance(value, dict):
        return {str(k): sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [sanitize(v) for v in value]
    if isinstance(value, np.ndarray):
        return sanitize(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def dump_line(obj: Any) -> str:
    return json.dumps(sanitize(obj), sort_keys=True, separators=(",", ":"),
                      allow_nan=False)


def format_records(kind: str, rows: Iterable[dict],
                   meta: dict | None = None) -> Iterator[str]:
    """Header line then one line per row, ready to print or write."""
    header = {"schema_version": SCHEMA_VERSION, "kind": kind}
    if meta:
        header.update(meta)
    yield dump_line(header)
    for row in rows:
        yield dump_line(row)


def write_records(path: str | Path, kind: str, rows: Iterable[dict],
                  meta: dict | None = None) -> int:
    """Write a JSONL records file; returns the number of data rows."""
    path = Path(path)
    n = -1  # header line excluded from the count
    with path.open("w", encoding="utf-8") as fh:
        for n, line in enumerate(format_records(kind, rows, meta)):
            fh.write(line + "\n")
    return n


def read_records(path: str | Path) -> tuple[dict, list[dict]]:
    """Parse a JSONL records file into (header, rows)."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = [line for line in fh if line.strip()]
    if not lines:
        raise RecordError(f"{path}: empty records file")
    header = json.loads(lines[0])
    if not isinstance(header, dict) or "schema_version" not in header:
        raise RecordError(f"{path}: first line is not a records header")
    if header["schema_version"] != SCHEMA_VERSION:
        raise RecordError(
            f"{path}: schema_version {header['schema_version']} "
            f"(expected {SCHEMA_VERSION})")
    return header, [json.loads(line) for line in lines[1:]]


def hardware_summary() -> dict:
    return {
        "platform": platform.platform(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "cpu_count": os.cpu_count(),
    }


@dataclass
class RunManifest:
    """Everything needed to reproduce one command invocation."""

    command: list[str]
    config: dict
    seed: int
    started: str
    finished: str
    version: str = __version__
    schema_version: int = SCHEMA_VERSION
    hardware: dict = field(default_factory=hardware_summary)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "kind": "manifest",
            "version": self.version,
            "command": list(self.command),
            "config": self.config,
            "seed": self.seed,
            "hardware": self.hardware,
            "started": self.started,
            "finished": self.finished,
        }


def save_manifest(path: str | Path, manifest: RunManifest) -> None:
    Path(path).write_text(
        json.dumps(sanitize(manifest.to_dict()), sort_keys=True, indent=2,
                   allow_nan=False) + "\n", encoding="utf-8")


def load_manifest(path: str | Path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("kind") != "manifest":
        raise RecordError(f"{path}: not a run manifest")
    return data
