"""Byte-stable result files and run manifests."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import time
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

SCHEMA_VERSION = 1

# column order is part of the file format
SAMPLE_COLUMNS = ("seed", "epsilon", "volume", "size", "conductance")
PROFILE_COLUMNS = ("volume_lo", "volume_hi", "min_conductance", "count")
HEATMAP_COLUMNS = ("volume_lo", "volume_hi", "conductance_lo", "conductance_hi", "count")
ENVELOPE_COLUMNS = ("mu", "k", "bound", "certified", "envelope")
GAP_COLUMNS = ("mu", "volume_floor", "upper", "lower", "ratio", "certified")


def fmt_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _plain(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _encode(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        s = fmt_float(obj)
        # non-finite values have no JSON literal
        return json.dumps(s) if not math.isfinite(obj) else s
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def stable_dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with floats at 17 significant digits and key order as given."""
    return _encode(_plain(obj), indent, 0) + "\n"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_json(path, obj: Any) -> None:
    atomic_write_text(path, stable_dumps(obj))


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    if v is None:
        return ""
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    os.replace(tmp, path)


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    """Run record kept on disk and rewritten after every change, so an
    interrupted run still leaves a valid file behind."""

    def __init__(self, path, command: str, argv: Sequence[str], version: str):
        self.path = Path(path)
        self.data: dict = {
            "schema": SCHEMA_VERSION,
            "command": command,
            "argv": list(argv),
            "version": version,
            "status": "running",
            "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "finished": None,
            "graph": None,
            "config": {},
            "items": [],
            "outputs": [],
        }

    @classmethod
    def load(cls, path) -> dict | None:
        try:
            return json.loads(Path(path).read_text())
        except (FileNotFoundError, json.JSONDecodeError):
            return None

    def set(self, key: str, value) -> None:
        self.data[key] = value
        self.save()

    def add_item(self, item: dict) -> None:
        self.data["items"].append(item)
        self.save()

    def add_output(self, path) -> None:
        p = str(path)
        if p not in self.data["outputs"]:
            self.data["outputs"].append(p)

    def finish(self, status: str) -> None:
        self.data["status"] = status
        self.data["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        self.save()

    def save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        atomic_write_text(self.path, stable_dumps(self.data))
