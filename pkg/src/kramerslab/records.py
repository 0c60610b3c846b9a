"""CSV and JSON persistence with a fixed, reproducible text format.

Doubles are written with 17 significant digits so values round-trip
exactly. JSON keys are sorted; non-finite floats become ``null``.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FLOAT_FORMAT = ".17g"


def to_jsonable(obj):
    """Convert numpy containers and scalars to plain Python, non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), FLOAT_FORMAT)
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """RFC 4180 style: header row, CRLF line ends, '.' decimal separator."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow([format_cell(v) for v in row])


def read_csv(path):
    """Return ``(header, columns)`` with numeric columns as float arrays."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    cols = {}
    for j, name in enumerate(header):
        raw = [r[j] for r in body]
        try:
            cols[name] = np.array([float(v) for v in raw])
        except ValueError:
            cols[name] = raw
    return header, cols


def write_dat(path, columns: Sequence[np.ndarray], names: Sequence[str], comment: str = "") -> None:
    """Whitespace-separated columns with a ``#`` header, as read by gnuplot."""
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write("# " + " ".join(names) + "\n")
        for row in zip(*columns):
            fh.write(" ".join(format(float(v), FLOAT_FORMAT) for v in row) + "\n")
