"""Atomic file output and the commented-CSV format used for records and tables."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np


def atomic_write_text(path, text: str) -> Path:
    """Write to a temporary file in the target directory, then rename over `path`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def dumps_json(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write_text(path, dumps_json(obj))


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float):
        if obj != obj or obj in (float("inf"), float("-inf")):
            return None
        return round(obj, 12)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def csv_text(header, rows, meta=None) -> str:
    buf = io.StringIO()
    if meta is not None:
        buf.write("# " + json.dumps(to_jsonable(meta), sort_keys=True, separators=(",", ":")) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(round(float(v), 12))
    return v


def write_csv(path, header, rows) -> Path:
    return atomic_write_text(path, csv_text(header, rows))


def write_commented_csv(path, meta, header, rows) -> Path:
    """CSV whose first line is `# {json metadata}`."""
    return atomic_write_text(path, csv_text(header, rows, meta))


def read_commented_csv(path):
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ValueError(f"{path}: missing metadata header line")
        meta = json.loads(first[2:])
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[int(v) for v in row] for row in reader if row]
    return meta, header, rows
