"""Delimited-text outputs with a self-describing header."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Sequence

import numpy as np


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def write_table(path, columns: Sequence[str], rows, config: dict, seed, comments: Sequence[str] = ()) -> Path:
    """Write tab-separated rows after a ``#`` header naming hash, seed and columns.

    Floats use ``repr`` precision so reruns are byte-identical.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# config_hash={config_hash(config)} seed={seed}"]
    lines += [f"# {c}" for c in comments]
    lines.append("# " + "\t".join(columns))
    for row in rows:
        lines.append("\t".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Column names and numeric data of a file written by :func:`write_table`."""
    header = None
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            header = line[1:].strip().split("\t")
        elif line.strip():
            rows.append([float(x) for x in line.split("\t")])
    data = np.array(rows, dtype=float).reshape(len(rows), len(header) if header else 0)
    return header or [], data
