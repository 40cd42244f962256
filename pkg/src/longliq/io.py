"""CSV and JSON artifacts with an embedded config hash and seed."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__


def config_hash(obj) -> str:
    blob = json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _plain(obj):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def _cell(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], meta: Optional[dict] = None) -> Path:
    """RFC-4180 CSV with shortest round-trip floats.

    ``meta`` is written as a single leading ``# key=value;...`` line.
    """
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        if meta:
            fh.write("# " + ";".join(f"{k}={meta[k]}" for k in sorted(meta)) + "\r\n")
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def write_table(path, columns: Sequence[str], data: np.ndarray, meta: Optional[dict] = None,
                int_columns: Sequence[str] = ()) -> Path:
    ints = [c in int_columns for c in columns]
    rows = ([int(v) if is_int else float(v) for v, is_int in zip(r, ints)] for r in np.asarray(data))
    return write_csv(path, columns, rows, meta)


def read_csv(path) -> tuple[dict, list, np.ndarray]:
    """Read a file written by :func:`write_csv`; returns (meta, columns, data)."""
    meta = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if lines and lines[0].startswith("# "):
        for item in lines[0][2:].split(";"):
            k, _, v = item.partition("=")
            meta[k] = v
        lines = lines[1:]
    reader = csv.reader(lines)
    cols = next(reader)
    data = np.array([[float(x) for x in r] for r in reader], dtype=float).reshape(-1, len(cols))
    return meta, cols, data


def write_json(path, payload: dict, meta: Optional[dict] = None) -> Path:
    body = dict(payload)
    if meta is not None:
        body["meta"] = dict(meta, version=__version__)
    path = Path(path)
    path.write_text(json.dumps(_plain(body), indent=2, sort_keys=True, allow_nan=False) + "\n",
                    encoding="utf-8")
    return path


def ensemble_rows(ens, paths: Optional[Sequence[int]] = None):
    """Long-format rows (path, t, X, Y) of an ensemble."""
    idx = range(ens.x.shape[0]) if paths is None else paths
    ids = ens.path_ids
    for i in idx:
        for k, t in enumerate(ens.t):
            yield int(ids[i]), float(t), float(ens.x[i, k]), float(ens.y[i, k])


def write_ensemble(path, ens, meta: Optional[dict] = None) -> Path:
    return write_csv(path, ["path", "t", "X", "Y"], ensemble_rows(ens), meta)
