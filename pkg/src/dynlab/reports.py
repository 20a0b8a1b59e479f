"""JSON and CSV writers shared by the command line tools.

Every JSON artifact carries ``schema: 1`` and the resolved run
configuration; CSV files start with a ``# config:`` comment line holding
the same configuration. Floats are written with ``repr`` so reruns with
the same configuration are byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

SCHEMA = 1

ORBIT_HEADER = ("step", "x", "y", "z")
SLOPE_HEADER = ("cylinder_word", "alpha_uu", "residual")
MEASURE_HEADER = ("x", "y", "z", "weight")


def _plain(obj):
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
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_json(path, payload: dict, config: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"schema": SCHEMA, "config": _plain(config)}
    doc.update(_plain(payload))
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_csv(path, header, rows, config: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        if config is not None:
            fh.write("# config: " + json.dumps(_plain(config), sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])
    return path


def read_csv(path):
    """(header, rows) of a CSV written by :func:`write_csv`; comment lines skipped."""
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def basin_header(k: int):
    return ("x0", "y0", "z0", *[f"avg_{i}" for i in range(1, k + 1)], "conv_gap", "cluster_id")


def orbit_rows(orb):
    for i, (x, y, z) in enumerate(orb):
        yield (i, float(x), float(y), float(z))


def read_measure_csv(path):
    header, rows = read_csv(path)
    if tuple(header) != MEASURE_HEADER:
        raise ValueError(f"{path}: expected header {','.join(MEASURE_HEADER)}")
    arr = np.array(rows, dtype=float).reshape(-1, 4)
    return arr[:, :3], arr[:, 3]
