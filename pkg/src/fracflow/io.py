"""File output: CSV with shortest round-trip floats and sorted-key JSON."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .stepper import Trajectory

__all__ = [
    "fmt",
    "write_csv",
    "write_json",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_snapshots_csv",
]


def fmt(x) -> str:
    """Shortest decimal that round-trips to the same double."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else fmt(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], config_hash: Optional[str] = None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if config_hash:
            fh.write(f"# config_hash: {config_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, (str, int, np.integer)) and not isinstance(v, bool)
                             else fmt(v) for v in row])


def write_trajectory_csv(path, traj: Trajectory, probes=None, config_hash=None) -> None:
    """Columns ``t, residual, energy`` followed by ``u[i]`` for each probe (all by default)."""
    d = traj.u.shape[1]
    idx = list(range(d)) if probes is None else list(probes)
    header = ["t", "residual", "energy"] + [f"u[{i}]" for i in idx]
    rows = ([traj.t[n], traj.residual[n], traj.energy[n]] + list(traj.u[n, idx])
            for n in range(traj.N + 1))
    write_csv(path, header, rows, config_hash)


def read_trajectory_csv(path):
    """Return ``(t, u, energy, header)``; ``u`` has one column per ``u[i]`` field."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    data = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValueError(f"{path} holds no trajectory rows")
    cols = {name: i for i, name in enumerate(header)}
    ucols = [i for i, name in enumerate(header) if name.startswith("u[")]
    if "t" not in cols or not ucols:
        raise ValueError(f"{path} lacks t or state columns")
    energy = data[:, cols["energy"]] if "energy" in cols else None
    return data[:, cols["t"]], data[:, ucols], energy, header


def write_snapshots_csv(path, t, x, u, times, config_hash=None) -> None:
    """Rows ``(t_n, x_i, u)`` at the nodes nearest to each requested time."""
    t = np.asarray(t)
    picks = sorted({int(np.argmin(np.abs(t - s))) for s in times})
    rows = ((t[n], xi, u[n, i]) for n in picks for i, xi in enumerate(x))
    write_csv(path, ["t", "x", "u"], rows, config_hash)
