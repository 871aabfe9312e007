"""Checkpoint, diagnostics and report files.  CSV is LF-terminated with fixed headers."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .domain import fmt_float
from .freesurface import LOG_HEADER, FreeSurfaceSolution
from .measures import GeostrophicMeasure

STATE_HEADER = ["id", "y1", "y2", "y3", "weight", "psi", "c1", "c2", "c3", "cell_mass"]
DIAGNOSTICS_HEADER = ["step", "t", "H", "E_bb", "mass_residual", "surface_residual", "min_cell_mass", "max_speed"]


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_state_csv(path, nu: GeostrophicMeasure, sol: FreeSurfaceSolution) -> None:
    tess = sol.tessellation
    c = tess.barycenter
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(STATE_HEADER)
        for i in range(len(nu)):
            y = nu.points[i]
            w.writerow(
                [i]
                + [fmt_float(v) for v in (y[0], y[1], y[2], nu.weights[i], sol.dual.psi[i])]
                + [fmt_float(v) for v in c[i]]
                + [fmt_float(tess.mass[i])]
            )


def read_state_csv(path) -> dict:
    """Columns of a state file as float arrays keyed by header name."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != STATE_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = [r for r in reader]
    if not rows:
        raise ValueError(f"{path}: no particles")
    data = np.array([[float(v) for v in r] for r in rows])
    out = {name: data[:, k] for k, name in enumerate(STATE_HEADER)}
    if not np.array_equal(out["id"], np.arange(len(rows))):
        raise ValueError(f"{path}: particle ids must be 0..n-1 in order")
    return out


class DiagnosticsWriter:
    """Appends one row per accepted step and flushes immediately."""

    def __init__(self, path):
        self.fh = open(path, "w", newline="")
        self.w = _writer(self.fh)
        self.w.writerow(DIAGNOSTICS_HEADER)

    def row(self, step, t, H, E_bb, mass_res, surf_res, min_mass, max_speed):
        self.w.writerow([int(step)] + [fmt_float(v) for v in (t, H, E_bb, mass_res, surf_res, min_mass, max_speed)])
        self.fh.flush()

    def close(self):
        self.fh.close()


def read_diagnostics(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != DIAGNOSTICS_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        data = np.array([[float(v) for v in r] for r in reader]).reshape(-1, len(header))
    return {name: data[:, k] for k, name in enumerate(header)}


class SurfaceLogWriter:
    def __init__(self, path):
        self.fh = open(path, "w", newline="")
        self.w = _writer(self.fh)
        self.w.writerow(LOG_HEADER)

    def rows(self, history):
        for it, cost, mres, sres, delta in history:
            self.w.writerow([int(it)] + [fmt_float(v) for v in (cost, mres, sres, delta)])
        self.fh.flush()

    def close(self):
        self.fh.close()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    return obj


def write_json(path, payload: dict) -> None:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")
