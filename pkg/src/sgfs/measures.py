"""Discrete geostrophic measures, initial-data generation and W2 oracles."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import EmptyMeasure, TooLarge

WEIGHT_FLOOR = 1e-14
ORACLE_MAX_ATOMS = 12


@dataclass(frozen=True, eq=False)
class GeostrophicMeasure:
    """Weighted atoms in geostrophic coordinates; ``points[:, 2]`` is the density-like coordinate."""

    points: np.ndarray
    weights: np.ndarray
    box: np.ndarray = field(default=None)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, ndmin=2)
        w = np.array(self.weights, dtype=float, ndmin=1)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must have shape (n, 3)")
        if len(w) != len(pts) or len(w) == 0:
            raise ValueError("need one positive weight per point")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(w))):
            raise ValueError("non-finite measure data")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        box = np.array([pts.min(axis=0), pts.max(axis=0)]) if self.box is None else np.array(self.box, float)
        if box.shape != (2, 3):
            raise ValueError("box must be [[lo1, lo2, lo3], [hi1, hi2, hi3]]")
        if np.any(pts < box[0]) or np.any(pts > box[1]):
            raise ValueError("points outside the recorded support box")
        for a in (pts, w, box):
            a.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "box", box)

    def __len__(self):
        return len(self.weights)

    @classmethod
    def uniform(cls, points, box=None) -> "GeostrophicMeasure":
        pts = np.asarray(points, dtype=float)
        return cls(pts, np.full(len(pts), 1.0 / len(pts)), box)


@dataclass(frozen=True)
class DensitySpec:
    """Initial density description.

    ``params`` by kind:

    * ``uniform_box``: ``lo``, ``hi`` (3-vectors).
    * ``gaussian_blob``: ``center``, ``spread`` (scalar or 3-vector), optional ``cutoff`` in spreads (default 3).
    * ``two_blob``: ``centers`` (two 3-vectors), ``spreads`` (two scalars or 3-vectors),
      ``mix`` (weight of the first blob), optional ``cutoff``.

    ``resolution`` sub-samples per axis are averaged per cell.  ``stagger`` in
    [0, 1) spreads the particles of one horizontal layer over that fraction of
    the layer thickness so that no two particles share a vertical coordinate.
    """

    kind: str
    params: dict
    resolution: int = 4
    stagger: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform_box", "gaussian_blob", "two_blob"):
            raise ValueError(f"unknown density kind {self.kind!r}")
        if self.resolution < 1:
            raise ValueError("resolution must be >= 1")
        if not 0.0 <= self.stagger < 1.0:
            raise ValueError("stagger must lie in [0, 1)")

    def support_box(self) -> np.ndarray:
        p = self.params
        if self.kind == "uniform_box":
            lo, hi = np.asarray(p["lo"], float), np.asarray(p["hi"], float)
            if np.any(hi <= lo):
                raise ValueError("uniform_box needs hi > lo on every axis")
            return np.array([lo, hi])
        cut = float(p.get("cutoff", 3.0))
        if self.kind == "gaussian_blob":
            c = np.asarray(p["center"], float)
            s = np.broadcast_to(np.asarray(p["spread"], float), (3,))
            return np.array([c - cut * s, c + cut * s])
        boxes = []
        for c, s in zip(p["centers"], p["spreads"]):
            c = np.asarray(c, float)
            s = np.broadcast_to(np.asarray(s, float), (3,))
            boxes.append((c - cut * s, c + cut * s))
        return np.array([np.minimum(boxes[0][0], boxes[1][0]), np.maximum(boxes[0][1], boxes[1][1])])

    def density(self, y: np.ndarray) -> np.ndarray:
        p = self.params
        if self.kind == "uniform_box":
            return np.ones(len(y))
        if self.kind == "gaussian_blob":
            return _gauss(y, p["center"], p["spread"])
        mix = float(p.get("mix", 0.5))
        (c1, c2), (s1, s2) = p["centers"], p["spreads"]
        return mix * _gauss(y, c1, s1) + (1 - mix) * _gauss(y, c2, s2)


def _gauss(y, center, spread):
    s = np.broadcast_to(np.asarray(spread, float), (3,))
    r = (y - np.asarray(center, float)) / s
    return np.exp(-0.5 * np.sum(r * r, axis=1)) / np.prod(s)


def discretize(spec: DensitySpec, n_per_axis) -> GeostrophicMeasure:
    """Cell-centre particles on the support box, weighted by cell-averaged density.

    ``n_per_axis`` is an int or a triple of cell counts.
    """
    counts = np.broadcast_to(np.asarray(n_per_axis, dtype=int), (3,))
    if np.any(counts < 1):
        raise ValueError("n_per_axis must be >= 1")
    box = spec.support_box()
    width = (box[1] - box[0]) / counts
    m = spec.resolution
    sub = (np.arange(m) + 0.5) / m
    offsets = np.array(list(itertools.product(sub, sub, sub)))  # (m^3, 3) in unit cell

    idx = np.array(list(itertools.product(*(range(c) for c in counts))))  # C order
    corners = box[0] + idx * width
    centres = corners + 0.5 * width
    samples = corners[:, None, :] + offsets[None, :, :] * width
    dens = spec.density(samples.reshape(-1, 3)).reshape(len(idx), -1).mean(axis=1)

    if spec.stagger > 0:
        layer = counts[0] * counts[1]
        rank = idx[:, 0] * counts[1] + idx[:, 1]
        centres = centres.copy()
        centres[:, 2] += spec.stagger * width[2] * ((rank + 0.5) / layer - 0.5)

    total = dens.sum()
    if not total > 0:
        raise EmptyMeasure("density vanishes on every cell")
    w = dens / total
    keep = w >= WEIGHT_FLOOR
    if not np.any(keep):
        raise EmptyMeasure("all cell weights below the floor")
    w = w[keep] / w[keep].sum()
    return GeostrophicMeasure(centres[keep], w, box)


def second_moment(nu: GeostrophicMeasure) -> float:
    return float(np.sum(nu.weights * np.sum(nu.points**2, axis=1)))


def optimal_plan(mu: GeostrophicMeasure, nu: GeostrophicMeasure, cost=None):
    """Exact discrete optimal plan by linear programming.

    Returns ``(value, plan)``; ``cost`` defaults to ``|x - y|^2``.
    """
    if len(mu) > ORACLE_MAX_ATOMS or len(nu) > ORACLE_MAX_ATOMS:
        raise TooLarge(f"oracle limited to {ORACLE_MAX_ATOMS} atoms per measure")
    X, Y = mu.points, nu.points
    C = cost(X, Y) if cost is not None else np.sum((X[:, None, :] - Y[None, :, :]) ** 2, axis=2)
    return solve_transport_lp(mu.weights, nu.weights, C)


def solve_transport_lp(a: np.ndarray, b: np.ndarray, C: np.ndarray):
    """Minimise ``<C, P>`` over couplings of ``a`` and ``b`` (HiGHS)."""
    n, m = C.shape
    A_r = sparse.kron(sparse.identity(n), np.ones((1, m)))
    A_c = sparse.kron(np.ones((1, n)), sparse.identity(m))
    # one marginal equation is redundant
    A = sparse.vstack([A_r, A_c.tocsr()[:-1]]).tocsc()
    rhs = np.concatenate([a, b[:-1]])
    res = linprog(C.ravel(), A_eq=A, b_eq=rhs, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    plan = res.x.reshape(n, m)
    return float(np.sum(C * plan)), plan


def w2_bruteforce(mu: GeostrophicMeasure, nu: GeostrophicMeasure) -> float:
    """Squared 2-Wasserstein distance between two small discrete measures."""
    value, _ = optimal_plan(mu, nu)
    return max(value, 0.0)


def perturb(nu: GeostrophicMeasure, phi, s: float) -> GeostrophicMeasure:
    """Push ``nu`` forward by ``y -> y + s * grad phi(y)``."""
    if s == 0:
        return nu
    moved = nu.points + s * phi.grad(nu.points)
    box = np.array([np.minimum(nu.box[0], moved.min(axis=0)), np.maximum(nu.box[1], moved.max(axis=0))])
    return GeostrophicMeasure(moved, nu.weights, box)
