"""Rectangular base, bilinear surface profiles and horizontal column quadrature.

The fluid occupies ``{(x1, x2, x3): (x1, x2) in B, 0 < x3 < h(x1, x2)}`` where
``B = (0, lx) x (0, ly)`` and ``h`` is the bilinear interpolant of node values
on a regular ``nx x ny`` grid.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfBase, ZeroVolume


@dataclass(frozen=True)
class BaseGrid:
    lx: float
    ly: float
    nx: int
    ny: int
    qx: int = 1
    qy: int = 1

    def __post_init__(self):
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError("base extents must be positive")
        if self.nx < 2 or self.ny < 2:
            raise ValueError("need at least two nodes per axis")
        if self.qx < 1 or self.qy < 1:
            raise ValueError("quadrature counts must be >= 1")

    @property
    def dx(self) -> float:
        return self.lx / (self.nx - 1)

    @property
    def dy(self) -> float:
        return self.ly / (self.ny - 1)

    @property
    def area(self) -> float:
        return self.lx * self.ly

    def node_x(self) -> np.ndarray:
        return np.linspace(0.0, self.lx, self.nx)

    def node_y(self) -> np.ndarray:
        return np.linspace(0.0, self.ly, self.ny)

    def nodes(self) -> np.ndarray:
        """All grid nodes as an ``(nx*ny, 2)`` array in C order of ``(i, j)``."""
        X, Y = np.meshgrid(self.node_x(), self.node_y(), indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def trapezoid_weights(self) -> np.ndarray:
        """Node weights of the tensor trapezoid rule, exact for bilinear functions."""
        wx = np.full(self.nx, self.dx)
        wx[[0, -1]] *= 0.5
        wy = np.full(self.ny, self.dy)
        wy[[0, -1]] *= 0.5
        return np.outer(wx, wy)


@dataclass(frozen=True, eq=False)
class SurfaceProfile:
    grid: BaseGrid
    heights: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=float)
        if h.shape != (self.grid.nx, self.grid.ny):
            raise ValueError(f"heights must have shape {(self.grid.nx, self.grid.ny)}, got {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ValueError("heights must be finite")
        h = h.copy()
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)

    @classmethod
    def constant(cls, grid: BaseGrid, value: float | None = None) -> "SurfaceProfile":
        """Flat profile; unit volume when ``value`` is omitted."""
        if value is None:
            value = 1.0 / grid.area
        return cls(grid, np.full((grid.nx, grid.ny), float(value)))

    @classmethod
    def from_function(cls, grid: BaseGrid, fn) -> "SurfaceProfile":
        X, Y = np.meshgrid(grid.node_x(), grid.node_y(), indexing="ij")
        return cls(grid, np.asarray(fn(X, Y), dtype=float))


@dataclass(frozen=True, eq=False)
class ColumnQuadrature:
    """Horizontal quadrature: one vertical column per point.

    ``nodes`` is set for the nodal rule, where every point is a grid node and
    the column height is read directly from the node value.
    """

    points: np.ndarray
    weights: np.ndarray
    nodes: np.ndarray | None = field(default=None)

    def __len__(self):
        return len(self.weights)

    def heights(self, profile: SurfaceProfile) -> np.ndarray:
        if self.nodes is not None:
            return profile.heights.ravel()[self.nodes]
        return eval_height(profile, self.points[:, 0], self.points[:, 1])


def volume(profile: SurfaceProfile) -> float:
    # per-cell exact integral of the bilinear interpolant == trapezoid rule
    return float(np.sum(profile.grid.trapezoid_weights() * profile.heights))


def normalize_volume(profile: SurfaceProfile, target: float = 1.0) -> SurfaceProfile:
    vol = volume(profile)
    if vol == 0.0:
        raise ZeroVolume("cannot normalise a profile of zero volume")
    if vol < 0:
        raise ZeroVolume(f"profile has negative volume {vol}")
    return SurfaceProfile(profile.grid, profile.heights * (target / vol))


def eval_height(profile: SurfaceProfile, x1, x2):
    """Bilinear interpolation of node heights; accepts scalars or arrays."""
    g = profile.grid
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if np.any((x1 < 0) | (x1 > g.lx) | (x2 < 0) | (x2 > g.ly)) or not (
        np.all(np.isfinite(x1)) and np.all(np.isfinite(x2))
    ):
        raise OutOfBase("query point outside the closed base")
    u = x1 / g.dx
    v = x2 / g.dy
    i = np.clip(np.floor(u).astype(int), 0, g.nx - 2)
    j = np.clip(np.floor(v).astype(int), 0, g.ny - 2)
    s = u - i
    t = v - j
    H = profile.heights
    out = (
        (1 - s) * (1 - t) * H[i, j]
        + s * (1 - t) * H[i + 1, j]
        + (1 - s) * t * H[i, j + 1]
        + s * t * H[i + 1, j + 1]
    )
    return float(out) if out.ndim == 0 else out


def column_quadrature(grid: BaseGrid) -> ColumnQuadrature:
    """Tensor-product midpoint rule with ``qx*qy`` sub-cells per grid cell."""
    hx = grid.dx / grid.qx
    hy = grid.dy / grid.qy
    px = (np.arange((grid.nx - 1) * grid.qx) + 0.5) * hx
    py = (np.arange((grid.ny - 1) * grid.qy) + 0.5) * hy
    X, Y = np.meshgrid(px, py, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return ColumnQuadrature(pts, np.full(len(pts), hx * hy))


def nodal_quadrature(grid: BaseGrid) -> ColumnQuadrature:
    """Columns at the grid nodes with trapezoid weights.

    With this rule the volume constraint and the nodal surface-pressure update
    are the exact optimality conditions of the discrete surface problem.
    """
    w = grid.trapezoid_weights().ravel()
    return ColumnQuadrature(grid.nodes(), w, nodes=np.arange(grid.nx * grid.ny))


def make_quadrature(grid: BaseGrid, rule: str = "nodal") -> ColumnQuadrature:
    if rule == "nodal":
        return nodal_quadrature(grid)
    if rule == "midpoint":
        return column_quadrature(grid)
    raise ValueError(f"unknown quadrature rule {rule!r}")


def is_admissible(profile: SurfaceProfile, tol: float = 1e-10) -> bool:
    return bool(np.all(profile.heights >= 0) and abs(volume(profile) - 1.0) <= tol)


SURFACE_HEADER = ["i", "j", "x1", "x2", "h"]


def fmt_float(v) -> str:
    """17 significant digits: round-trips every double."""
    return f"{float(v):.16e}"


def write_surface_csv(path, profile: SurfaceProfile) -> None:
    g = profile.grid
    xs, ys = g.node_x(), g.node_y()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SURFACE_HEADER)
        for i in range(g.nx):
            for j in range(g.ny):
                w.writerow([i, j, fmt_float(xs[i]), fmt_float(ys[j]), fmt_float(profile.heights[i, j])])


def read_surface_csv(path, grid: BaseGrid) -> SurfaceProfile:
    H = np.full((grid.nx, grid.ny), np.nan)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != SURFACE_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in reader:
            H[int(row[0]), int(row[1])] = float(row[4])
    if np.isnan(H).any():
        raise ValueError(f"{path}: missing grid nodes for a {grid.nx}x{grid.ny} grid")
    return SurfaceProfile(grid, H)
