"""Brute-force reference solutions, independent of the envelope and Newton machinery.

* ``voxel_transport``: the fluid is chopped into voxels and the discrete
  transport problem to the atoms is solved as a linear programme.
* ``matching_by_enumeration``: exact assignment by enumerating permutations.
* ``lattice_surface_search``: exhaustive search over D4-symmetric surface
  profiles on a level lattice, for atoms stacked over the base centre, where
  the inner transport problem has a closed form (horizontal layers).
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .domain import BaseGrid, SurfaceProfile, make_quadrature
from .errors import TooLarge
from .measures import GeostrophicMeasure, solve_transport_lp
from .transport import cost_e

MAX_ENUMERATION = 8


def voxelize(profile: SurfaceProfile, layers: int = 100):
    """Voxel midpoints and masses: every node column cut into ``layers`` equal slabs."""
    quad = make_quadrature(profile.grid, "nodal")
    H = quad.heights(profile)
    z = (np.arange(layers) + 0.5) / layers
    pts = np.column_stack([np.repeat(quad.points, layers, axis=0), (H[:, None] * z[None, :]).ravel()])
    mass = np.repeat(quad.weights * H / layers, layers)
    keep = mass > 0
    return pts[keep], mass[keep]


def squared_euclidean_half(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    return 0.5 * np.sum((x - y) ** 2, axis=-1)


def voxel_transport(profile: SurfaceProfile, nu: GeostrophicMeasure, layers: int = 100, cost=cost_e):
    """Optimal cost and plan from the voxelised fluid to ``nu`` (scaled to the fluid volume).

    Returns ``(value, plan, voxel_points)``.
    """
    pts, mass = voxelize(profile, layers)
    C = cost(pts[:, None, :], nu.points[None, :, :])
    value, plan = solve_transport_lp(mass, nu.weights * mass.sum(), C)
    return value, plan, pts


def matching_by_enumeration(x: np.ndarray, y: np.ndarray, cost=cost_e) -> tuple[float, np.ndarray]:
    """Minimum-cost perfect matching ``x[k] -> y[perm[k]]`` by trying every permutation."""
    m = len(x)
    if m != len(y):
        raise ValueError("matching needs equal sizes")
    if m > MAX_ENUMERATION:
        raise TooLarge(f"enumeration limited to {MAX_ENUMERATION} points")
    C = cost(x[:, None, :], y[None, :, :])
    perms = np.array(list(itertools.permutations(range(m))))
    totals = C[np.arange(m)[None, :], perms].sum(axis=1)
    best = int(np.argmin(totals))
    return float(totals[best]), perms[best]


# ---------------------------------------------------------------------------
# exhaustive free-surface search


def d4_orbits(grid: BaseGrid) -> np.ndarray:
    """Orbit label of every node under the symmetries of a square node grid."""
    if grid.nx != grid.ny or grid.lx != grid.ly:
        raise ValueError("D4 symmetry needs a square grid")
    n = grid.nx
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    fi, fj = np.minimum(i, n - 1 - i), np.minimum(j, n - 1 - j)
    a, b = np.minimum(fi, fj), np.maximum(fi, fj)
    keys = a * n + b
    _, labels = np.unique(keys.ravel(), return_inverse=True)
    return labels.reshape(n, n)


def _stacked(nu: GeostrophicMeasure, grid: BaseGrid) -> np.ndarray:
    centre = np.array([0.5 * grid.lx, 0.5 * grid.ly])
    if not np.allclose(nu.points[:, :2], centre, atol=1e-14, rtol=0):
        raise ValueError("lattice oracle needs every atom above the base centre")
    return np.argsort(nu.points[:, 2], kind="stable")  # bottom to top


class _OrbitCost:
    """Closed-form inner-optimal cost for stacked atoms and orbit-constant heights."""

    def __init__(self, nu: GeostrophicMeasure, grid: BaseGrid):
        order = _stacked(nu, grid)
        self.y3 = nu.points[order, 2]
        self.cum = np.cumsum(nu.weights[order])[:-1]
        labels = d4_orbits(grid).ravel()
        w = grid.trapezoid_weights().ravel()
        X = grid.nodes()
        r2 = 0.5 * np.sum((X - np.array([0.5 * grid.lx, 0.5 * grid.ly])) ** 2, axis=1)
        k = labels.max() + 1
        self.W = np.bincount(labels, weights=w, minlength=k)
        self.A = np.bincount(labels, weights=w * r2, minlength=k)
        self.labels = labels

    def __call__(self, h: np.ndarray) -> np.ndarray:
        """``h``: (m, n_orbits) unit-volume orbit heights; returns (m,) costs."""
        cost = h @ self.A
        if len(self.cum) == 0:
            return cost - self.y3[0] * 0.5 * ((h * h) @ self.W)
        # layer interfaces z_k solve sum_o W_o min(h_o, z) = cum_k
        order = np.argsort(h, axis=1)
        hs = np.take_along_axis(h, order, axis=1)
        Ws = self.W[order]
        below = np.cumsum(Ws * hs, axis=1) - Ws * hs  # sum_{j<k} W_j h_j
        above = np.cumsum(Ws[:, ::-1], axis=1)[:, ::-1]  # sum_{j>=k} W_j
        cap = below + hs * above  # captured volume at z = hs[:, k]
        prev_sq = np.zeros(len(h))
        total = np.zeros(len(h))
        for k, c in enumerate(self.cum):
            seg = np.argmax(cap >= c - 1e-15, axis=1)
            rows = np.arange(len(h))
            z = (c - below[rows, seg]) / above[rows, seg]
            sq = (np.minimum(h, z[:, None]) ** 2) @ self.W
            total += self.y3[k] * 0.5 * (sq - prev_sq)
            prev_sq = sq
        top = (h * h) @ self.W
        total += self.y3[-1] * 0.5 * (top - prev_sq)
        return cost - total

    def profile_cost(self, heights: np.ndarray) -> float:
        h = np.bincount(self.labels, weights=heights.ravel()) / np.bincount(self.labels)
        return float(self(h[None, :])[0])


def lattice_surface_search(nu: GeostrophicMeasure, grid: BaseGrid, levels: int = 16, chunk: int = 1 << 19) -> dict:
    """Minimise the free-surface Hamiltonian over all D4-symmetric lattice profiles.

    Orbit heights take values ``k * unit`` with ``k`` in ``0..levels-1`` and
    ``unit`` fixing unit volume.
    """
    oc = _OrbitCost(nu, grid)
    m = len(oc.W)
    total = levels**m
    best_cost, best_k = math.inf, None
    base = levels ** np.arange(m - 1, -1, -1)
    for start in range(1, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        K = (idx[:, None] // base[None, :]) % levels
        vol = K @ oc.W
        h = K / vol[:, None]
        c = oc(h)
        j = int(np.argmin(c))
        if c[j] < best_cost:
            best_cost, best_k = float(c[j]), K[j]
    best_h = best_k / float(best_k @ oc.W)
    return {
        "cost": best_cost,
        "levels": best_k.tolist(),
        "orbit_heights": best_h.tolist(),
        "heights": best_h[oc.labels].reshape(grid.nx, grid.ny),
        "n_profiles": int(total - 1),
    }


def round_to_lattice(heights: np.ndarray, grid: BaseGrid, levels: int = 16) -> np.ndarray:
    """Nearest lattice profile (orbit-averaged, top level at the maximum height)."""
    labels = d4_orbits(grid).ravel()
    h = np.bincount(labels, weights=heights.ravel()) / np.bincount(labels)
    k = np.rint((levels - 1) * h / h.max())
    W = np.bincount(labels, weights=grid.trapezoid_weights().ravel())
    return (k / (k @ W))[labels].reshape(grid.nx, grid.ny)


def lattice_cost(nu: GeostrophicMeasure, grid: BaseGrid, heights: np.ndarray) -> float:
    return _OrbitCost(nu, grid).profile_cost(heights)
