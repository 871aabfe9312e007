"""Outer minimisation over surface profiles: the free-surface Hamiltonian.

For fixed dual weights the optimal surface satisfies the surface-pressure
condition ``P(x1, x2, h) + delta = (x1^2 + x2^2)/2`` with a scalar ``delta``
fixing the volume.  Since ``P`` is the maximum of affine functions of ``x3``
the root is available in closed form per node.  The outer loop alternates
dual solves and surface updates, with a backtracking guard that keeps the
inner-optimal cost non-increasing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .domain import BaseGrid, ColumnQuadrature, SurfaceProfile, make_quadrature, normalize_volume, volume
from .errors import GaugeFailure, MixedStratification, NoBracket, NoConvergence
from .measures import GeostrophicMeasure
from .transport import (
    DualState,
    LaguerreTessellation,
    build_tessellation,
    dual_value,
    solve_dual,
    transport_cost,
)

log = logging.getLogger(__name__)

LOG_HEADER = ["outer_iter", "cost", "mass_residual", "surface_residual", "delta_gauge"]


@dataclass(frozen=True)
class SolverConfig:
    tol_mass: float = 1e-9
    max_iter: int = 500
    eps_floor: float = 0.1
    tol_surface: float = 1e-7
    max_outer: int = 200
    z_max_factor: float = 10.0
    quadrature: str = "nodal"
    max_halvings: int = 20


@dataclass(eq=False)
class FreeSurfaceSolution:
    profile: SurfaceProfile
    dual: DualState
    hamiltonian: float
    tessellation: LaguerreTessellation
    delta: float
    mass_residual: float
    surface_residual: float
    outer_iterations: int
    history: list = field(default_factory=list)


def stratification_sign(nu: GeostrophicMeasure) -> int:
    y3 = nu.points[:, 2]
    if np.all(y3 > 0):
        return 1
    if np.all(y3 < 0):
        return -1
    raise MixedStratification("all vertical coordinates must share one strict sign")


def _node_offsets(nu: GeostrophicMeasure, dual: DualState, grid: BaseGrid) -> np.ndarray:
    """``beta[node, i] = x_h . y_ih + kappa_i - |x_h|^2 / 2``."""
    Y = nu.points
    X = grid.nodes()
    kappa = dual.psi - 0.5 * (Y[:, 0] ** 2 + Y[:, 1] ** 2)
    return X @ Y[:, :2].T + kappa[None, :] - 0.5 * np.sum(X * X, axis=1)[:, None]


def _roots(beta: np.ndarray, y3: np.ndarray, sign: int, delta: float) -> np.ndarray:
    # max_i(beta_i + delta + z*y3_i) = 0; each line crosses zero at r_i
    r = -(beta + delta) / y3[None, :]
    return r.min(axis=1) if sign > 0 else r.max(axis=1)


def surface_update(
    nu: GeostrophicMeasure,
    dual: DualState,
    grid: BaseGrid,
    z_max: float | None = None,
    target: float = 1.0,
) -> tuple[SurfaceProfile, float]:
    """Profile satisfying the surface-pressure condition with unit volume.

    Returns ``(profile, delta)``.
    """
    sign = stratification_sign(nu)
    y3 = nu.points[:, 2]
    beta = _node_offsets(nu, dual, grid)
    wts = grid.trapezoid_weights().ravel()
    if z_max is None:
        z_max = 10.0 / grid.area

    def vol(delta):
        return float(np.sum(wts * np.maximum(_roots(beta, y3, sign, delta), 0.0))) - target

    # volume is monotone in delta: increasing for sign < 0, decreasing for sign > 0
    step = 1.0 + float(np.max(np.abs(beta)))
    lo, hi = -step, step
    for _ in range(200):
        vlo, vhi = vol(lo), vol(hi)
        if vlo * vhi <= 0:
            break
        lo, hi = lo * 2, hi * 2
    else:
        raise GaugeFailure("no volume-fixing gauge shift found")
    if vlo == 0:
        delta = lo
    elif vhi == 0:
        delta = hi
    else:
        delta = brentq(vol, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    h = np.maximum(_roots(beta, y3, sign, delta), 0.0)
    if np.max(h) > z_max:
        raise NoBracket(f"surface root {np.max(h):.4g} above the vertical bound {z_max:.4g}")
    prof = SurfaceProfile(grid, h.reshape(grid.nx, grid.ny))
    # remove the brentq residual exactly
    return normalize_volume(prof, target), float(delta)


def surface_residual(nu: GeostrophicMeasure, dual: DualState, profile: SurfaceProfile, delta: float) -> float:
    """Max over wet nodes of ``|P(x, h) + delta - |x_h|^2/2|``."""
    beta = _node_offsets(nu, dual, profile.grid)
    h = profile.heights.ravel()
    g = np.max(beta + h[:, None] * nu.points[None, :, 2], axis=1) + delta
    wet = h > 0
    return float(np.max(np.abs(g[wet]))) if np.any(wet) else 0.0


def solve_free_surface(
    nu: GeostrophicMeasure,
    grid: BaseGrid,
    init: SurfaceProfile | None = None,
    config: SolverConfig = SolverConfig(),
    psi0: DualState | None = None,
    quad: ColumnQuadrature | None = None,
) -> FreeSurfaceSolution:
    stratification_sign(nu)
    if quad is None:
        quad = make_quadrature(grid, config.quadrature)
    if init is None:
        init = SurfaceProfile.constant(grid)
    h = normalize_volume(init)
    z_max = config.z_max_factor / grid.area

    def inner(profile, psi):
        dual, tess, info = solve_dual(
            profile, quad, nu, psi, config.tol_mass, config.max_iter, config.eps_floor, return_info=True
        )
        return dual, tess, info.residual

    dual, tess, mres = inner(h, psi0)
    value = dual_value(tess, nu, dual)
    history = []
    delta = np.nan
    for it in range(1, config.max_outer + 1):
        h_new, delta = surface_update(nu, dual, grid, z_max)
        change = float(np.max(np.abs(h_new.heights - h.heights)))
        sres = surface_residual(nu, dual, h, delta)
        history.append((it, transport_cost(tess), mres, sres, delta))
        if change <= config.tol_surface and mres <= config.tol_mass:
            return FreeSurfaceSolution(
                profile=h,
                dual=dual,
                hamiltonian=transport_cost(tess),
                tessellation=tess,
                delta=delta,
                mass_residual=mres,
                surface_residual=sres,
                outer_iterations=it,
                history=history,
            )
        # backtrack toward the current profile until the inner-optimal cost does not increase
        t = 1.0
        slack = 1e-12 * max(1.0, abs(value))
        for _ in range(config.max_halvings + 1):
            cand = SurfaceProfile(grid, h.heights + t * (h_new.heights - h.heights))
            cdual, ctess, cres = inner(cand, dual)
            cval = dual_value(ctess, nu, cdual)
            if cval <= value + slack:
                break
            t *= 0.5
        else:
            raise NoConvergence(
                f"surface step rejected after {config.max_halvings} halvings at outer iteration {it}",
                best=(h, dual),
                history=history,
            )
        h, dual, tess, mres, value = cand, cdual, ctess, cres, cval
    raise NoConvergence(
        f"free surface did not converge in {config.max_outer} outer iterations", best=(h, dual), history=history
    )


def evaluate_A_hamiltonian(nu: GeostrophicMeasure, grid: BaseGrid, config: SolverConfig = SolverConfig()) -> float:
    return solve_free_surface(nu, grid, None, config).hamiltonian


def initial_surface(nu0: GeostrophicMeasure, grid: BaseGrid, config: SolverConfig = SolverConfig()) -> SurfaceProfile:
    return solve_free_surface(nu0, grid, SurfaceProfile.constant(grid), config).profile


def a_stability_residual(sol: FreeSurfaceSolution, nu: GeostrophicMeasure, config: SolverConfig = SolverConfig()):
    """Change in the inner-optimal cost when the dual problem is re-solved on the converged surface."""
    quad = make_quadrature(sol.profile.grid, config.quadrature)
    dual = solve_dual(sol.profile, quad, nu, None, config.tol_mass, config.max_iter, config.eps_floor)
    tess = build_tessellation(sol.profile, quad, nu, dual)
    return abs(transport_cost(tess) - sol.hamiltonian)


def check_volume(profile: SurfaceProfile) -> float:
    return volume(profile)
