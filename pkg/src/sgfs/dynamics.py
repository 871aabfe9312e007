"""Time integration of the geostrophic particle dynamics.

Each atom moves with ``U_i = J (y_i - c_i)`` where ``c_i`` is the barycenter
of its Laguerre cell on the current optimal free surface.  Every stage of the
explicit integrator re-solves the free surface and dual problem, warm-started
from the previous stage.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .domain import BaseGrid
from .errors import EmptyCell, SGFSError, StageFailure
from .freesurface import FreeSurfaceSolution, SolverConfig, solve_free_surface
from .measures import GeostrophicMeasure

J = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
J.setflags(write=False)

SCHEMES = ("euler", "heun", "rk4")


@dataclass(frozen=True, eq=False)
class SimulationState:
    t: float
    measure: GeostrophicMeasure
    solution: FreeSurfaceSolution
    step_index: int = 0


def _velocity(nu: GeostrophicMeasure, sol: FreeSurfaceSolution, tol_mass: float) -> np.ndarray:
    tess = sol.tessellation
    if np.any(tess.mass < tol_mass):
        raise EmptyCell("a particle owns (almost) no fluid; state is inconsistent")
    d = nu.points - tess.barycenter
    # J maps (d1, d2, d3) -> (-d2, d1, 0); written out so the third component is an exact zero
    return np.column_stack([-d[:, 1], d[:, 0], np.zeros(len(d))])


def geostrophic_velocity(state: SimulationState, tol_mass: float = 1e-9) -> np.ndarray:
    return _velocity(state.measure, state.solution, tol_mass)


def solve_state(
    nu: GeostrophicMeasure,
    grid: BaseGrid,
    config: SolverConfig,
    warm: FreeSurfaceSolution | None = None,
) -> FreeSurfaceSolution:
    if warm is None:
        return solve_free_surface(nu, grid, None, config)
    return solve_free_surface(nu, grid, warm.profile, config, psi0=warm.dual)


def _moved(nu: GeostrophicMeasure, pts: np.ndarray) -> GeostrophicMeasure:
    box = np.array([np.minimum(nu.box[0], pts.min(axis=0)), np.maximum(nu.box[1], pts.max(axis=0))])
    return GeostrophicMeasure(pts, nu.weights, box)


def step(
    state: SimulationState,
    dt: float,
    grid: BaseGrid,
    config: SolverConfig = SolverConfig(),
    scheme: str = "heun",
) -> SimulationState:
    """Advance by ``dt`` with an explicit Runge-Kutta scheme."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    nu0 = state.measure
    y0 = nu0.points
    warm = state.solution

    def stage(name, pts):
        nonlocal warm
        nu = _moved(nu0, pts)
        try:
            sol = solve_state(nu, grid, config, warm)
        except SGFSError as exc:
            raise StageFailure(f"stage {name} of step {state.step_index + 1} failed: {exc}", name, exc) from exc
        warm = sol
        return nu, sol, _velocity(nu, sol, config.tol_mass)

    k1 = _velocity(nu0, state.solution, config.tol_mass)
    if scheme == "euler":
        pts = y0 + dt * k1
    elif scheme == "heun":
        _, _, k2 = stage("heun-2", y0 + dt * k1)
        pts = y0 + 0.5 * dt * (k1 + k2)
    else:
        _, _, k2 = stage("rk4-2", y0 + 0.5 * dt * k1)
        _, _, k3 = stage("rk4-3", y0 + 0.5 * dt * k2)
        _, _, k4 = stage("rk4-4", y0 + dt * k3)
        pts = y0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    nu, sol, _ = stage("final", pts)
    return SimulationState(state.t + dt, nu, sol, state.step_index + 1)


def initial_state(nu0: GeostrophicMeasure, grid: BaseGrid, config: SolverConfig = SolverConfig()) -> SimulationState:
    return SimulationState(0.0, nu0, solve_free_surface(nu0, grid, None, config), 0)


def integrate(state: SimulationState, dt: float, n_steps: int, grid: BaseGrid, config=SolverConfig(), scheme="heun"):
    """Yield successive states (not including ``state`` itself)."""
    for _ in range(n_steps):
        state = step(state, dt, grid, config, scheme)
        yield state


def with_solution(state: SimulationState, sol: FreeSurfaceSolution) -> SimulationState:
    return replace(state, solution=sol)
