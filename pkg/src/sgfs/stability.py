"""Audits of the stability, convexity and Hamiltonian structure of solved states."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import BaseGrid, eval_height, make_quadrature
from .freesurface import FreeSurfaceSolution, SolverConfig, solve_free_surface
from .measures import GeostrophicMeasure, optimal_plan, perturb
from .transport import ConvexPotential

SUPPORT_WIDTHS = 6.0


@dataclass(frozen=True, eq=False)
class TestField:
    """Sum of Gaussian bumps ``G_k(y) = exp(-|y - c_k|^2 / w_k^2)``.

    Vector field: ``Phi(y) = sum_k a_k G_k(y)``.
    Scalar potential: ``phi(y) = g . y + sum_k (a_k . (y - c_k)) G_k(y)``, whose
    gradient at a bump centre equals that bump's amplitude.  The optional
    ``linear`` vector ``g`` gives a constant-gradient part.

    A ``planar`` field ignores the vertical coordinate (cylindrical bumps with
    horizontal amplitudes), so its gradient has no vertical component.
    """

    __test__ = False  # not a pytest class

    centres: np.ndarray
    widths: np.ndarray
    amplitudes: np.ndarray
    linear: np.ndarray | None = field(default=None)
    planar: bool = False

    def __post_init__(self):
        c = np.array(self.centres, dtype=float).reshape(-1, 3)
        w = np.array(self.widths, dtype=float).reshape(-1)
        a = np.array(self.amplitudes, dtype=float).reshape(-1, 3)
        if not (len(c) == len(w) == len(a)):
            raise ValueError("one width and amplitude per centre")
        if np.any(w <= 0):
            raise ValueError("bump widths must be positive")
        object.__setattr__(self, "centres", c)
        object.__setattr__(self, "widths", w)
        object.__setattr__(self, "amplitudes", a)
        if self.linear is not None:
            object.__setattr__(self, "linear", np.asarray(self.linear, dtype=float).reshape(3))
        if self.planar:
            a[:, 2] = 0.0
            if self.linear is not None and self.linear[2] != 0:
                raise ValueError("a planar field needs a horizontal linear part")

    @classmethod
    def constant_gradient(cls, g) -> "TestField":
        return cls(np.zeros((0, 3)), np.zeros(0), np.zeros((0, 3)), g)

    @classmethod
    def random(cls, rng, n_bumps, lo, hi, width, amplitude=1.0, planar=False) -> "TestField":
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        c = lo + (hi - lo) * rng.random((n_bumps, 3))
        a = amplitude * rng.standard_normal((n_bumps, 3))
        w = width * (0.75 + 0.5 * rng.random(n_bumps))
        return cls(c, w, a, planar=planar)

    def scaled(self, factor: float) -> "TestField":
        lin = None if self.linear is None else factor * self.linear
        return TestField(self.centres, self.widths, factor * self.amplitudes, lin, self.planar)

    def _gauss(self, y):
        r = y[:, None, :] - self.centres[None, :, :]
        if self.planar:
            r[:, :, 2] = 0.0
        return r, np.exp(-np.sum(r * r, axis=2) / self.widths[None, :] ** 2)

    def field(self, y) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, float))
        _, G = self._gauss(y)
        return G @ self.amplitudes

    def potential(self, y) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, float))
        r, G = self._gauss(y)
        out = np.sum(np.einsum("nkd,kd->nk", r, self.amplitudes) * G, axis=1)
        if self.linear is not None:
            out = out + y @ self.linear
        return out

    def grad(self, y) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, float))
        r, G = self._gauss(y)
        ar = np.einsum("nkd,kd->nk", r, self.amplitudes)
        out = G @ self.amplitudes - 2.0 * np.einsum("nk,nkd->nd", ar * G / self.widths[None, :] ** 2, r)
        if self.linear is not None:
            out = out + self.linear
        return out



def energy_bb(nu: GeostrophicMeasure, sol: FreeSurfaceSolution) -> float:
    """Geostrophic energy: kinetic part plus ``x3 * y3`` potential part, from stored cell moments."""
    tess = sol.tessellation
    return float(np.sum(tess.horiz_cost) + np.dot(nu.points[:, 2], tess.moment[:, 2]))


def energy_identity_residual(nu: GeostrophicMeasure, sol: FreeSurfaceSolution) -> float:
    tess = sol.tessellation
    cost = float(np.sum(tess.cell_cost))
    return abs(energy_bb(nu, sol) - cost - 2.0 * float(np.dot(nu.points[:, 2], tess.moment[:, 2])))


def sample_fluid(profile, n: int, rng) -> np.ndarray:
    """Uniform-in-column samples: horizontal uniform on the base, vertical uniform under the surface."""
    g = profile.grid
    x1 = g.lx * rng.random(n)
    x2 = g.ly * rng.random(n)
    h = eval_height(profile, x1, x2)
    return np.column_stack([x1, x2, h * rng.random(n)])


def check_gradient_monotonicity(
    nu: GeostrophicMeasure, sol: FreeSurfaceSolution, n_pairs: int = 1000, seed: int = 0, tol: float = 1e-10
) -> dict:
    rng = np.random.default_rng(seed)
    pot = ConvexPotential.from_dual(nu, sol.dual)
    x = sample_fluid(sol.profile, n_pairs, rng)
    xp = sample_fluid(sol.profile, n_pairs, rng)
    vals = np.sum((pot.grad(x) - pot.grad(xp)) * (x - xp), axis=1)
    bad = np.flatnonzero(vals < -tol)

    # the gradient evaluator must agree with the tessellation owners
    tess = sol.tessellation
    quad_pts = make_quadrature(sol.profile.grid, "nodal").points
    keep = tess.hi > tess.lo
    mids = np.column_stack([quad_pts[tess.column[keep]], 0.5 * (tess.lo[keep] + tess.hi[keep])])
    mismatch = int(np.count_nonzero(pot.argmax(mids) != tess.owner[keep])) if len(mids) else 0

    mass_res = float(np.max(np.abs(tess.mass - nu.weights * tess.source_volume)))
    return {
        "n_pairs": int(n_pairs),
        "min_value": float(vals.min()) if len(vals) else 0.0,
        "violations": [
            {"x": x[i].tolist(), "x_prime": xp[i].tolist(), "value": float(vals[i])} for i in bad[:20]
        ],
        "n_violations": int(len(bad)),
        "owner_mismatches": mismatch,
        "mass_residual": mass_res,
        "tolerance": tol,
        "passed": bool(len(bad) == 0 and mismatch == 0),
    }


def _smoothed_hessians(pot: ConvexPotential, x: np.ndarray, temperature: float) -> np.ndarray:
    """Hessians of the log-sum-exp smoothing ``tau * log sum exp(l_i / tau)``.

    The Hessian is the softmax covariance of the slopes divided by ``tau``,
    positive semi-definite by construction.
    """
    A = pot.affine(x) / temperature
    A -= A.max(axis=1, keepdims=True)
    p = np.exp(A)
    p /= p.sum(axis=1, keepdims=True)
    Y = pot.slopes
    mean = p @ Y
    second = np.einsum("ni,id,ie->nde", p, Y, Y)
    return (second - np.einsum("nd,ne->nde", mean, mean)) / temperature


def smoothing_temperature(nu: GeostrophicMeasure, smoothing: float) -> float:
    # interface transition width in x is temperature / |y_i - y_j|
    Y = nu.points
    span = float(np.max(np.linalg.norm(Y[:, None, :] - Y[None, :, :], axis=2))) if len(Y) > 1 else 1.0
    return smoothing * max(span, 1e-12)


def second_inner_variation(
    nu: GeostrophicMeasure,
    sol: FreeSurfaceSolution,
    phi: TestField,
    psi: TestField,
    smoothing: float,
    n_vertical: int = 8,
) -> float:
    """Estimate of ``int Phi . D^2 P Psi`` over the fluid with ``P`` smoothed at length ``smoothing``."""
    if not smoothing > 0:
        raise ValueError("smoothing must be positive")
    pot = ConvexPotential.from_dual(nu, sol.dual)
    quad = make_quadrature(sol.profile.grid, "nodal")
    H = quad.heights(sol.profile)
    gz, gw = np.polynomial.legendre.leggauss(n_vertical)
    gz = 0.5 * (gz + 1.0)
    gw = 0.5 * gw
    wet = H > 0
    cols = quad.points[wet]
    Hc = H[wet]
    z = Hc[:, None] * gz[None, :]
    w = (quad.weights[wet] * Hc)[:, None] * gw[None, :]
    x = np.column_stack([np.repeat(cols, n_vertical, axis=0), z.ravel()])
    A = _smoothed_hessians(pot, x, smoothing_temperature(nu, smoothing))
    integrand = np.einsum("nd,nde,ne->n", phi.field(x), A, psi.field(x))
    return float(np.sum(w.ravel() * integrand))


def field_norm(phi: TestField, sol: FreeSurfaceSolution) -> float:
    """Squared L2 norm of the vector field over the fluid (same quadrature as the variation)."""
    quad = make_quadrature(sol.profile.grid, "nodal")
    H = quad.heights(sol.profile)
    gz, gw = np.polynomial.legendre.leggauss(8)
    gz, gw = 0.5 * (gz + 1.0), 0.5 * gw
    x = np.column_stack([np.repeat(quad.points, 8, axis=0), (H[:, None] * gz[None, :]).ravel()])
    w = ((quad.weights * H)[:, None] * gw[None, :]).ravel()
    return float(np.sum(w * np.sum(phi.field(x) ** 2, axis=1)))


def check_subdifferential_inequality(
    mu: GeostrophicMeasure, nu: GeostrophicMeasure, grid: BaseGrid, config: SolverConfig = SolverConfig()
) -> dict:
    """Audit ``-H(nu) + H(mu) >= sum gamma_jk xi_j . (y'_k - y_j) - W2^2/2``.

    ``xi_j = c_j(mu) - (y_j1, y_j2, 0)`` is the candidate subgradient of ``-H``
    at ``mu``; the opposite sign is reported for comparison.
    """
    sol_mu = solve_free_surface(mu, grid, None, config)
    sol_nu = solve_free_surface(nu, grid, None, config)
    w2sq, plan = optimal_plan(mu, nu)
    Ymu = mu.points
    c = sol_mu.tessellation.barycenter
    xi = c - Ymu * np.array([1.0, 1.0, 0.0])
    disp = nu.points[None, :, :] - Ymu[:, None, :]
    pair = np.einsum("jk,jkd,jd->", plan, disp, xi)
    lhs = -sol_nu.hamiltonian + sol_mu.hamiltonian
    rhs = pair - 0.5 * w2sq
    rhs_flipped = -pair - 0.5 * w2sq
    return {
        "H_mu": sol_mu.hamiltonian,
        "H_nu": sol_nu.hamiltonian,
        "w2_squared": float(w2sq),
        "lhs": float(lhs),
        "rhs": float(rhs),
        "slack": float(lhs - rhs),
        "slack_opposite_sign": float(lhs - rhs_flipped),
        "convention": "xi = c - (I - e3 x e3) y",
    }


def check_h1_growth(nu: GeostrophicMeasure, sol: FreeSurfaceSolution) -> dict:
    """Empirical growth constant of the velocity field, ``max |J(y - c)| / (1 + |y|)``.

    ``J`` discards the vertical offset, so only ``(y - c)`` in the horizontal counts.
    """
    c = sol.tessellation.barycenter
    Y = nu.points
    ratio = np.linalg.norm((Y - c)[:, :2], axis=1) / (1.0 + np.linalg.norm(Y, axis=1))
    g = sol.profile.grid
    radius = float(np.max(np.linalg.norm(Y, axis=1)))
    diameter = float(np.sqrt(g.lx**2 + g.ly**2 + np.max(sol.profile.heights) ** 2))
    c0 = float(ratio.max())
    bound = radius + diameter
    return {"C0": c0, "bound": bound, "passed": bool(np.isfinite(c0) and c0 <= bound)}


def check_h2_stability(
    nu: GeostrophicMeasure,
    grid: BaseGrid,
    phi: TestField,
    config: SolverConfig = SolverConfig(),
    n_levels: int = 8,
    growth: float = 1.5,
    scale: float = 1.0,
) -> dict:
    """Solve along ``nu_j = perturb(nu, phi, scale * 2^-j)`` and track velocity and surface deltas."""
    from .dynamics import _velocity  # local import: dynamics depends on this module's siblings only

    base = solve_free_surface(nu, grid, None, config)
    U = _velocity(nu, base, config.tol_mass)
    s_list, du, dh = [], [], []
    for j in range(1, n_levels + 1):
        s = scale * 2.0**-j
        nj = perturb(nu, phi, s)
        if np.array_equal(nj.points, nu.points):
            sol = base  # nothing moved; a warm re-solve would only add rounding noise
        else:
            sol = solve_free_surface(nj, grid, base.profile, config, psi0=base.dual)
        Uj = _velocity(nj, sol, config.tol_mass)
        s_list.append(s)
        du.append(float(np.max(np.linalg.norm(Uj - U, axis=1))))
        dh.append(float(np.max(np.abs(sol.profile.heights - base.profile.heights))))
    floor = 1e-12

    def decays(seq):
        return all(b <= growth * a + floor for a, b in zip(seq, seq[1:]))

    return {
        "s": s_list,
        "velocity_deltas": du,
        "surface_deltas": dh,
        "growth_factor": growth,
        "passed": bool(decays(du) and decays(dh)),
    }
