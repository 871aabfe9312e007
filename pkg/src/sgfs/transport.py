"""Semi-discrete optimal transport from the fluid domain to a discrete measure.

Cost ``e(x, y) = 0.5*((x1-y1)^2 + (x2-y2)^2) - x3*y3``.  For a fixed column
``(x1, x2)`` every ``e(x, y_i) - psi_i`` is affine in ``x3``, so the Laguerre
partition of the column is the lower envelope of ``n`` lines and all vertical
integrals are exact.  Only the horizontal direction is quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import ColumnQuadrature, SurfaceProfile
from .errors import DegenerateSource, NoConvergence
from .measures import GeostrophicMeasure


def cost_e(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return 0.5 * ((x[..., 0] - y[..., 0]) ** 2 + (x[..., 1] - y[..., 1]) ** 2) - x[..., 2] * y[..., 2]


@dataclass(frozen=True, eq=False)
class DualState:
    psi: np.ndarray

    def __post_init__(self):
        psi = np.array(self.psi, dtype=float, ndmin=1)
        if not np.all(np.isfinite(psi)):
            raise ValueError("dual weights must be finite")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)

    @classmethod
    def zeros(cls, n: int) -> "DualState":
        return cls(np.zeros(n))

    def gauged(self) -> "DualState":
        """Shift so that ``min(psi) == 0``."""
        return DualState(self.psi - self.psi.min())


@dataclass(frozen=True, eq=False)
class LaguerreTessellation:
    """Column-wise Laguerre partition of the fluid domain.

    Pieces are flat arrays: piece ``k`` is the interval ``[lo[k], hi[k]]`` of
    column ``column[k]`` owned by particle ``owner[k]``.  ``breaks`` lists the
    interior owner changes ``(column, lower owner, upper owner, z)`` used for
    the mass Jacobian.
    """

    n: int
    column: np.ndarray
    owner: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    mass: np.ndarray
    moment: np.ndarray  # (n, 3): integrals of x over each cell
    moment_x3sq: np.ndarray
    horiz_cost: np.ndarray  # integral of 0.5*|x_h - y_h|^2 over each cell
    cell_cost: np.ndarray  # integral of e(x, y_i) over cell i
    breaks: tuple
    source_volume: float

    @property
    def barycenter(self) -> np.ndarray:
        m = self.mass[:, None]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(m > 0, self.moment / np.where(m > 0, m, 1.0), np.nan)

    def intervals(self, col: int):
        """Ordered ``(owner, lo, hi)`` list for one column."""
        sel = np.flatnonzero(self.column == col)
        sel = sel[np.argsort(self.lo[sel], kind="stable")]
        return [(int(self.owner[k]), float(self.lo[k]), float(self.hi[k])) for k in sel]

    def mass_jacobian(self) -> np.ndarray:
        """``d mass_i / d psi_j``: a weighted graph Laplacian (positive diagonal)."""
        L = np.zeros((self.n, self.n))
        coef, below, above = self.breaks[3], self.breaks[1], self.breaks[2]
        np.add.at(L, (below, above), -coef)
        np.add.at(L, (above, below), -coef)
        np.add.at(L, (below, below), coef)
        np.add.at(L, (above, above), coef)
        return L


def _slope_order(b: np.ndarray) -> np.ndarray:
    # steepest descending line first, then lowest index
    return np.lexsort((np.arange(len(b)), -b))


def build_tessellation(
    profile: SurfaceProfile,
    quad: ColumnQuadrature,
    nu: GeostrophicMeasure,
    dual: DualState,
    heights: np.ndarray | None = None,
) -> LaguerreTessellation:
    Y = nu.points
    n = len(Y)
    psi = dual.psi
    X = quad.points
    w = quad.weights
    H = quad.heights(profile) if heights is None else heights
    C = len(w)

    # line_i(z) = a_i - b_i z
    a = 0.5 * ((X[:, None, 0] - Y[None, :, 0]) ** 2 + (X[:, None, 1] - Y[None, :, 1]) ** 2) - psi[None, :]
    b = Y[:, 2]
    order = _slope_order(b)
    rows = np.arange(C)

    owner = order[np.argmin(a[:, order], axis=1)]
    zcur = np.zeros(C)
    active = H > 0

    pc, po, plo, phi = [], [], [], []
    bc, bl, bu, bz = [], [], [], []
    steeper = b[None, :] > b[:, None]  # steeper[k, j]: line j overtakes k from above
    for _ in range(n):
        if not np.any(active):
            break
        cols = rows[active]
        k = owner[cols]
        ak = a[cols, k]
        db = b[None, :] - b[k][:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(steeper[k], (a[cols] - ak[:, None]) / db, np.inf)
        jj = order[np.argmin(t[:, order], axis=1)]
        tz = np.maximum(t[np.arange(len(cols)), jj], zcur[cols])
        top = np.minimum(tz, H[cols])
        pc.append(cols)
        po.append(k)
        plo.append(zcur[cols])
        phi.append(top)
        switch = tz < H[cols]
        sc = cols[switch]
        bc.append(sc)
        bl.append(k[switch])
        bu.append(jj[switch])
        bz.append(tz[switch])
        owner[sc] = jj[switch]
        zcur[sc] = tz[switch]
        active[cols[~switch]] = False

    column = np.concatenate(pc) if pc else np.zeros(0, int)
    own = np.concatenate(po) if po else np.zeros(0, int)
    lo = np.concatenate(plo) if plo else np.zeros(0)
    hi = np.concatenate(phi) if phi else np.zeros(0)

    ww = w[column]
    length = hi - lo
    m0 = ww * length
    m1 = ww * 0.5 * (hi * hi - lo * lo)
    m2 = ww * (hi**3 - lo**3) / 3.0
    xh = X[column]
    mass = np.bincount(own, weights=m0, minlength=n)
    mom = np.column_stack(
        [
            np.bincount(own, weights=m0 * xh[:, 0], minlength=n),
            np.bincount(own, weights=m0 * xh[:, 1], minlength=n),
            np.bincount(own, weights=m1, minlength=n),
        ]
    )
    hq = 0.5 * ((xh[:, 0] - Y[own, 0]) ** 2 + (xh[:, 1] - Y[own, 1]) ** 2)
    horiz = np.bincount(own, weights=m0 * hq, minlength=n)
    mom33 = np.bincount(own, weights=m2, minlength=n)
    cell_cost = horiz - Y[:, 2] * mom[:, 2]

    bcol = np.concatenate(bc) if bc else np.zeros(0, int)
    blo = np.concatenate(bl) if bl else np.zeros(0, int)
    bup = np.concatenate(bu) if bu else np.zeros(0, int)
    bzz = np.concatenate(bz) if bz else np.zeros(0)
    interior = bzz > 0
    bcol, blo, bup, bzz = bcol[interior], blo[interior], bup[interior], bzz[interior]
    coef = w[bcol] / (b[bup] - b[blo])

    return LaguerreTessellation(
        n=n,
        column=column,
        owner=own,
        lo=lo,
        hi=hi,
        mass=mass,
        moment=mom,
        moment_x3sq=mom33,
        horiz_cost=horiz,
        cell_cost=cell_cost,
        breaks=(bcol, blo, bup, coef, bzz),
        source_volume=float(np.sum(w * H)),
    )


def cell_masses(tess: LaguerreTessellation) -> np.ndarray:
    return tess.mass.copy()


def transport_cost(tess: LaguerreTessellation) -> float:
    return float(np.sum(tess.cell_cost))


def dual_value(tess: LaguerreTessellation, nu: GeostrophicMeasure, dual: DualState) -> float:
    return float(np.dot(dual.psi, nu.weights) + np.sum(tess.cell_cost) - np.dot(dual.psi, tess.mass))


def dual_functional(profile, quad, nu, dual) -> float:
    """Kantorovich dual objective; concave in ``psi`` with gradient ``nu - mass``."""
    return dual_value(build_tessellation(profile, quad, nu, dual), nu, dual)


def initial_dual(profile: SurfaceProfile, quad: ColumnQuadrature, nu: GeostrophicMeasure) -> DualState:
    """Dual weights whose cells are the Voronoi cells of a shrunken copy of the atoms.

    ``x.y_i - |q_i|^2/(2 lam)`` with ``q_i = lam*(y_i - ybar) + xbar`` orders like
    ``-|x - q_i|^2``, so placing every ``q_i`` inside the fluid makes every cell
    non-empty in the continuum.
    """
    Y = nu.points
    H = quad.heights(profile)
    w = quad.weights
    vol = float(np.sum(w * H))
    centre = np.array(
        [
            np.sum(w * H * quad.points[:, 0]) / vol,
            np.sum(w * H * quad.points[:, 1]) / vol,
            0.5 * np.sum(w * H * H) / vol,
        ]
    )
    g = profile.grid
    half = np.array([g.lx, g.ly, float(np.sum(w * H)) / g.area]) * 0.5
    ybar = np.average(Y, axis=0, weights=nu.weights)
    spread = np.max(np.abs(Y - ybar), axis=0)
    ratios = [0.5 * half[d] / spread[d] for d in range(3) if spread[d] > 0]
    lam = min(ratios) if ratios else 1.0
    q = lam * (Y - ybar) + centre
    kappa = -np.sum(q * q, axis=1) / (2 * lam)
    psi = kappa + 0.5 * (Y[:, 0] ** 2 + Y[:, 1] ** 2)
    return DualState(psi).gauged()


@dataclass
class DualSolveInfo:
    iterations: int
    residual: float
    history: list


def solve_dual(
    profile: SurfaceProfile,
    quad: ColumnQuadrature,
    nu: GeostrophicMeasure,
    psi0: DualState | None = None,
    tol_mass: float = 1e-9,
    max_iter: int = 500,
    eps_floor: float = 0.1,
    return_info: bool = False,
):
    """Damped Newton ascent on the concave dual until ``max|mass - nu| <= tol_mass``.

    A step is accepted when every cell keeps mass above the floor and the
    residual decreases by the factor ``1 - alpha/2``; otherwise ``alpha`` is halved.
    """
    H = quad.heights(profile)
    vol = float(np.sum(quad.weights * H))
    if not vol > 0:
        raise DegenerateSource(f"source volume {vol} is not positive")
    nu_w = nu.weights
    # compare against the target rescaled to the source volume
    target = nu_w * vol
    n = len(nu)

    if n == 1:
        dual = DualState.zeros(1)
        tess = build_tessellation(profile, quad, nu, dual, H)
        info = DualSolveInfo(0, abs(tess.mass[0] - target[0]), [])
        return (dual, tess, info) if return_info else dual

    dual = psi0 if psi0 is not None and len(psi0.psi) == n else None
    tess = build_tessellation(profile, quad, nu, dual, H) if dual is not None else None
    if dual is None or tess.mass.min() <= 0:
        cand = initial_dual(profile, quad, nu)
        ctess = build_tessellation(profile, quad, nu, cand, H)
        if tess is None or ctess.mass.min() > tess.mass.min():
            dual, tess = cand, ctess

    psi = dual.psi.copy()
    err = np.max(np.abs(tess.mass - target))
    floor = eps_floor * target.min()
    if tess.mass.min() < floor:
        floor = 0.5 * tess.mass.min()
    history = [err]
    it = 0
    while err > tol_mass:
        if it >= max_iter:
            raise NoConvergence(
                f"dual ascent did not reach {tol_mass:g} in {max_iter} iterations (residual {err:.3e})",
                best=DualState(psi).gauged(),
                history=history,
            )
        it += 1
        g = target - tess.mass
        L = tess.mass_jacobian()
        d = _newton_direction(L, g)
        alpha = 1.0
        accepted = False
        for _ in range(60):
            cand = psi + alpha * d
            ctess = build_tessellation(profile, quad, nu, DualState(cand), H)
            cerr = np.max(np.abs(ctess.mass - target))
            if ctess.mass.min() >= floor and cerr <= (1 - alpha / 2) * err:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # Newton direction unusable (flat Jacobian); fall back to a gradient step
            cand, ctess, cerr = _gradient_fallback(profile, quad, nu, H, psi, g, target, err, floor)
            if ctess is None:
                raise NoConvergence(
                    f"dual line search stalled at residual {err:.3e}",
                    best=DualState(psi).gauged(),
                    history=history,
                )
        psi, tess, err = cand, ctess, cerr
        history.append(err)

    dual = DualState(psi).gauged()
    # gauge shift leaves the tessellation unchanged
    info = DualSolveInfo(it, float(err), history)
    return (dual, tess, info) if return_info else dual


def _newton_direction(L: np.ndarray, g: np.ndarray) -> np.ndarray:
    n = len(g)
    scale = max(np.max(np.diag(L)), 1e-300)
    # the constant vector spans the kernel; pin it with a rank-one term
    A = L + (scale / n) * np.ones((n, n)) + 1e-12 * scale * np.eye(n)
    try:
        return np.linalg.solve(A, g)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(L, g, rcond=None)[0]


def _gradient_fallback(profile, quad, nu, H, psi, g, target, err, floor):
    step = 1.0
    for _ in range(80):
        cand = psi + step * g
        ctess = build_tessellation(profile, quad, nu, DualState(cand), H)
        cerr = np.max(np.abs(ctess.mass - target))
        if ctess.mass.min() >= floor and cerr < err:
            return cand, ctess, cerr
        step *= 0.5
    return psi, None, err


@dataclass(frozen=True, eq=False)
class ConvexPotential:
    """``P(x) = max_i [x . y_i + kappa_i]`` with ``kappa_i = psi_i - (y_i1^2 + y_i2^2)/2``."""

    slopes: np.ndarray
    kappa: np.ndarray

    @classmethod
    def from_dual(cls, nu: GeostrophicMeasure, dual: DualState) -> "ConvexPotential":
        Y = nu.points
        return cls(Y, dual.psi - 0.5 * (Y[:, 0] ** 2 + Y[:, 1] ** 2))

    def affine(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x @ self.slopes.T + self.kappa[None, :]

    def value(self, x):
        v = self.affine(x).max(axis=1)
        return v if np.ndim(x) > 1 else float(v[0])

    def argmax(self, x) -> np.ndarray:
        # first maximiser == lowest index on ties
        return np.argmax(self.affine(x), axis=1)

    def grad(self, x):
        g = self.slopes[self.argmax(x)]
        return g if np.ndim(x) > 1 else g[0]

    def conjugate_values(self) -> np.ndarray:
        return -self.kappa.copy()


def potential_P(nu: GeostrophicMeasure, dual: DualState, x):
    return ConvexPotential.from_dual(nu, dual).value(x)


def grad_P(nu: GeostrophicMeasure, dual: DualState, x):
    return ConvexPotential.from_dual(nu, dual).grad(x)


def legendre_conjugate(nu: GeostrophicMeasure, dual: DualState) -> np.ndarray:
    """``P*(y_i) = (y_i1^2 + y_i2^2)/2 - psi_i``."""
    Y = nu.points
    return 0.5 * (Y[:, 0] ** 2 + Y[:, 1] ** 2) - dual.psi
