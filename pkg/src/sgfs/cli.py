"""Command line: ``sgfs init|run|verify|oracle|report --config <path> [--state <path>] [--out <dir>]``.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 failed
verification or oracle comparison.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .domain import BaseGrid, SurfaceProfile, make_quadrature, read_surface_csv, volume, write_surface_csv
from .dynamics import SimulationState, geostrophic_velocity, initial_state, step
from .errors import ConfigError, SGFSError
from .freesurface import FreeSurfaceSolution, SolverConfig, _node_offsets, a_stability_residual, solve_free_surface
from .io import DiagnosticsWriter, SurfaceLogWriter, read_state_csv, write_json, write_state_csv
from .measures import DensitySpec, GeostrophicMeasure, discretize, w2_bruteforce
from .transport import DualState, build_tessellation, solve_dual, transport_cost

log = logging.getLogger("sgfs")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4


class Setup:
    """Objects derived from a validated configuration."""

    def __init__(self, cfg: RunConfig, out: str | None = None):
        self.cfg = cfg
        b = cfg.base
        self.grid = BaseGrid(b.lx, b.ly, b.nx, b.ny, b.qx, b.qy)
        s, f = cfg.solver, cfg.surface
        self.solver = SolverConfig(
            tol_mass=s.tol_mass,
            max_iter=s.max_iter,
            eps_floor=s.eps_floor,
            tol_surface=f.tol_surface,
            max_outer=f.max_outer,
            z_max_factor=f.z_max_factor,
            quadrature=b.quadrature,
            max_halvings=f.max_halvings,
        )
        self.out = Path(out if out is not None else cfg.output.directory)
        p = cfg.particles
        try:
            spec = DensitySpec(p.kind, p.params, p.resolution, p.stagger)
            self.nu0 = discretize(spec, p.n_per_axis)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"particles.params: {exc}") from exc


# ---------------------------------------------------------------------------
# reconstruction of a solved state from files


def rebuild_solution(nu: GeostrophicMeasure, dual: DualState, profile: SurfaceProfile, config: SolverConfig):
    """Tessellation and residuals of a stored state (no re-solve)."""
    quad = make_quadrature(profile.grid, config.quadrature)
    tess = build_tessellation(profile, quad, nu, dual)
    mres = float(np.max(np.abs(tess.mass - nu.weights * tess.source_volume)))
    beta = _node_offsets(nu, dual, profile.grid)
    h = profile.heights.ravel()
    g = np.max(beta + h[:, None] * nu.points[None, :, 2], axis=1)
    wet = h > 0
    delta = -0.5 * (g[wet].max() + g[wet].min())
    sres = float(np.max(np.abs(g[wet] + delta)))
    return FreeSurfaceSolution(profile, dual, transport_cost(tess), tess, float(delta), mres, sres, 0, [])


def load_state(state_path, grid: BaseGrid, config: SolverConfig):
    state_path = Path(state_path)
    data = read_state_csv(state_path)
    stem = state_path.stem
    if not stem.startswith("state_"):
        raise ValueError(f"{state_path}: expected a state_<step>.csv file")
    surface_path = state_path.with_name("surface_" + stem[len("state_") :] + ".csv")
    profile = read_surface_csv(surface_path, grid)
    pts = np.column_stack([data["y1"], data["y2"], data["y3"]])
    nu = GeostrophicMeasure(pts, data["weight"])
    sol = rebuild_solution(nu, DualState(data["psi"]), profile, config)
    return nu, sol, data


# ---------------------------------------------------------------------------
# verification probes


def _random_fields(rng, n, grid: BaseGrid, top: float, width: float):
    from .stability import TestField

    lo = [0.0, 0.0, 0.0]
    hi = [grid.lx, grid.ly, top]
    return [TestField.random(rng, 3, lo, hi, width) for _ in range(n)]


def probe_mass_balance(nu, sol, data, setup, rng):
    tess = sol.tessellation
    stored_gap = float(np.max(np.abs(data["cell_mass"] - tess.mass)))
    c = tess.barycenter
    stored_c = np.column_stack([data["c1"], data["c2"], data["c3"]])
    bary_gap = float(np.max(np.abs(stored_c - c))) if np.all(np.isfinite(c)) else float("inf")
    tol = setup.solver.tol_mass
    return {
        "mass_residual": sol.mass_residual,
        "stored_mass_gap": stored_gap,
        "stored_barycenter_gap": bary_gap,
        "tolerance": tol,
        "passed": bool(sol.mass_residual <= tol and stored_gap <= 1e-12 and bary_gap <= 1e-10),
    }


def probe_a_stability(nu, sol, data, setup, rng):
    r = a_stability_residual(sol, nu, setup.solver)
    tol = 1e-9 * max(1.0, abs(sol.hamiltonian))
    return {"hamiltonian": sol.hamiltonian, "residual": r, "tolerance": tol, "passed": bool(r <= tol)}


def probe_surface_pressure(nu, sol, data, setup, rng):
    beta = _node_offsets(nu, sol.dual, sol.profile.grid)
    h = sol.profile.heights.ravel()
    g = np.max(beta + h[:, None] * nu.points[None, :, 2], axis=1) + sol.delta
    dry = h <= 0
    scale = 1.0 + float(np.max(np.abs(nu.points)))
    tol = 10.0 * setup.solver.tol_surface * scale
    dry_excess = float(np.max(g[dry])) if np.any(dry) else -np.inf
    return {
        "wet_residual": sol.surface_residual,
        "dry_excess": dry_excess,
        "volume": volume(sol.profile),
        "tolerance": tol,
        "passed": bool(sol.surface_residual <= tol and dry_excess <= tol and abs(volume(sol.profile) - 1) <= 1e-12),
    }


def probe_energy_identity(nu, sol, data, setup, rng):
    from .stability import energy_bb, energy_identity_residual

    r = energy_identity_residual(nu, sol)
    return {"energy_bb": energy_bb(nu, sol), "transport_cost": sol.hamiltonian, "residual": r,
            "tolerance": 1e-12, "passed": bool(r <= 1e-12)}


def probe_monotonicity(nu, sol, data, setup, rng):
    from .stability import check_gradient_monotonicity

    return check_gradient_monotonicity(nu, sol, setup.cfg.verify.n_pairs, int(rng.integers(2**31)))


def probe_inner_variation(nu, sol, data, setup, rng):
    from .stability import field_norm, second_inner_variation

    g = setup.grid
    v = setup.cfg.verify
    s0 = v.smoothing if v.smoothing is not None else 2.0 * max(g.dx, g.dy)
    scales = [s0, 0.5 * s0]
    top = float(np.max(sol.profile.heights))
    fields = _random_fields(rng, v.n_fields, g, top, 0.25 * min(g.lx, g.ly))
    rows, ok = [], True
    for k, phi in enumerate(fields):
        norm = field_norm(phi, sol)
        for s in scales:
            val = second_inner_variation(nu, sol, phi, phi, s)
            good = val >= -1e-6 * norm
            ok &= good
            rows.append({"field": k, "smoothing": s, "value": val, "field_norm": norm, "passed": bool(good)})
    return {"scales": scales, "results": rows, "passed": bool(ok)}


def probe_h1_growth(nu, sol, data, setup, rng):
    from .stability import check_h1_growth

    return check_h1_growth(nu, sol)


def probe_h2_stability(nu, sol, data, setup, rng):
    from .stability import TestField, check_h2_stability

    lo, hi = nu.points.min(axis=0), nu.points.max(axis=0)
    span = float(np.max(hi - lo)) or 1.0
    phi = TestField.random(rng, 3, lo, hi, span, amplitude=0.05 * span)
    return check_h2_stability(nu, setup.grid, phi, setup.solver)


def probe_subdifferential(nu, sol, data, setup, rng):
    from .stability import check_subdifferential_inequality

    g = setup.grid
    y3 = nu.points[:, 2]
    z_lo, z_hi = float(y3.min()), float(y3.max())
    if z_hi - z_lo < 0.5:
        z_lo, z_hi = (z_lo - 0.5, z_hi) if z_lo < 0 else (z_lo, z_hi + 0.5)

    def sample():
        pts = np.column_stack([
            g.lx * (0.2 + 0.6 * rng.random(4)),
            g.ly * (0.2 + 0.6 * rng.random(4)),
            z_lo + (z_hi - z_lo) * rng.random(4),
        ])
        return GeostrophicMeasure(pts, rng.dirichlet(np.full(4, 4.0)))

    rows = []
    for _ in range(setup.cfg.verify.n_subdiff):
        rows.append(check_subdifferential_inequality(sample(), sample(), g, setup.solver))
    worst = min(r["slack"] for r in rows)
    return {"pairs": rows, "min_slack": worst, "tolerance": -1e-8, "passed": bool(worst >= -1e-8)}


PROBE_FUNCS = {
    "mass_balance": probe_mass_balance,
    "a_stability": probe_a_stability,
    "surface_pressure": probe_surface_pressure,
    "energy_identity": probe_energy_identity,
    "monotonicity": probe_monotonicity,
    "inner_variation": probe_inner_variation,
    "h1_growth": probe_h1_growth,
    "h2_stability": probe_h2_stability,
    "subdifferential": probe_subdifferential,
}


# ---------------------------------------------------------------------------
# commands


def _diag_row(writer, state: SimulationState, setup: Setup):
    from .stability import energy_bb

    sol = state.solution
    speed = np.linalg.norm(geostrophic_velocity(state, setup.solver.tol_mass), axis=1)
    writer.row(
        state.step_index, state.t, sol.hamiltonian, energy_bb(state.measure, sol),
        sol.mass_residual, sol.surface_residual, float(sol.tessellation.mass.min()), float(speed.max()),
    )


def _checkpoint(out: Path, state: SimulationState):
    k = state.step_index
    write_state_csv(out / f"state_{k}.csv", state.measure, state.solution)
    write_surface_csv(out / f"surface_{k}.csv", state.solution.profile)


def _meta(setup: Setup, command: str, **extra) -> dict:
    return {"version": __version__, "command": command, "config": setup.cfg.to_dict(), **extra}


def cmd_init(setup: Setup) -> int:
    setup.out.mkdir(parents=True, exist_ok=True)
    state = initial_state(setup.nu0, setup.grid, setup.solver)
    _checkpoint(setup.out, state)
    sol = state.solution
    write_json(setup.out / "meta.json", _meta(
        setup, "init", n_particles=len(setup.nu0), H0=sol.hamiltonian, mass_residual=sol.mass_residual,
        surface_residual=sol.surface_residual, outer_iterations=sol.outer_iterations, status="ok",
    ))
    print(f"H = {sol.hamiltonian:.16e}")
    return EXIT_OK


def cmd_run(setup: Setup) -> int:
    cfg = setup.cfg
    out = setup.out
    out.mkdir(parents=True, exist_ok=True)
    diag = DiagnosticsWriter(out / "diagnostics.csv")
    slog = SurfaceLogWriter(out / "freesurface_log.csv")
    every, n_steps = cfg.output.checkpoint_every, cfg.time.n_steps
    summary = {"max_mass_residual": 0.0, "max_surface_residual": 0.0, "max_relative_H_drift": 0.0}

    def record(state):
        sol = state.solution
        slog.rows(sol.history)
        _diag_row(diag, state, setup)
        summary["max_mass_residual"] = max(summary["max_mass_residual"], sol.mass_residual)
        summary["max_surface_residual"] = max(summary["max_surface_residual"], sol.surface_residual)
        drift = abs(sol.hamiltonian - H0) / max(abs(H0), 1e-300)
        summary["max_relative_H_drift"] = max(summary["max_relative_H_drift"], drift)

    try:
        state = initial_state(setup.nu0, setup.grid, setup.solver)
        H0 = state.solution.hamiltonian
        record(state)
        _checkpoint(out, state)
        last_saved = 0
        status, code = "ok", EXIT_OK
        for _ in range(n_steps):
            try:
                nxt = step(state, cfg.time.dt, setup.grid, setup.solver, cfg.time.scheme)
            except SGFSError as exc:
                log.error("%s", exc)
                print(f"solver failure: {exc}", file=sys.stderr)
                status, code = f"failed at step {state.step_index + 1}: {exc}", EXIT_SOLVER
                break
            state = nxt
            record(state)
            if state.step_index % every == 0 or state.step_index == n_steps:
                _checkpoint(out, state)
                last_saved = state.step_index
        if last_saved != state.step_index:
            _checkpoint(out, state)
    finally:
        diag.close()
        slog.close()
    write_json(out / "meta.json", _meta(
        setup, "run", n_particles=len(setup.nu0), steps_completed=state.step_index, t_final=state.t,
        H0=H0, H_final=state.solution.hamiltonian, status=status, **summary,
    ))
    print(f"steps = {state.step_index}  H0 = {H0:.16e}  max relative drift = {summary['max_relative_H_drift']:.3e}")
    return code


def cmd_verify(setup: Setup, state_path) -> int:
    probes = setup.cfg.verify.probes
    if not probes:
        print("no probes enabled")
        return EXIT_OK
    try:
        nu, sol, data = load_state(state_path, setup.grid, setup.solver)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"--state: {exc}") from exc
    out = setup.out
    out.mkdir(parents=True, exist_ok=True)
    failed = []
    seeds = np.random.SeedSequence(setup.cfg.verify.seed).spawn(len(PROBE_FUNCS))
    seed_of = dict(zip(PROBE_FUNCS, seeds))
    for name in probes:
        rng = np.random.default_rng(seed_of[name])
        report = PROBE_FUNCS[name](nu, sol, data, setup, rng)
        report = {"probe": name, "state": str(state_path), **report}
        write_json(out / f"verify_{name}.json", report)
        print(f"{name}: {'pass' if report['passed'] else 'FAIL'}")
        if not report["passed"]:
            failed.append(name)
    if failed:
        print("failed probes: " + ", ".join(failed), file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def run_oracles(setup: Setup) -> dict:
    from .oracles import lattice_cost, lattice_surface_search, round_to_lattice, voxel_transport

    rng = np.random.default_rng(setup.cfg.verify.seed)
    tol = setup.cfg.verify.oracle_tol

    # semi-discrete transport against the voxel LP
    g8 = BaseGrid(1.0, 1.0, 8, 8)
    a, b = rng.uniform(-0.3, 0.3, 2)
    prof = SurfaceProfile.from_function(g8, lambda x, y: 1.0 + a * np.sin(3 * x) + b * np.cos(2 * y))
    from .domain import normalize_volume

    prof = normalize_volume(prof)
    pts = np.column_stack([rng.random(3), rng.random(3), -1.0 - rng.random(3)])
    nu3 = GeostrophicMeasure(pts, rng.dirichlet(np.full(3, 3.0)))
    quad = make_quadrature(g8, "nodal")
    _, tess, _ = solve_dual(prof, quad, nu3, return_info=True)
    solver_cost = transport_cost(tess)
    voxel_cost, _, _ = voxel_transport(prof, nu3)
    t_gap = abs(solver_cost - voxel_cost) / abs(voxel_cost)
    transport = {"solver": solver_cost, "oracle": voxel_cost, "relative_gap": t_gap, "tolerance": tol,
                 "passed": bool(t_gap <= tol)}

    # free surface against exhaustive lattice search
    g6 = BaseGrid(1.0, 1.0, 6, 6)
    nu1 = GeostrophicMeasure(np.array([[0.5, 0.5, -1.0 - rng.random()]]), np.array([1.0]))
    sol = solve_free_surface(nu1, g6, None, setup.solver)
    search = lattice_surface_search(nu1, g6)
    resolution = lattice_cost(nu1, g6, round_to_lattice(sol.profile.heights, g6)) - sol.hamiltonian
    s_gap = search["cost"] - sol.hamiltonian
    surface = {"solver": sol.hamiltonian, "oracle": search["cost"], "gap": s_gap,
               "lattice_resolution": resolution, "levels": search["levels"],
               "passed": bool(-1e-12 <= s_gap <= resolution + 1e-12)}

    # W2 of a measure with itself
    nu4 = GeostrophicMeasure(rng.random((4, 3)), rng.dirichlet(np.ones(4)))
    w2 = w2_bruteforce(nu4, nu4)
    wass = {"value": w2, "tolerance": 1e-12, "passed": bool(w2 <= 1e-12)}
    return {"transport": transport, "surface": surface, "w2_identical": wass}


def cmd_oracle(setup: Setup) -> int:
    setup.out.mkdir(parents=True, exist_ok=True)
    report = run_oracles(setup)
    write_json(setup.out / "oracle_report.json", report)
    failed = [k for k, v in report.items() if not v["passed"]]
    for k, v in report.items():
        print(f"{k}: {'pass' if v['passed'] else 'FAIL'}")
    if failed:
        print("failed oracles: " + ", ".join(failed), file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_report(setup: Setup) -> int:
    from .plotting import render_report

    if not setup.out.is_dir():
        raise ConfigError(f"output.directory: {setup.out} does not exist; run init or run first")
    for p in render_report(setup.out, setup.grid):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sgfs", description="Semi-geostrophic free-surface particle solver")
    ap.add_argument("--version", action="version", version=f"sgfs {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in [
        ("init", "solve the initial free surface and write step-0 checkpoints"),
        ("run", "integrate the trajectory, writing checkpoints and diagnostics"),
        ("verify", "run stability probes on a stored state"),
        ("oracle", "compare solvers against brute-force oracles"),
        ("report", "render figures from an output directory"),
    ]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (overrides output.directory)")
        if name == "verify":
            p.add_argument("--state", required=True, help="state_<step>.csv; surface_<step>.csv must sit beside it")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        setup = Setup(load_config(args.config), args.out)
        if args.command == "init":
            return cmd_init(setup)
        if args.command == "run":
            return cmd_run(setup)
        if args.command == "verify":
            return cmd_verify(setup, args.state)
        if args.command == "oracle":
            return cmd_oracle(setup)
        return cmd_report(setup)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SGFSError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
