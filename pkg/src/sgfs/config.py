"""Strict JSON run configuration.  One file fully determines a run."""

from __future__ import annotations

import json
import math
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path

from .dynamics import SCHEMES
from .errors import ConfigError

PROBES = (
    "mass_balance",
    "a_stability",
    "surface_pressure",
    "energy_identity",
    "monotonicity",
    "inner_variation",
    "h1_growth",
    "h2_stability",
    "subdifferential",
)


@dataclass(frozen=True)
class BaseSection:
    lx: float
    ly: float
    nx: int
    ny: int
    qx: int = 1
    qy: int = 1
    quadrature: str = "nodal"


@dataclass(frozen=True)
class ParticlesSection:
    kind: str
    params: dict
    n_per_axis: object
    resolution: int = 4
    stagger: float = 0.0


@dataclass(frozen=True)
class TimeSection:
    dt: float
    n_steps: int
    scheme: str = "heun"


@dataclass(frozen=True)
class SolverSection:
    tol_mass: float = 1e-9
    max_iter: int = 500
    eps_floor: float = 0.1


@dataclass(frozen=True)
class SurfaceSection:
    tol_surface: float = 1e-7
    max_outer: int = 200
    z_max_factor: float = 10.0
    max_halvings: int = 20


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    checkpoint_every: int = 1


@dataclass(frozen=True)
class VerifySection:
    probes: list = field(default_factory=lambda: list(PROBES))
    n_pairs: int = 1000
    smoothing: float | None = None
    n_fields: int = 10
    n_subdiff: int = 20
    seed: int = 0
    oracle_tol: float = 1e-4


@dataclass(frozen=True)
class RunConfig:
    base: BaseSection
    particles: ParticlesSection
    time: TimeSection
    solver: SolverSection = SolverSection()
    surface: SurfaceSection = SurfaceSection()
    output: OutputSection = OutputSection()
    verify: VerifySection = VerifySection()

    def to_dict(self) -> dict:
        return asdict(self)


SECTIONS = {
    "base": BaseSection,
    "particles": ParticlesSection,
    "time": TimeSection,
    "solver": SolverSection,
    "surface": SurfaceSection,
    "output": OutputSection,
    "verify": VerifySection,
}
REQUIRED = ("base", "particles", "time")


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v):
    return (isinstance(v, (int, float)) and not isinstance(v, bool)) and math.isfinite(v)


def _build(cls, raw, path):
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected an object")
    names = {f.name for f in fields(cls)}
    for key in raw:
        if key not in names:
            raise ConfigError(f"{path}.{key}: unknown key")
    missing = [
        f.name
        for f in fields(cls)
        if f.name not in raw and f.default is MISSING and f.default_factory is MISSING
    ]
    if missing:
        raise ConfigError(f"{path}.{missing[0]}: required key missing")
    return cls(**raw)


def _check(cond, key, msg):
    if not cond:
        raise ConfigError(f"{key}: {msg}")


def _validate(cfg: RunConfig) -> None:
    b = cfg.base
    for k in ("lx", "ly"):
        _check(_is_real(getattr(b, k)) and getattr(b, k) > 0, f"base.{k}", "must be a positive number")
    for k in ("nx", "ny"):
        _check(_is_int(getattr(b, k)) and getattr(b, k) >= 2, f"base.{k}", "must be an integer >= 2")
    for k in ("qx", "qy"):
        _check(_is_int(getattr(b, k)) and getattr(b, k) >= 1, f"base.{k}", "must be an integer >= 1")
    _check(b.quadrature in ("nodal", "midpoint"), "base.quadrature", "must be 'nodal' or 'midpoint'")

    p = cfg.particles
    _check(p.kind in ("uniform_box", "gaussian_blob", "two_blob"), "particles.kind", f"unknown kind {p.kind!r}")
    _check(isinstance(p.params, dict), "particles.params", "must be an object")
    npa = p.n_per_axis
    ok = (_is_int(npa) and npa >= 1) or (
        isinstance(npa, list) and len(npa) == 3 and all(_is_int(v) and v >= 1 for v in npa)
    )
    _check(ok, "particles.n_per_axis", "must be an integer >= 1 or a list of three")
    _check(_is_int(p.resolution) and p.resolution >= 1, "particles.resolution", "must be an integer >= 1")
    _check(_is_real(p.stagger) and 0 <= p.stagger < 1, "particles.stagger", "must lie in [0, 1)")

    t = cfg.time
    _check(_is_real(t.dt) and t.dt > 0, "time.dt", "must be a positive number")
    _check(_is_int(t.n_steps) and t.n_steps >= 0, "time.n_steps", "must be an integer >= 0")
    _check(t.scheme in SCHEMES, "time.scheme", f"must be one of {', '.join(SCHEMES)}")

    s = cfg.solver
    _check(_is_real(s.tol_mass) and s.tol_mass > 0, "solver.tol_mass", "must be positive")
    _check(_is_int(s.max_iter) and s.max_iter >= 1, "solver.max_iter", "must be an integer >= 1")
    _check(_is_real(s.eps_floor) and 0 < s.eps_floor < 1, "solver.eps_floor", "must lie in (0, 1)")

    f = cfg.surface
    _check(_is_real(f.tol_surface) and f.tol_surface > 0, "surface.tol_surface", "must be positive")
    _check(_is_int(f.max_outer) and f.max_outer >= 1, "surface.max_outer", "must be an integer >= 1")
    _check(_is_real(f.z_max_factor) and f.z_max_factor > 0, "surface.z_max_factor", "must be positive")
    _check(_is_int(f.max_halvings) and f.max_halvings >= 1, "surface.max_halvings", "must be an integer >= 1")

    o = cfg.output
    _check(isinstance(o.directory, str) and o.directory, "output.directory", "must be a non-empty string")
    _check(_is_int(o.checkpoint_every) and o.checkpoint_every >= 1, "output.checkpoint_every", "must be >= 1")

    v = cfg.verify
    _check(isinstance(v.probes, list), "verify.probes", "must be a list")
    for name in v.probes:
        _check(name in PROBES, "verify.probes", f"unknown probe {name!r}")
    for k in ("n_pairs", "n_fields", "n_subdiff"):
        _check(_is_int(getattr(v, k)) and getattr(v, k) >= 1, f"verify.{k}", "must be an integer >= 1")
    _check(v.smoothing is None or (_is_real(v.smoothing) and v.smoothing > 0), "verify.smoothing", "must be positive")
    _check(_is_int(v.seed) and v.seed >= 0, "verify.seed", "must be a non-negative integer")
    _check(_is_real(v.oracle_tol) and v.oracle_tol > 0, "verify.oracle_tol", "must be positive")


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected an object")
    for key in raw:
        if key not in SECTIONS:
            raise ConfigError(f"{key}: unknown section")
    for key in REQUIRED:
        if key not in raw:
            raise ConfigError(f"{key}: required section missing")
    try:
        sections = {k: _build(SECTIONS[k], v, k) for k, v in raw.items()}
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg = RunConfig(**sections)
    _validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_config(raw)
