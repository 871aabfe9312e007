"""Semi-geostrophic flow with a free upper surface, solved by semi-discrete optimal transport."""

__version__ = "0.1.0"

from .domain import BaseGrid, SurfaceProfile, volume  # noqa: E402
from .dynamics import SimulationState, initial_state, integrate, step  # noqa: E402
from .freesurface import FreeSurfaceSolution, SolverConfig, solve_free_surface  # noqa: E402
from .measures import DensitySpec, GeostrophicMeasure, discretize  # noqa: E402
from .transport import DualState, solve_dual, transport_cost  # noqa: E402

__all__ = [
    "BaseGrid",
    "DensitySpec",
    "DualState",
    "FreeSurfaceSolution",
    "GeostrophicMeasure",
    "SimulationState",
    "SolverConfig",
    "SurfaceProfile",
    "discretize",
    "initial_state",
    "integrate",
    "solve_dual",
    "solve_free_surface",
    "step",
    "transport_cost",
    "volume",
]
