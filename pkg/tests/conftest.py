import numpy as np
import pytest

from sgfs.domain import BaseGrid
from sgfs.freesurface import SolverConfig, solve_free_surface
from sgfs.measures import DensitySpec, discretize

SAMPLE_SPEC = DensitySpec("uniform_box", {"lo": [0.2, 0.3, -2.0], "hi": [0.7, 0.8, -1.0]}, stagger=0.5)


@pytest.fixture(scope="session")
def grid12():
    return BaseGrid(1.0, 1.0, 12, 12)


@pytest.fixture(scope="session")
def sample_nu():
    return discretize(SAMPLE_SPEC, (2, 2, 4))


@pytest.fixture(scope="session")
def sample_solution(sample_nu, grid12):
    return solve_free_surface(sample_nu, grid12, None, SolverConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
