import numpy as np
import pytest

from sgfs.domain import BaseGrid
from sgfs.dynamics import J, SimulationState, geostrophic_velocity, initial_state, integrate, step
from sgfs.errors import EmptyCell, StageFailure
from sgfs.freesurface import SolverConfig
from sgfs.measures import GeostrophicMeasure


def test_J_structure():
    assert np.array_equal(J[:2, :2], -J[:2, :2].T)
    assert not J[2].any() and not J[:, 2].any()
    assert np.allclose(J @ [1, 0, 0], [0, 1, 0])


def test_centred_single_particle_is_at_rest():
    g = BaseGrid(1.0, 1.0, 8, 8)
    nu = GeostrophicMeasure([[0.5, 0.5, -1.0]], [1.0])
    st = initial_state(nu, g)
    U = geostrophic_velocity(st)
    assert np.allclose(U[:, :2], 0.0, atol=1e-12) and U[0, 2] == 0


def test_velocity_third_component_zero(sample_nu, sample_solution):
    U = geostrophic_velocity(SimulationState(0.0, sample_nu, sample_solution))
    assert np.all(U[:, 2] == 0.0)
    d = sample_nu.points - sample_solution.tessellation.barycenter
    assert np.allclose(U[:, :2], np.column_stack([-d[:, 1], d[:, 0]]))


def test_empty_cell_detected(sample_nu, sample_solution):
    with pytest.raises(EmptyCell):
        geostrophic_velocity(SimulationState(0.0, sample_nu, sample_solution), tol_mass=1.0)


@pytest.mark.parametrize("scheme", ["euler", "heun", "rk4"])
def test_step_preserves_weights_and_y3(sample_nu, sample_solution, grid12, scheme):
    st = SimulationState(0.0, sample_nu, sample_solution)
    new = step(st, 0.01, grid12, SolverConfig(), scheme)
    assert np.array_equal(new.measure.weights, sample_nu.weights)
    assert np.array_equal(new.measure.points[:, 2], sample_nu.points[:, 2])
    assert new.t == 0.01 and new.step_index == 1


def test_small_dt_consistency(sample_nu, sample_solution, grid12):
    st = SimulationState(0.0, sample_nu, sample_solution)
    U = geostrophic_velocity(st)
    errs = []
    for dt in (1e-3, 1e-4):
        new = step(st, dt, grid12, SolverConfig(), "heun")
        errs.append(np.max(np.abs(new.measure.points - sample_nu.points - dt * U)))
    # the remainder is O(dt^2): a tenfold smaller step shrinks it about a hundredfold
    assert errs[1] <= errs[0] / 30


def test_single_particle_stays_in_box():
    g = BaseGrid(1.0, 1.0, 8, 8)
    nu = GeostrophicMeasure([[0.4, 0.55, -1.0]], [1.0], box=[[0.2, 0.2, -1.5], [0.8, 0.8, -0.5]])
    st = initial_state(nu, g)
    for st in integrate(st, 0.01, 100, g):
        pass
    assert np.all(st.measure.points >= nu.box[0]) and np.all(st.measure.points <= nu.box[1])


def test_stage_failure_is_annotated(sample_nu, sample_solution, grid12):
    st = SimulationState(0.0, sample_nu, sample_solution)
    with pytest.raises(StageFailure) as err:
        step(st, 0.01, grid12, SolverConfig(max_outer=1), "rk4")
    assert err.value.stage == "rk4-2"
