import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgfs.domain import (
    BaseGrid,
    SurfaceProfile,
    column_quadrature,
    eval_height,
    is_admissible,
    nodal_quadrature,
    normalize_volume,
    read_surface_csv,
    volume,
    write_surface_csv,
)
from sgfs.errors import OutOfBase, ZeroVolume


def test_grid_validation():
    for args in [(0, 1, 3, 3), (1, -1, 3, 3), (1, 1, 1, 3), (1, 1, 3, 1)]:
        with pytest.raises(ValueError):
            BaseGrid(*args)


def test_volume_examples():
    g = BaseGrid(2.0, 0.5, 5, 4)
    assert volume(SurfaceProfile.constant(g)) == pytest.approx(1.0, abs=1e-15)
    assert volume(SurfaceProfile.constant(g, 0.0)) == 0.0
    p = SurfaceProfile.from_function(g, lambda x, y: 1 + x * y)
    assert volume(SurfaceProfile(g, 2 * p.heights)) == pytest.approx(2 * volume(p), rel=1e-15)


def test_volume_exact_for_bilinear():
    g = BaseGrid(1.0, 2.0, 3, 5)
    p = SurfaceProfile.from_function(g, lambda x, y: 1 + 2 * x + 3 * y + x * y)
    exact = 2.0 + 2 * 0.5 * 2.0 + 3 * 2.0 + 0.5 * 2.0
    assert volume(p) == pytest.approx(exact, rel=1e-14)


def test_normalize_volume():
    g = BaseGrid(1.0, 1.0, 4, 4)
    p = SurfaceProfile.constant(g, 2.0)
    q = normalize_volume(p)
    assert np.allclose(q.heights, 1.0, atol=1e-15)
    assert np.allclose(normalize_volume(q).heights, q.heights, atol=1e-12)
    with pytest.raises(ZeroVolume):
        normalize_volume(SurfaceProfile.constant(g, 0.0))


def test_eval_height():
    g = BaseGrid(1.0, 1.0, 2, 2)
    p = SurfaceProfile(g, np.array([[0.0, 1.0], [0.0, 1.0]]))
    assert eval_height(p, 0.5, 0.5) == pytest.approx(0.5)
    assert eval_height(p, 1.0, 1.0) == 1.0
    assert eval_height(SurfaceProfile.constant(g, 0.7), 0.5, 0.5) == pytest.approx(0.7)
    with pytest.raises(OutOfBase):
        eval_height(p, 1.1, 0.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 7), st.integers(2, 7), st.integers(1, 3), st.integers(1, 3))
def test_quadrature_weights_partition_base(nx, ny, qx, qy):
    g = BaseGrid(1.3, 0.7, nx, ny, qx, qy)
    for q in (column_quadrature(g), nodal_quadrature(g)):
        assert abs(q.weights.sum() - g.area) <= 1e-12 * g.area
        assert np.all(q.points[:, 0] >= 0) and np.all(q.points[:, 0] <= g.lx)


def test_single_cell_midpoint():
    q = column_quadrature(BaseGrid(2.0, 3.0, 2, 2))
    assert np.allclose(q.points, [[1.0, 1.5]]) and np.allclose(q.weights, [6.0])


def test_is_admissible():
    g = BaseGrid(1.0, 1.0, 3, 3)
    p = SurfaceProfile.constant(g)
    assert is_admissible(p, 1e-10)
    h = p.heights.copy()
    h[1, 1] = -0.1
    assert not is_admissible(SurfaceProfile(g, h), 1e-10)
    assert not is_admissible(SurfaceProfile.constant(g, 2.0), 1e-10)


def test_surface_csv_roundtrip(tmp_path):
    g = BaseGrid(1.0, 1.0, 4, 3)
    p = normalize_volume(SurfaceProfile.from_function(g, lambda x, y: np.exp(x - y) / 3))
    path = tmp_path / "s.csv"
    write_surface_csv(path, p)
    assert np.array_equal(read_surface_csv(path, g).heights, p.heights)
    assert b"\r\n" not in path.read_bytes()
