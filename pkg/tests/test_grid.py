import numpy as np
import pytest

from hjhomog.errors import PreconditionError
from hjhomog.grid import Field, TorusGrid, restrict_to_coarser, sup_distance


def _field(grid, times, fn):
    vals = np.stack([fn(grid.axis_nodes(), t)[None] for t in times], axis=1)
    return Field(grid=grid, times=np.asarray(times, float), values=vals)


def test_grid_basics():
    g = TorusGrid(1, 64, 1.0)
    assert g.h == pytest.approx(1.0 / 64)
    assert g.shape == (64,)
    assert g.size == 64
    x = g.axis_nodes()
    assert x[0] == 0.0 and x[-1] < 1.0  # right endpoint wraps, not stored
    assert np.allclose(np.diff(x), g.h)


def test_grid_rejects_bad_axes():
    with pytest.raises(PreconditionError):
        TorusGrid(1, 0, 1.0)
    with pytest.raises(PreconditionError):
        TorusGrid(3, 16, 1.0)  # solvers cover n in {1, 2}
    with pytest.raises(PreconditionError):
        TorusGrid(1, 16, -1.0)


def test_refinement_relation():
    g = TorusGrid(1, 32, 1.0)
    assert TorusGrid(1, 64, 1.0).is_refinement_of(g)
    assert TorusGrid(1, 96, 1.0).is_refinement_of(g)
    assert not TorusGrid(1, 48, 1.0).is_refinement_of(g)
    assert not TorusGrid(1, 64, 2.0).is_refinement_of(g)


def test_field_time_interpolation():
    g = TorusGrid(1, 16, 1.0)
    f = _field(g, [0.0, 1.0], lambda x, t: np.full_like(x, t))
    assert f.at_time(0.25) == pytest.approx(0.25)
    assert f.at_time(1.0) == pytest.approx(1.0)
    with pytest.raises(PreconditionError):
        f.at_time(1.5)


def test_field_space_interpolation_periodic(rng):
    g = TorusGrid(1, 128, 1.0)
    f = _field(g, [0.0], lambda x, t: np.sin(2 * np.pi * x))
    pts = rng.uniform(0, 1, size=(1, 40))
    got = f.interp_space(pts, 0.0)
    # linear interpolation: max |f''| h^2 / 8 = (2 pi)^2 h^2 / 8
    assert np.max(np.abs(got - np.sin(2 * np.pi * pts[0]))) < 5.0 / 128**2
    # wrap-around: halfway between the last node and node 0
    edge = f.interp_space(np.array([[1.0 - 0.5 / 128]]), 0.0)
    mid = 0.5 * (np.sin(2 * np.pi * (127.0 / 128)) + 0.0)
    assert edge[0][0] == pytest.approx(mid, abs=1e-12)


def test_restrict_to_coarser_exact_on_nodes():
    fine = TorusGrid(1, 64, 1.0)
    coarse = TorusGrid(1, 16, 1.0)
    f = _field(fine, [0.0, 0.5], lambda x, t: np.cos(2 * np.pi * x) + t)
    r = restrict_to_coarser(f, coarse)
    assert r.grid == coarse
    x = coarse.axis_nodes()
    assert np.allclose(r.values[0, 1], np.cos(2 * np.pi * x) + 0.5)
    with pytest.raises(PreconditionError):
        restrict_to_coarser(f, TorusGrid(1, 48, 1.0))


def test_sup_distance_and_window():
    g = TorusGrid(1, 32, 1.0)
    a = _field(g, [0.0, 0.5, 1.0], lambda x, t: np.zeros_like(x))
    b = _field(g, [0.0, 0.5, 1.0], lambda x, t: np.full_like(x, t))
    assert sup_distance(a, b) == pytest.approx(1.0)
    assert sup_distance(a, b, time_window=(0.0, 0.5)) == pytest.approx(0.5)
    assert sup_distance(a, b) == sup_distance(b, a)


def test_sup_distance_restricts_nested_grids():
    fine = TorusGrid(1, 64, 1.0)
    coarse = TorusGrid(1, 32, 1.0)
    f = _field(fine, [0.0], lambda x, t: np.sin(2 * np.pi * x))
    c = _field(coarse, [0.0], lambda x, t: np.sin(2 * np.pi * x))
    assert sup_distance(f, c) == pytest.approx(0.0, abs=1e-14)


def test_field_csv_roundtrip(tmp_path, rng):
    g = TorusGrid(1, 24, 1.0)
    vals = rng.normal(size=(2, 3, 24))
    f = Field(grid=g, times=np.array([0.0, 0.3, 1.0]), values=vals)
    path = tmp_path / "f.csv"
    f.to_csv(path)
    back = Field.from_csv(path, g, 2)
    assert np.array_equal(back.times, f.times)
    assert np.array_equal(back.values, f.values)  # bit-exact round trip


def test_lipschitz_seminorm_matches_slope():
    g = TorusGrid(1, 256, 1.0)
    f = _field(g, [0.0], lambda x, t: np.abs(x - 0.5))
    assert f.lipschitz_seminorm() == pytest.approx(1.0, abs=1e-10)
