import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weakkam.grid import (
    GridError,
    GridFunction,
    PeriodicGrid,
    heat_smooth,
    lipschitz_estimate,
    one_sided_differences,
    sup_norm_diff,
    torus_distance,
    upwind_pair,
    wrap_displacement,
)


def test_wrap_nearest_image():
    assert wrap_displacement(0.9, 0.1) == pytest.approx(0.2)
    assert wrap_displacement(0.3, 0.3) == 0.0


def test_wrap_antipodal_tie_goes_positive():
    assert wrap_displacement(0.25, 0.75) == pytest.approx(0.5)
    assert wrap_displacement(0.75, 0.25) == pytest.approx(0.5)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))
def test_wrap_antisymmetric_off_ties(a, b):
    d = float(wrap_displacement(a, b))
    if abs(abs(d) - 0.5) > 1e-9:
        assert float(wrap_displacement(b, a)) == pytest.approx(-d, abs=1e-12)
    assert -0.5 < d <= 0.5 + 1e-12


def test_wrap_near_antipode_is_not_snapped():
    d = float(wrap_displacement(0.5, 6e-8))
    assert d == pytest.approx(-0.5 + 6e-8, abs=1e-15)


def test_torus_distance_symmetric():
    assert float(torus_distance(np.array([0.95]), np.array([0.05]))) == pytest.approx(0.1)


def test_grid_indexing_round_trip():
    g = PeriodicGrid(2, 8)
    for i in (0, 5, 17, 63):
        assert g.flat_index(g.multi_index(i)) == i
    assert g.size == 64 and g.spacing == 1 / 8
    assert g.nearest_node([0.5, 0.5]) == g.flat_index((4, 4))


def test_grid_rejects_bad_shape():
    with pytest.raises(GridError):
        PeriodicGrid(3, 8)


def test_upwind_pair_constant_is_zero():
    g = PeriodicGrid(1, 16)
    u = GridFunction(g, np.full(16, 3.0))
    assert upwind_pair(u, 4, 0) == (0.0, 0.0)


def test_upwind_pair_even_function_at_zero():
    g = PeriodicGrid(1, 256)
    u = g.evaluate(lambda x: np.cos(2 * np.pi * x[:, 0]))
    pm, pp = upwind_pair(u, 0, 0)
    assert pm == pytest.approx(-pp)
    assert abs(pm) < np.pi * g.spacing * 2 * np.pi


def test_upwind_pair_on_barrier_profile():
    # S(0, x) = (2/pi)(1 - cos(pi x)) has slope 2 sin(pi x)
    g = PeriodicGrid(1, 256)
    u = g.evaluate(lambda x: 2 / np.pi * (1 - np.cos(np.pi * x[:, 0])))
    pm, pp = upwind_pair(u, g.nearest_node([0.25]), 0)
    assert pm == pytest.approx(np.sqrt(2), abs=0.02)
    assert pp == pytest.approx(np.sqrt(2), abs=0.02)


def test_one_sided_differences_shapes():
    g = PeriodicGrid(2, 8)
    u = g.evaluate(lambda x: np.sin(2 * np.pi * x[:, 1]))
    pm, pp = one_sided_differences(u)
    assert pm.shape == (2, 64) and pp.shape == (2, 64)  # axis-major
    assert np.all(pm[0] == 0) and np.all(pp[0] == 0)
    assert np.allclose(np.roll(pm[1].reshape(8, 8), -1, axis=1), pp[1].reshape(8, 8))


def test_sup_norm_diff_examples():
    g = PeriodicGrid(1, 8)
    u = GridFunction(g, np.linspace(0, 1, 8))
    assert sup_norm_diff(u, u) == 0.0
    assert sup_norm_diff(u, u + 0.7) == pytest.approx(0.7)


def test_sup_norm_diff_rejects_grid_mismatch():
    with pytest.raises(GridError):
        sup_norm_diff(GridFunction(PeriodicGrid(1, 8), np.zeros(8)), GridFunction(PeriodicGrid(1, 16), np.zeros(16)))


def test_csv_round_trip(tmp_path):
    g = PeriodicGrid(2, 4)
    u = GridFunction(g, np.random.default_rng(0).normal(size=16))
    u.to_csv(tmp_path / "u.csv")
    v = GridFunction.from_csv(tmp_path / "u.csv")
    assert np.array_equal(u.values, v.values)


def test_lipschitz_and_smoothing():
    g = PeriodicGrid(1, 64)
    u = g.evaluate(lambda x: np.abs(x[:, 0] - 0.5))
    assert lipschitz_estimate(u) == pytest.approx(1.0)
    w = heat_smooth(u, 1e-3)
    assert sup_norm_diff(u, w) < 0.05
    assert np.mean(w.values) == pytest.approx(np.mean(u.values))
