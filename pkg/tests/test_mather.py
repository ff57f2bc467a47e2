import warnings

import numpy as np
import pytest

from conftest import TWO_OVER_PI
from weakkam import hamiltonian as Hm
from weakkam import mather as M
from weakkam.grid import GridFunction, PeriodicGrid
from weakkam.kernel import compute_barriers


@pytest.fixture(scope="module")
def coarse():
    g = PeriodicGrid(1, 32)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        L = Hm.legendre_transform(Hm.pendulum(momentum_box=4.0), g, 2.0)
    return L, M.solve_mather_lp(L, "hat", tau=1 / 32)


def test_basis_parsing():
    assert M.Basis.parse("hat").kind == "hat"
    assert M.Basis.parse("trig:4").K == 4
    assert M.Basis.parse(("trig", 2), tau=0.5) == M.Basis("trig", 2, 0.5)
    with pytest.raises(M.MeasureError):
        M.Basis.parse("wavelet")
    with pytest.raises(M.MeasureError):
        M.Basis("trig", 0)


def test_measure_validation():
    g = PeriodicGrid(1, 4)
    v = np.array([[-1.0], [0.0], [1.0]])
    with pytest.raises(M.MeasureError):
        M.DiscreteMeasure(g, v, np.full((4, 3), 0.1))
    with pytest.raises(M.MeasureError):
        M.DiscreteMeasure(g, v, np.ones((3, 3)) / 9)
    w = np.zeros((4, 3))
    w[0, 0], w[1, 2] = -0.5, 1.5
    with pytest.raises(M.MeasureError):
        M.DiscreteMeasure(g, v, w)


def test_rest_point_is_closed_and_moving_point_is_not():
    g = PeriodicGrid(1, 8)
    v = np.array([[-8.0], [0.0], [8.0]])  # one node per step at tau = 1/64
    rest = M.DiscreteMeasure.point(g, v, 3, 1, tau=1 / 64)
    assert M.check_closed(rest) == 0.0
    moving = M.DiscreteMeasure.point(g, v, 3, 2, tau=1 / 64)
    assert M.check_closed(moving) > 1.0
    # uniform mass on a rotation orbit is closed
    w = np.zeros((8, 3))
    w[:, 2] = 1 / 8
    orbit = M.DiscreteMeasure(g, v, w, 1 / 64)
    assert M.check_closed(orbit) <= 1e-12
    assert M.check_closed(orbit, "trig:3") <= 1e-12


def test_lattice_velocities():
    vs = M.lattice_velocities(PeriodicGrid(1, 32), 1 / 32, 2.0)
    assert np.allclose(vs[:, 0], [-2, -1, 0, 1, 2])
    vs2 = M.lattice_velocities(PeriodicGrid(2, 8), 1 / 8, 1.0)
    assert vs2.shape == (9, 2)


def test_pendulum_lp(coarse):
    _, res = coarse
    assert res.objective == pytest.approx(-1.0, abs=1e-9)
    assert res.violation <= 1e-9
    assert res.measure.mass_near([0.0], 1e-9, velocity=[0.0]) == pytest.approx(1.0)
    s = res.summary()
    assert s["basis"] == "hat" and s["support_size"] == 1


def test_lp_round_trip_files(coarse, tmp_path):
    _, res = coarse
    res.to_json(tmp_path / "m.json")
    assert '"objective": -1.0' in (tmp_path / "m.json").read_text()
    res.measure.to_csv(tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "x1,v1,weight" and len(lines) == 2


def test_sampling_keeps_only_optimal_vertices():
    g = PeriodicGrid(1, 32)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        L = Hm.legendre_transform(Hm.double_well(momentum_box=4.0), g, 2.0)
    found = M.sample_mather_measures(L, n_perturb=6, tau=1 / 32)
    assert all(r.objective == pytest.approx(found[0].objective, abs=1e-4) for r in found)
    # both wells carry optimal rest measures
    mass = [(r.measure.mass_near([0.0], 0.05), r.measure.mass_near([0.5], 0.05)) for r in found]
    assert all(a + b == pytest.approx(1.0) for a, b in mass)


def test_measure_objective_matches_lp(coarse):
    L, res = coarse
    assert M.measure_objective(res.measure, L) == pytest.approx(res.objective, abs=1e-12)


def test_representation_with_rest_measure(coarse):
    L, res = coarse
    b = compute_barriers(L, 1.0, 1 / 32, 2.0, (1.0, 2.0))
    u = M.representation_value(b.h, [res])
    assert isinstance(u, GridFunction)
    assert np.array_equal(u.values, b.h[0])
    assert u.values[16] == pytest.approx(TWO_OVER_PI, abs=1.5 / 32)
    # a constant weight leaves the formula unchanged
    w = M.weighted_representation(b.h, [res], np.full(32, 2.5))
    assert np.allclose(w.values, u.values)
    with pytest.raises(M.MeasureError):
        M.weighted_representation(b.h, [res], np.zeros(32))
    with pytest.raises(M.MeasureError):
        M.representation_value(b.h, [])


def test_representation_min_over_measures_and_mixtures():
    rng = np.random.default_rng(0)
    h = rng.uniform(size=(4, 4))
    deltas = [np.eye(4)[0], np.eye(4)[2]]
    rep = M.representation_value(h, deltas)
    assert np.allclose(rep, np.minimum(h[0], h[2]))
    # linear in the measure: mixtures never beat the extreme points
    assert np.all(M.mixture_brute_force(h, deltas, steps=6) >= rep - 1e-15)
    assert M.integrate(GridFunction(PeriodicGrid(1, 4), np.arange(4.0)), deltas[1]) == 2.0


def test_transform_round_trip():
    g = PeriodicGrid(1, 8)
    v = np.linspace(-4, 4, 9)[:, None]
    w = np.zeros((8, 9))
    w[1, 5], w[6, 3] = 0.5, 0.5  # velocities +1 and -1
    mu = M.DiscreteMeasure(g, v, w, 1 / 8)
    f = np.full(8, 0.5)
    f[6] = 0.25
    fw = M.transform_measure(mu, f)
    # mass ratio f(x1) : f(x6) = 2 : 1, velocities divided by f
    assert fw.weights[1].sum() == pytest.approx(2 / 3)
    assert fw.weights[1, 6] == pytest.approx(2 / 3)  # v = 2
    assert fw.weights[6, 0] == pytest.approx(1 / 3)  # v = -4
    back = M.transform_measure(fw, f, "inverse")
    assert np.allclose(back.weights, mu.weights)


def test_transform_errors():
    g = PeriodicGrid(1, 4)
    v = np.array([[-1.0], [0.0], [1.0]])
    mu = M.DiscreteMeasure.point(g, v, 0, 2)
    with pytest.raises(M.TransformError):
        M.transform_measure(mu, np.zeros(4))
    with pytest.raises(M.TransformError):
        M.transform_measure(mu, np.ones(3))
    with pytest.raises(M.TransformError):
        M.transform_measure(mu, np.ones(4), "sideways")
    with pytest.raises(M.TransformError):
        M.transform_measure(mu, np.full(4, 0.5))  # v = 2 leaves the box
