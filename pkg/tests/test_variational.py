import numpy as np
import pytest

from omegalab.errors import InsufficientHorizonError, NotHomogeneousError
from omegalab.forcing import BISTABLE_MAP, autonomous_even, zero_field
from omegalab.scenarios import get_scenario
from omegalab.spectral import GridFunction, SolverConfig, evolve, grid
from omegalab.variational import (TangentFrame, dimension_counts, evolve_tangent,
                                  floquet_homogeneous, floquet_vs_frame_crosscheck, linearize,
                                  linearization_consistency, lyapunov_spectrum)


@pytest.fixture(scope="module")
def heat_traj():
    return evolve(GridFunction.from_callable(np.sin, 64), zero_field(), 100.0, SolverConfig(64, 1e-2), 100)


def test_heat_exponents_are_minus_k_squared(heat_traj):
    sp = lyapunov_spectrum(heat_traj, 5)
    np.testing.assert_allclose(sp.exponents, [0, -1, -1, -4, -4], atol=1e-9)
    assert (sp.dim_u, sp.dim_c, sp.N_u) == (0, 1, 0)
    assert sp.intervals.shape == (5, 2)
    assert np.all(sp.intervals[:, 0] <= sp.exponents + 1e-9)


def test_floquet_crosscheck_on_heat(heat_traj):
    r = floquet_vs_frame_crosscheck(heat_traj, 2)
    assert r["discrepancy"] < 1e-6


def test_floquet_needs_homogeneous_coefficients():
    sc = get_scenario("bistable")
    tr = evolve(GridFunction.from_callable(lambda x: 0.5 + 0.3 * np.cos(x), 64), sc.field, 2.0,
                sc.config, 10)
    with pytest.raises(NotHomogeneousError):
        floquet_homogeneous(sc.field, tr, 2, 1.0, 0.0)


def test_bistable_spectrum_at_one():
    fld = autonomous_even(BISTABLE_MAP)
    tr = evolve(GridFunction.constant(1.0, 64), fld, 50.0, SolverConfig(64, 1e-2), 10)
    sp = lyapunov_spectrum(tr, 5)
    np.testing.assert_allclose(sp.exponents, [-2, -3, -3, -6, -6], atol=1e-6)
    assert (sp.dim_u, sp.dim_c) == (0, 0)


def test_frame_stays_orthonormal(heat_traj):
    fr = TangentFrame.random(5, 64, 0.0, seed=1)
    assert fr.gram_deviation() < 1e-12
    evolve_tangent(heat_traj.window(0, 20), fr)
    assert fr.gram_deviation() < 1e-10


def test_insufficient_horizon():
    tr = evolve(GridFunction.from_callable(np.sin, 64), zero_field(), 5.0, SolverConfig(64, 1e-2), 10)
    with pytest.raises(InsufficientHorizonError):
        lyapunov_spectrum(tr, 3)


def test_too_many_exponents(heat_traj):
    with pytest.raises(ValueError):
        lyapunov_spectrum(heat_traj, 17)


def test_dimension_counts():
    assert dimension_counts([1.0, 0.0, 0.0, -3.0]) == (1, 2, 2)
    assert dimension_counts([0.05, -1.0]) == (0, 1, 0)
    assert dimension_counts([0.5, 0.4, 0.0]) == (2, 1, 2)


def test_linearize_bistable():
    u = GridFunction.constant(1.0, 64)
    lc = linearize(autonomous_even(BISTABLE_MAP), u, 0.0)
    np.testing.assert_allclose(lc.a.values, 0.0)
    np.testing.assert_allclose(lc.b.values, -2.0)


@pytest.mark.parametrize("name", ["bistable", "ex62"])
def test_linearization_consistency_nonlinear(name):
    sc = get_scenario(name)
    u0 = GridFunction.from_callable(lambda x: 0.4 + 0.3 * np.cos(x), 64)
    v = GridFunction.from_callable(lambda x: np.sin(2 * x) + 0.5 * np.cos(x), 64)
    r = linearization_consistency(sc.field, u0, v, sc.config, t_end=1.0)
    assert not r["linear_regime"]
    assert r["slope"] >= 0.9


def test_linearization_consistency_linear_field():
    sc = get_scenario("ex61-l-1")
    r = linearization_consistency(sc.field, sc.initial(), GridFunction(np.cos(grid(64))), sc.config)
    assert r["passed"] and r["linear_regime"]
