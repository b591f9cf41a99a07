import numpy as np
import pytest

from omegalab.forcing import QuasiPeriodicSum
from omegalab.scenarios import (CATALOG, FourierData, Scenario, ex61, get_scenario, list_scenarios,
                                ode_scalar_solve, oracle_residual)
from omegalab.spectral import grid


def test_catalog_contents():
    names = [r["name"] for r in list_scenarios()]
    assert names == ["ex61-l0", "ex61-l-1", "ex62", "bistable", "heat"]
    with pytest.raises(KeyError):
        get_scenario("nope")


def test_ex61_rejects_other_lambdas():
    with pytest.raises(ValueError):
        ex61(0.5)


@pytest.mark.parametrize("name", ["ex61-l0", "ex61-l-1", "heat"])
def test_oracles_solve_the_pde(name):
    assert oracle_residual(get_scenario(name)) < 1e-6


def test_ex61_oracle_at_known_time():
    sc = get_scenario("ex61-l-1")
    # e^{int_0^10 f} sin(pi/2), frozen from an independent mpmath evaluation
    assert sc.oracle(10.0, np.pi / 2) == pytest.approx(0.0012404298965710405, rel=1e-10)


@pytest.mark.parametrize("name", list(CATALOG))
def test_scenario_round_trip(name):
    sc = get_scenario(name)
    d = sc.to_dict()
    d2 = Scenario.from_dict(d).to_dict()
    assert d2 == d


def test_inline_scenario_from_dict():
    d = get_scenario("bistable").to_dict()
    d["name"] = "custom"
    d["u0"] = FourierData(0.2, (0.1,)).to_dict()
    sc = Scenario.from_dict(d)
    assert sc.name == "custom" and sc.oracle is None
    np.testing.assert_allclose(sc.initial().values, 0.2 + 0.1 * np.cos(grid(64)))


def test_overrides():
    sc = get_scenario("ex62").with_overrides(N=32, dt=2e-3, t_end=5.0)
    assert (sc.config.N, sc.config.dt, sc.settings.t_end) == (32, 2e-3, 5.0)
    assert sc.initial().N == 32


def test_random_families_are_seeded():
    sc = get_scenario("ex61-l-1")
    a = sc.random_initial(np.random.default_rng(4))
    b = sc.random_initial(np.random.default_rng(4))
    assert np.array_equal(a.values, b.values)
    assert abs(a.coeffs[0]) < 1e-16  # the unstable constant mode starts empty


def test_ode_solver_matches_exponential():
    a = QuasiPeriodicSum((0.5,), (1.0,), (0.0,), mean=-0.2)
    b = QuasiPeriodicSum.constant(0.0)
    ts, y, div = ode_scalar_solve(a, b, 1.0, 10.0, 0.01)
    assert not div
    np.testing.assert_allclose(y, np.exp(a.integral(ts)), rtol=1e-8)


def test_ode_solver_flags_divergence():
    ts, y, div = ode_scalar_solve(QuasiPeriodicSum.constant(5.0), QuasiPeriodicSum.constant(0.0),
                                  1.0, 100.0, 0.01)
    assert div and ts[-1] < 100.0
