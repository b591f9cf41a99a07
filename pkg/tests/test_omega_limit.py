import numpy as np
import pytest

from omegalab.errors import UnboundedOmegaError
from omegalab.forcing import QuasiPeriodicSum, scalar_linear
from omegalab.omega_limit import (CASE_I, CASE_II, CASE_III, NO_IMPLICATION, apply_rules, classify,
                                  find_common_critical_point, gap_clusters, homogeneity_test,
                                  phase_distance, proximal_pair_scan, reflection_residual,
                                  sample_omega, section_values, sign_stabilization, trichotomy)
from omegalab.scenarios import get_scenario
from omegalab.spectral import GridFunction, SolverConfig, evolve, evolve_ensemble
from omegalab.variational import lyapunov_spectrum


@pytest.fixture(scope="module")
def heat_run():
    sc = get_scenario("heat")
    return sc, evolve(sc.initial(), sc.field, 200.0, sc.config, 20)


def test_gap_clusters_separates_two_groups():
    v = np.r_[np.full(20, 0.0) + np.linspace(0, 1e-5, 20), np.full(20, 1.0)]
    cl = gap_clusters(v)
    assert len(cl) == 2
    assert [c.size for c in cl] == [20, 20]


def test_gap_clusters_merges_a_continuum():
    # gaps below the floor never separate, however long the chain
    assert len(gap_clusters(np.linspace(0, 1, 5000))) == 1
    # isolated values further apart than the floor stay separate
    assert len(gap_clusters(np.linspace(0, 1, 50))) == 50


def test_gap_clusters_identical_values():
    assert len(gap_clusters(np.ones(5000))) == 1


def test_phase_distance_wraps():
    w = np.array([1.0])
    assert phase_distance(np.array([0.01]), np.array([2 * np.pi - 0.01]), w) == pytest.approx(0.02)


def test_trichotomy_labels():
    assert trichotomy(1, False) == CASE_I
    assert trichotomy(1, True) == CASE_II
    assert trichotomy(2, True) == CASE_III


@pytest.mark.parametrize("args, rule, status", [
    ((0, 0, True, 1, 1), "a", "pass"),
    ((0, 0, False, 1, 1), "a", "fail"),
    ((1, 1, False, 1, 1), "b", "pass"),
    ((1, 1, True, 1, 1), "b", "fail"),
    ((0, 1, True, 1, 1), "c", "pass"),
    ((0, 1, False, 2, 2), "c", "fail"),
    ((1, 2, False, 1, 2), NO_IMPLICATION, "not-applicable"),
    ((None, None, True, 1, 1), NO_IMPLICATION, "not-applicable"),
])
def test_rule_table(args, rule, status):
    r, st, _ = apply_rules(*args)
    assert (r, st) == (rule, status)


def test_sample_omega_preconditions(heat_run):
    _, tr = heat_run
    with pytest.raises(ValueError):
        sample_omega(tr, 100.0)
    s = sample_omega(tr, 50.0)
    assert s.times[0] > 50.0


def test_unbounded_orbit_is_rejected():
    fld = scalar_linear(QuasiPeriodicSum.constant(0.2), 0.0)
    tr = evolve(GridFunction.constant(1.0, 64), fld, 60.0, SolverConfig(64, 0.01, blowup_threshold=1e12), 20)
    with pytest.raises(UnboundedOmegaError):
        sample_omega(tr, 20.0)


def test_heat_classification(heat_run):
    sc, tr = heat_run
    s = sample_omega(tr, 50.0)
    assert homogeneity_test(s)
    sp = lyapunov_spectrum(tr, 5)
    r = classify(s, sp)
    assert r.minimal_set_count == 1
    assert not r.connecting_detected
    assert r.trichotomy_case == CASE_I
    assert (r.rule, r.rule_status) == ("c", "pass")
    assert r.falsifications == []
    d = r.to_dict()
    assert d["cover_cardinality"] == 1


def test_critical_point_of_sine_orbit():
    sc = get_scenario("ex61-l-1")
    tr = evolve(sc.initial(), sc.field, 300.0, sc.config, 100)
    s = sample_omega(tr, 100.0)
    cp = find_common_critical_point(s)
    assert cp is not None and not cp.every_point
    assert min(abs(cp.x0 - np.pi / 2), abs(cp.x0 - 3 * np.pi / 2)) < 2 * np.pi / 64
    assert reflection_residual(s, cp.x0) < 1e-10
    assert not homogeneity_test(s)
    vals = section_values(s, np.pi / 2)
    np.testing.assert_allclose(vals, sc.oracle(s.times, np.pi / 2), rtol=1e-6)


def test_sign_stabilization_on_decaying_heat(heat_run):
    _, tr = heat_run
    r = sign_stabilization(sample_omega(tr, 50.0))
    assert r["all_stable"]


def test_proximal_pair_scan():
    sc = get_scenario("bistable")
    a, b = evolve_ensemble([GridFunction.constant(0.5, 64), GridFunction.constant(0.6, 64)],
                           sc.field, 30.0, sc.config, 10)
    r = proximal_pair_scan(a, b, 1e-6)
    assert r["forward"]
    assert r["forward_min"] < 1e-3 * r["backward_min"]
    with pytest.raises(ValueError):
        proximal_pair_scan(a, a, 1e-6)
