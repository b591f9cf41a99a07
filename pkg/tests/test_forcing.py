import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omegalab.errors import IncomparableFieldsError
from omegalab.forcing import (BISTABLE_MAP, CallableEvenMap, ForcingField, PolynomialEvenMap,
                              QuasiPeriodicSum, autonomous_even, dyadic_series_truncation,
                              eval_signal, example_61_signal, hull_distance, integral_signal,
                              pendulum, reflection_defect, scalar_linear, translate, wrap_phase,
                              zero_field)

# frozen values of the truncated dyadic signal, computed once with mpmath at 50 digits
INT_0_2 = -3.394649802125165559
F_AT_1 = -2.327576561721208812
INT_0_10 = -6.692297268665457431
INT_0_7 = -4.326767390333623993
PSI_DYADIC = 0.033552302059863086


def mp_dyadic_integral(t, K=42):
    mpmath.mp.dps = 40
    t = mpmath.mpf(t)
    return sum(mpmath.cos(mpmath.pi * t / 2 ** k) - 1 for k in range(1, K + 1))


def test_truncation_meets_tail_bound():
    K = dyadic_series_truncation(1e-12)
    assert K == 42
    assert math.ldexp(math.pi, -K) < 1e-12 <= math.ldexp(math.pi, -(K - 1))


def test_frozen_dyadic_values():
    f = example_61_signal()
    assert f(1.0) == pytest.approx(F_AT_1, abs=1e-13)
    assert f.integral(2.0) == pytest.approx(INT_0_2, abs=1e-12)
    assert f.integral(10.0) == pytest.approx(INT_0_10, abs=1e-12)
    assert f.integral(7.0) == pytest.approx(INT_0_7, abs=1e-12)
    psi = np.exp(integral_signal(f, 2.0 ** np.arange(1, 15)))
    np.testing.assert_allclose(psi, PSI_DYADIC, rtol=1e-10)


@pytest.mark.parametrize("t", [0.3, 5.5, 123.25, 4096.0, 699050.25])
def test_integral_matches_mpmath(t):
    ref = float(mp_dyadic_integral(t))
    assert integral_signal(example_61_signal(), t) == pytest.approx(ref, abs=1e-9)


def test_scalar_and_vector_evaluation_agree():
    f = example_61_signal()
    ts = np.linspace(-20, 20, 7)
    np.testing.assert_allclose(eval_signal(f, ts), [f(t) for t in ts], rtol=0, atol=1e-14)


def test_constant_signal():
    c = QuasiPeriodicSum.constant(2.5)
    assert c(3.0) == 2.5
    assert c.integral(4.0) == 10.0


def test_invalid_signals():
    with pytest.raises(ValueError):
        QuasiPeriodicSum((1.0,), (0.0,), (0.0,))
    with pytest.raises(ValueError):
        QuasiPeriodicSum((1.0, 1.0), (1.0, 1.0), (0.0, 0.0))
    with pytest.raises(ValueError):
        QuasiPeriodicSum((1.0,), (1.0, 2.0), (0.0,))


def test_wrap_phase_range():
    th = wrap_phase(np.array([-1e-300, -2 * np.pi, 7.0, 2 * np.pi]))
    assert np.all((th >= 0) & (th < 2 * np.pi))


terms = st.lists(st.tuples(st.floats(-2, 2), st.floats(0.1, 5), st.floats(0, 6.28)),
                 min_size=1, max_size=4, unique_by=lambda x: x[1])


@settings(max_examples=50, deadline=None)
@given(terms, st.floats(-50, 50), st.floats(-50, 50))
def test_translate_shifts_time(tr, tau, t):
    s = QuasiPeriodicSum.from_terms(tr, mean=0.3)
    assert s.translate(tau)(t) == pytest.approx(s(t + tau), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(terms, st.floats(-30, 30), st.floats(-30, 30))
def test_integral_is_additive(tr, t1, t2):
    s = QuasiPeriodicSum.from_terms(tr)
    lhs = s.integral(t1 + t2)
    rhs = s.integral(t1) + s.translate(t1).integral(t2)
    assert lhs == pytest.approx(rhs, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(terms, st.floats(-10, 10))
def test_derivative_of_integral(tr, t):
    s = QuasiPeriodicSum.from_terms(tr)
    h = 1e-5
    fd = (s.integral(t + h) - s.integral(t - h)) / (2 * h)
    assert fd == pytest.approx(s(t), abs=1e-6)


def _fields():
    sig = example_61_signal()
    a = QuasiPeriodicSum((0.5,), (1.0,), (0.2,), mean=1.0)
    b = QuasiPeriodicSum((0.3,), (np.sqrt(2),), (0.0,))
    return [scalar_linear(sig, -1.0), pendulum(a, b), autonomous_even(BISTABLE_MAP), zero_field(),
            autonomous_even(PolynomialEvenMap(((1, 1, 0.5), (2, 0, -1.0)))),
            autonomous_even(CallableEvenMap(lambda u, q: np.sin(u) - q * u))]


@pytest.mark.parametrize("fld", _fields(), ids=lambda f: f.kind)
def test_reflection_symmetry_of_fields(fld):
    assert reflection_defect(fld) == 0.0


@pytest.mark.parametrize("fld", _fields()[:5], ids=lambda f: f.kind)
def test_field_serialization_round_trip_is_exact(fld):
    g = ForcingField.from_dict(fld.to_dict())
    assert g.to_dict() == fld.to_dict()
    t, u, p = np.linspace(0, 9, 11), np.linspace(-1, 1, 11), np.linspace(-2, 2, 11)
    assert np.array_equal(g(t, u, p), fld(t, u, p))


def test_field_partials_match_finite_differences():
    a = QuasiPeriodicSum((0.5,), (1.0,), (0.2,), mean=1.0)
    fld = pendulum(a, QuasiPeriodicSum((0.3,), (2.0,), (0.0,)))
    t, u, p = 1.3, 0.7, -0.4
    fu, fp = fld.partials(t, u, p)
    h = 1e-6
    assert fu == pytest.approx((fld(t, u + h, p) - fld(t, u - h, p)) / (2 * h), abs=1e-8)
    assert fp == pytest.approx(0.0, abs=1e-12)
    g = autonomous_even(PolynomialEvenMap(((1, 1, 0.5), (2, 0, -1.0))))
    gu, gp = g.partials(0.0, u, p)
    assert gp == pytest.approx((g(0, u, p + h) - g(0, u, p - h)) / (2 * h), abs=1e-8)
    assert gu == pytest.approx((g(0, u + h, p) - g(0, u - h, p)) / (2 * h), abs=1e-8)


def test_hull_distance_of_translates():
    fld = scalar_linear(example_61_signal(), 0.0)
    assert hull_distance(fld, fld) == 0.0
    # the slowest mode has period 2^43, so a unit shift moves the field only slightly
    d1 = hull_distance(fld, translate(fld, 1e-3))
    d2 = hull_distance(fld, translate(fld, 1.0))
    assert 0 < d1 < d2


def test_hull_distance_rejects_incomparable_fields():
    with pytest.raises(IncomparableFieldsError, match="incomparable fields"):
        hull_distance(zero_field(), autonomous_even(BISTABLE_MAP))


def test_translate_moves_hull_phase():
    fld = scalar_linear(QuasiPeriodicSum((1.0,), (1.0,), (0.0,)), 0.0)
    g = translate(fld, np.pi / 2)
    assert g.hull_phase_at(0.0)[0] == pytest.approx(np.pi / 2)
    assert g.linear_rate(0.0) == pytest.approx(1.0)
