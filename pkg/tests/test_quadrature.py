import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdmasp import DataError, ParameterError, TiltedMomentRequest, build_rule, tilted_moments
from cdmasp.quadrature import tilted_moments_array

from oracles import adaptive_tilted_moments

# 30-digit reference from an arbitrary-precision integrator, frozen here.
M_REF = 0.840363132486226429611460381147
Q_REF = 0.866609483780496975831546973656


def test_order2_second_moment():
    assert build_rule(2).expect(lambda z: z * z) == pytest.approx(1.0, abs=1e-14)


def test_order10_fourth_moment():
    assert abs(build_rule(10).expect(lambda z: z**4) - 3.0) < 1e-10


def test_order40_cosh():
    assert abs(build_rule(40).expect(np.cosh) - math.exp(0.5)) < 1e-10


@pytest.mark.parametrize("order", [2, 3, 7, 40, 64])
def test_rule_normalised_and_symmetric(order):
    rule = build_rule(order)
    assert abs(rule.weights.sum() - 1.0) < 1e-12
    assert np.all(rule.weights > 0)
    np.testing.assert_array_equal(rule.nodes, -rule.nodes[::-1])


@pytest.mark.parametrize("order", [3, 8, 20])
def test_polynomial_exactness(order):
    rule = build_rule(order)
    for p in range(2 * order):
        scale = float(math.prod(range(p - 1 + p % 2, 0, -2)))
        exact = 0.0 if p % 2 else scale
        assert abs(rule.expect(lambda z: z**p) - exact) <= 1e-10 * scale


def test_rule_rejects_small_order():
    with pytest.raises(ParameterError):
        build_rule(1)


def test_frozen_reference_value():
    m, M = tilted_moments(TiltedMomentRequest(0.8, 0.5, 0.7, 0.6))
    assert abs(m - M_REF) < 1e-10
    assert abs(M - Q_REF) < 1e-10


@pytest.mark.parametrize("d,sigma,x", [(0.3, 1.0, 0.0), (-2.0, 0.5, 0.7), (7.0, 2.0, 1.0)])
def test_zero_variance_is_tanh(d, sigma, x):
    m, M = tilted_moments(TiltedMomentRequest(d, 0.0, sigma, x))
    t = math.tanh(d / sigma**2)
    assert m == pytest.approx(t, abs=1e-15)
    assert M == pytest.approx(t * t, abs=1e-15)


@given(st.floats(0, 4), st.floats(0.1, 3), st.floats(0, 1))
@settings(max_examples=60, deadline=None)
def test_zero_field_is_odd(a2, sigma, x):
    # wider fields push M within rounding of 1, so keep Delta/sigma^4 moderate
    m, M = tilted_moments(TiltedMomentRequest(0.0, a2 * sigma**4, sigma, x))
    assert m == 0.0
    assert 0.0 <= M < 1.0


@given(st.floats(-60, 60), st.floats(0, 60), st.floats(0.05, 4), st.floats(0, 1))
@settings(max_examples=300, deadline=None)
def test_moment_invariants(d, delta, sigma, x):
    m, M = tilted_moments(TiltedMomentRequest(d, delta, sigma, x))
    assert abs(m) < 1
    assert 0 <= M <= 1
    assert M - m * m >= -1e-12


@given(st.floats(-50, 50), st.floats(0, 50), st.floats(0.2, 2), st.floats(0, 1))
@settings(max_examples=150, deadline=None)
def test_order_doubling_plateau(b, a2, sigma, x):
    d, delta = b * sigma**2, a2 * sigma**4
    lo = tilted_moments_array(d, delta, sigma, x, build_rule(40))
    hi = tilted_moments_array(d, delta, sigma, x, build_rule(80))
    assert abs(lo[0] - hi[0]) < 1e-9
    assert abs(lo[1] - hi[1]) < 1e-9


@pytest.mark.parametrize("d,delta,sigma", [(0.4, 0.3, 0.8), (-1.5, 2.0, 1.0), (3.0, 10.0, 1.3)])
def test_untilted_is_plain_gaussian_mean(d, delta, sigma):
    m, M = tilted_moments(TiltedMomentRequest(d, delta, sigma, 0.0))
    ref_m, ref_M = adaptive_tilted_moments(d, delta, sigma, 0.0)
    assert m == pytest.approx(ref_m, abs=1e-10)
    assert M == pytest.approx(ref_M, abs=1e-10)


@given(st.floats(-3, 3), st.floats(0.01, 1), st.floats(0, 4), st.floats(0.3, 2), st.floats(0, 1))
@settings(max_examples=150, deadline=None)
def test_monotone_in_field(b, step, a2, sigma, x):
    s2 = sigma**2
    lo = tilted_moments(TiltedMomentRequest(b * s2, a2 * s2 * s2, sigma, x))[0]
    hi = tilted_moments(TiltedMomentRequest((b + step) * s2, a2 * s2 * s2, sigma, x))[0]
    assert hi > lo


def test_sign_equivariance_exact():
    d = np.linspace(-30, 30, 121)
    for delta in (0.0, 0.05, 3.0, 40.0):
        mp, Mp = tilted_moments_array(d, delta, 0.9, 0.4)
        mm, Mm = tilted_moments_array(-d, delta, 0.9, 0.4)
        np.testing.assert_array_equal(mp, -mm)
        np.testing.assert_array_equal(Mp, Mm)


def test_huge_fields_do_not_overflow():
    m, M = tilted_moments_array(np.array([-1e4, 1e4]), 1e3, 0.3, 1.0)
    assert np.all(np.isfinite(m)) and np.all(np.abs(m) < 1)
    assert np.all((M >= 0) & (M <= 1))


@pytest.mark.parametrize("args,exc", [
    ((0.1, -0.1, 1.0, 0.5), ParameterError),
    ((0.1, 0.1, 0.0, 0.5), ParameterError),
    ((0.1, 0.1, 1.0, 1.5), ParameterError),
    ((float("nan"), 0.1, 1.0, 0.5), DataError),
])
def test_request_validation(args, exc):
    with pytest.raises(exc):
        TiltedMomentRequest(*args)
