import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import hermite_e
from scipy.special import kv

from tempered_hermite.specfun import (SMALL_ARG_FLOOR, bessel_k, bessel_k_smallarg, gamma, gamma_signed,
                                      hermite_poly)


def test_bessel_half_order_example():
    # closed form sqrt(pi/(2x)) e^{-x} at x = 1
    assert bessel_k(0.5, 1.0) == pytest.approx(0.46106850444789445, rel=1e-12)


@pytest.mark.parametrize("nu", [0.0, 0.1, 0.25, 0.375, 0.5, 0.9, 1.0, 1.3, 2.0])
def test_bessel_matches_scipy(nu):
    x = np.logspace(-6, math.log10(50.0), 60)
    np.testing.assert_allclose(bessel_k(nu, x), kv(nu, x), rtol=1e-9)


def test_series_and_integral_routes_agree():
    # x <= 1 goes through the series for fractional orders; x slightly above
    # uses the trapezoid rule. Continuity across the switch checks both.
    for nu in (0.05, 0.25, 0.45, 0.7):
        lo, hi = bessel_k(nu, 1.0), bessel_k(nu, np.nextafter(1.0, 2.0))
        assert abs(lo - hi) / lo < 1e-12


@given(st.floats(-2.0, 2.0), st.floats(1e-3, 40.0))
@settings(max_examples=60, deadline=None)
def test_bessel_order_symmetry(nu, x):
    assert bessel_k(nu, x) == pytest.approx(bessel_k(-nu, x), rel=1e-14)


@given(st.floats(0.0, 2.0), st.floats(0.05, 30.0))
@settings(max_examples=60, deadline=None)
def test_bessel_recurrence(nu, x):
    # K_{nu+1} - K_{nu-1} = (2 nu / x) K_nu
    lhs = bessel_k(nu + 1.0, x) - bessel_k(nu - 1.0, x)
    assert lhs == pytest.approx(2.0 * nu / x * bessel_k(nu, x), rel=1e-8, abs=1e-12 * bessel_k(nu + 1.0, x))


def test_bessel_domain_and_floor():
    with pytest.raises(ValueError):
        bessel_k(0.3, 0.0)
    with pytest.raises(ValueError):
        bessel_k(0.3, -1.0)
    with pytest.raises(OverflowError):
        bessel_k(0.3, SMALL_ARG_FLOOR / 10)
    val, flag = bessel_k(0.3, 800.0, return_flags=True)
    assert val == 0.0 and flag
    val, flag = bessel_k(0.3, 2.0, return_flags=True)
    assert val > 0 and not flag


def test_smallarg_examples():
    assert bessel_k_smallarg(0.0, 0.01) == pytest.approx(4.605170185988091, rel=1e-14)
    assert bessel_k_smallarg(0.5, 0.001) == pytest.approx(39.633272976, rel=1e-9)
    assert abs(bessel_k(0.25, 1e-4) / bessel_k_smallarg(0.25, 1e-4) - 1.0) < 0.01


def test_smallarg_ratio_has_known_correction():
    # K_nu(x) / leading term = 1 + Gamma(-nu)/Gamma(nu) (x/2)^{2 nu} + ...
    for nu in (0.125, 0.25):
        x = 1e-6
        ratio = bessel_k(nu, x) / bessel_k_smallarg(nu, x)
        corr = gamma_signed(-nu) / gamma(nu) * (x / 2) ** (2 * nu)
        assert ratio == pytest.approx(1.0 + corr, abs=1e-3)
        assert ratio == pytest.approx(kv(nu, x) / bessel_k_smallarg(nu, x), rel=1e-9)


@given(st.floats(1e-3, 60.0))
@settings(max_examples=100, deadline=None)
def test_gamma_matches_math(x):
    assert gamma(x) == pytest.approx(math.gamma(x), rel=1e-13)


@given(st.floats(-6.0, -0.01).filter(lambda x: abs(x - round(x)) > 1e-3))
@settings(max_examples=60, deadline=None)
def test_gamma_signed_negative(x):
    assert gamma_signed(x) == pytest.approx(math.gamma(x), rel=1e-11)


def test_gamma_domain():
    with pytest.raises(ValueError):
        gamma(0.0)
    with pytest.raises(ValueError):
        gamma_signed(-2.0)


@pytest.mark.parametrize("q", [0, 1, 2, 3, 7, 12])
def test_hermite_matches_numpy(q):
    x = np.linspace(-4, 4, 41)
    coef = np.zeros(q + 1)
    coef[q] = 1.0
    np.testing.assert_allclose(hermite_poly(q, x), hermite_e.hermeval(x, coef), rtol=1e-12, atol=1e-9)


def test_hermite_orthogonality():
    # E[He_p(G) He_q(G)] = q! delta_pq for standard Gaussian G
    x, w = hermite_e.hermegauss(40)
    w = w / w.sum()
    for p in range(6):
        for q in range(6):
            val = np.sum(w * hermite_poly(p, x) * hermite_poly(q, x))
            assert val == pytest.approx(math.factorial(q) if p == q else 0.0, abs=1e-9)


def test_hermite_guards():
    with pytest.raises(ValueError):
        hermite_poly(21, 0.3)
    with pytest.raises(ValueError):
        hermite_poly(-1, 0.3)
