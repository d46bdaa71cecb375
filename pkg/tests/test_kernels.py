import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.special import gammainc

from tempered_hermite.kernels import (FilterParams, HermiteParams, cell_amplitude, cell_kernel_matrix, check_h1,
                                      check_h2, filter_indicator, filter_weight, hermite_g, params_from_H,
                                      params_from_text, params_to_text, tempered_time_kernel)
from tempered_hermite.moments import cov_hermite


@given(st.integers(1, 4), st.floats(0.51, 0.99), st.floats(0.0, 5.0))
@settings(max_examples=50, deadline=None)
def test_params_relations(k, H, lam):
    p = params_from_H(k, H, lam)
    assert p.d == pytest.approx(0.5 - (1 - H) / k)
    assert p.alpha == pytest.approx(k * (p.d - 1.0))
    assert -(k + 1) / 2 < p.alpha < -k / 2


def test_params_validation():
    with pytest.raises(ValueError, match="H must lie"):
        params_from_H(2, 0.4, 1.0)
    with pytest.raises(ValueError):
        params_from_H(2, 0.7, -1.0)
    with pytest.raises(ValueError, match="d inconsistent"):
        HermiteParams(2, 0.7, 0.4, 0.7 - 2.0, 1.0)
    with pytest.raises(ValueError):
        params_from_H(2, 0.7, 0.0).require_tempered()


def test_filter_params_range():
    p = params_from_H(2, 0.75, 1.0)
    fp = FilterParams(p, 0.2)
    assert fp.H_f == pytest.approx(0.95)
    assert fp.scale == pytest.approx(5.0)
    assert FilterParams(p, 0.2, normalized=False).scale == 1.0
    with pytest.raises(ValueError):
        FilterParams(p, 0.0)
    with pytest.raises(ValueError):
        FilterParams(p, 0.3)      # H_f would reach 1
    with pytest.raises(ValueError):
        FilterParams(p, -0.8)     # H_f would drop to 0


def test_config_round_trip():
    p = params_from_H(2, 0.8, 0.5)
    assert params_from_text(params_to_text(p)) == p
    fp = FilterParams(p, -0.2, normalized=False)
    assert params_from_text(params_to_text(fp)) == fp
    q = params_from_text("[params]\nk = 2\nd = 0.375\nlambda = 1\n")
    assert q.H == pytest.approx(0.75)
    with pytest.raises(ValueError):
        params_from_text("[params]\nk = 2\nH = 0.75\nd = 0.3\n")
    with pytest.raises(ValueError):
        params_from_text("[other]\nH = 0.75\n")


@given(st.floats(0.1, 10.0), st.lists(st.floats(0.01, 5.0), min_size=2, max_size=2))
@settings(max_examples=40, deadline=None)
def test_hermite_kernel_homogeneous(c, x):
    p = params_from_H(2, 0.75, 1.0)
    rep = check_h1(lambda y: hermite_g(y, p.d), p.alpha, [(c, x)])
    assert rep.passed


def test_hermite_kernel_support():
    assert hermite_g(np.array([1.0, -0.5]), 0.4) == 0.0
    assert hermite_g(np.array([1.0, 0.0]), 0.4) == 0.0


def test_integrability_check():
    p = params_from_H(2, 0.75, 1.0)
    assert check_h2(lambda y: hermite_g(y, p.d), 2, 1.0, 1.0).converged
    # per-coordinate exponent -1.2 is not locally square integrable
    assert not check_h2(lambda y: hermite_g(y, -0.2), 2, 1.0, 1.0).converged


@given(st.floats(0.55, 0.95), st.floats(0.1, 5.0), st.floats(-3.0, 0.9))
@settings(max_examples=30, deadline=None)
def test_time_kernel_k1_incomplete_gamma(H, lam, x):
    # k = 1: int_{max(0,x)}^1 (s - x)^{d-1} e^{-lam (s - x)} ds via the regularized incomplete gamma
    p = params_from_H(1, H, lam)
    d = p.d
    lo = max(0.0, x) - x
    exact = math.gamma(d) * lam ** -d * (gammainc(d, lam * (1 - x)) - gammainc(d, lam * lo))
    assert tempered_time_kernel(1.0, [x], p) == pytest.approx(exact, rel=1e-7)


def test_time_kernel_zero_and_diagonal():
    p = params_from_H(2, 0.75, 1.0)
    assert tempered_time_kernel(1.0, [1.2, -0.5], p) == 0.0
    assert tempered_time_kernel(1.0, [1.0, 0.3], p) == 0.0
    # coincident coordinates: (s - x)^{2(d-1)} with 2(d-1) = -1.25 is not integrable
    assert math.isinf(tempered_time_kernel(1.0, [0.3, 0.3], p))
    assert tempered_time_kernel(1.0, [0.3, 0.2], p) > 0


def test_filter_weight():
    s = np.array([2.0, 1.0, 0.5, -1.0])
    w = filter_weight(1.0, s, 0.3)
    assert w[0] == 0.0 and w[1] == 0.0
    assert w[2] == pytest.approx(0.5 ** 0.3 / 0.3)
    assert filter_weight(1.0, -1.0, 0.3, normalized=False) == pytest.approx(2 ** 0.3 - 1)
    # decay like |s|^{beta - 1}: ratio on a geometric grid tends to 2^{beta - 1}
    far = filter_weight(1.0, -np.array([1e4, 2e4]), 0.3)
    assert far[1] / far[0] == pytest.approx(2 ** (0.3 - 1), rel=1e-3)
    with pytest.raises(ValueError):
        filter_weight(1.0, s, 0.0)
    assert filter_indicator(1.0, 0.5) == 1.0 and filter_indicator(1.0, 1.5) == 0.0


@given(st.floats(-4.0, 2.0), st.floats(0.01, 1.0), st.floats(0.0, 3.0))
@settings(max_examples=40, deadline=None)
def test_cell_amplitude_matches_quadrature(lo, width, s):
    d, lam = 0.375, 1.3
    hi = lo + width
    a, b = max(lo, -1e9), min(hi, s)
    if b <= a:
        assert cell_amplitude(s, lo, hi, d, lam) == 0.0
        return
    ref = integrate.quad(lambda x: (s - x) ** (d - 1) * math.exp(-lam * (s - x)), a, b, limit=200)[0]
    assert float(cell_amplitude(s, lo, hi, d, lam)) == pytest.approx(ref, rel=1e-7)


@given(st.integers(8, 64))
@settings(max_examples=10, deadline=None)
def test_cell_projection_bessel_inequality(M):
    # the projection onto cell indicators cannot increase the L2 norm of h_t;
    # ||h_1||^2 = Var Z(1) / 2
    p = params_from_H(2, 0.75, 1.0)
    edges = np.concatenate([np.linspace(-12.0, 0.0, M // 4, endpoint=False), np.linspace(0.0, 1.0, M + 1)])
    C = cell_kernel_matrix(edges, 1.0, p)
    assert np.allclose(C, C.T)
    assert np.sum(C * C) <= 0.5 * cov_hermite(1.0, 1.0, p)


def test_cell_projection_converges():
    p = params_from_H(2, 0.75, 1.0)
    target = 0.5 * cov_hermite(1.0, 1.0, p)
    gaps = []
    for M in (32, 128):
        edges = np.concatenate([-np.geomspace(12.0, 1.0 / M, M)[:-1], np.linspace(0.0, 1.0, M + 1)])
        C = cell_kernel_matrix(edges, 1.0, p)
        gaps.append(target - np.sum(C * C))
    assert 0 < gaps[1] < gaps[0]


@pytest.mark.parametrize("H,lam", [(0.75, 1.0), (0.6, 0.5)])
def test_time_kernel_isometry_k1(H, lam):
    # Var Z(1) = ||h_1||^2 for k = 1: pointwise kernel route against the Bessel route
    from tempered_hermite.quadrature import integrate_1d
    p = params_from_H(1, H, lam)
    f = np.vectorize(lambda x: tempered_time_kernel(1.0, [x], p) ** 2)
    res = integrate_1d(f, -40.0 / lam, 1.0, points=[0.0])
    assert res.value == pytest.approx(cov_hermite(1.0, 1.0, p), rel=1e-7)
