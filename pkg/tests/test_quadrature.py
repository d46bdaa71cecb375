import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tempered_hermite.quadrature import (QuadratureSpec, graded_rule, integrate_1d, integrate_2d_diag_singular,
                                         integrate_md)


def test_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(abs_tol=0.0)
    with pytest.raises(ValueError):
        QuadratureSpec(max_subdivisions=0)


@given(st.floats(-3.0, 3.0).filter(lambda a: a == 0 or abs(a) > 1e-200), st.floats(0.1, 4.0))
@settings(max_examples=50, deadline=None)
def test_1d_exponential(a, b):
    res = integrate_1d(lambda x: np.exp(a * x), 0.0, b)
    exact = b if a == 0 else math.expm1(a * b) / a
    assert res.converged
    assert res.value == pytest.approx(exact, rel=1e-9)


def test_1d_endpoint_singularity_and_infinite_range():
    res = integrate_1d(lambda x: x ** -0.5, 0.0, 1.0)
    assert res.value == pytest.approx(2.0, rel=1e-7)
    res = integrate_1d(lambda x: np.exp(-x), 0.0, np.inf)
    assert res.value == pytest.approx(1.0, rel=1e-9)
    res = integrate_1d(lambda x: np.exp(-x * x), -np.inf, np.inf, points=[0.0])
    assert res.value == pytest.approx(math.sqrt(math.pi), rel=1e-9)


def test_1d_nonfinite_flags_nonconvergence():
    res = integrate_1d(lambda x: np.where(x > 0.5, np.nan, 1.0), 0.0, 1.0)
    assert not res.converged


def test_graded_rule():
    x, w = graded_rule(8, 60)
    assert w.sum() == pytest.approx(1.0, rel=1e-14)
    # endpoint power singularity: error shrinks with nodes per panel
    errs = []
    for n in (8, 12, 16):
        x, w = graded_rule(n, 60)
        errs.append(abs(np.sum(w * x ** -0.7) * 0.3 - 1.0))
    assert errs[0] < 1e-5 and errs[2] < 1e-10 and errs[0] > errs[1] > errs[2]
    x, w, c = graded_rule(16, 40, both_ends=True, complement=True)
    np.testing.assert_allclose(x + c, 1.0, rtol=0, atol=1e-15)
    assert np.sum(w * (x * c) ** -0.5) == pytest.approx(math.pi, rel=1e-10)


@pytest.mark.parametrize("p", [0.0, -0.2, -0.6, -0.9])
def test_2d_diagonal_singularity_difference_mode(p):
    # int_0^1 int_0^1 |u - v|^p du dv = 2 / ((1 + p)(2 + p))
    r1 = integrate_2d_diag_singular(lambda r: r ** p, ((0, 1), (0, 1)), p, depends_on_difference=True)
    assert r1.value == pytest.approx(2.0 / ((1 + p) * (2 + p)), rel=1e-8)


@pytest.mark.parametrize("p", [0.0, -0.2, -0.6])
def test_2d_diagonal_singularity_general_mode(p):
    r2 = integrate_2d_diag_singular(lambda u, v: np.abs(u - v) ** p, ((0, 1), (0, 1)), p)
    assert r2.value == pytest.approx(2.0 / ((1 + p) * (2 + p)), rel=1e-6)


def test_2d_rectangle_and_truncation():
    # int_0^2 int_0^1 e^{-|u-v|} du dv = 1 + e^{-2}
    f = lambda r: np.exp(-r)
    exact = 1.0 + math.exp(-2)
    # inner integral done by hand: int_0^1 dv [int_0^v e^{-(v-u)} du + int_v^2 e^{-(u-v)} du]
    direct = integrate_1d(lambda v: (1 - np.exp(-v)) + (1 - np.exp(-(2 - v))), 0.0, 1.0).value
    res = integrate_2d_diag_singular(f, ((0, 2), (0, 1)), 0.0, depends_on_difference=True)
    assert res.value == pytest.approx(direct, rel=1e-10)
    assert res.value == pytest.approx(exact, rel=1e-10)
    far = integrate_2d_diag_singular(f, ((0, 2), (0, 1)), 0.0, depends_on_difference=True, r_max=50.0)
    assert far.value == pytest.approx(exact, rel=1e-10)


def test_md_tensor_and_quasi_random():
    f = lambda x: np.prod(x, axis=1)
    res = integrate_md(f, 3, 1.0, method="tensor", points=6)
    assert res.value == pytest.approx(1 / 8, rel=1e-10)
    qr = integrate_md(f, 3, 1.0, method="quasi-random", points=12, spec=QuadratureSpec(rel_tol=1e-3))
    assert abs(qr.value - 1 / 8) < 5 * qr.error_estimate + 1e-6


def test_md_gap_mode_power_chain():
    # sum over orderings of prod of gaps^p for m = 2: int_0^1 int_0^1 |u-v|^p
    p = -0.3
    res = integrate_md(lambda g: 2.0 * g[:, 0] ** p, 2, 1.0, points=10, levels=20, mode="gap")
    assert res.value == pytest.approx(2.0 / ((1 + p) * (2 + p)), rel=1e-8)


def test_md_guards():
    with pytest.raises(ValueError):
        integrate_md(lambda x: x[:, 0], 6)
    with pytest.raises(ValueError):
        integrate_md(lambda x: x[:, 0], 2, method="simpson")
