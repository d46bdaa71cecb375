import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from tempered_hermite.kernels import params_from_H
from tempered_hermite.regress import (KERNELS, Dataset, RegressionConfig, check_kappa, consistency_experiment,
                                      decompose_m1_m2, default_noise, fbm_on_steps, fit_noise_exponent,
                                      generate_model, kappa_bounds, nadaraya_watson, smoothing_kernel)


@pytest.mark.parametrize("name", KERNELS)
def test_kernels_integrate_to_one(name):
    val = integrate.quad(lambda x: smoothing_kernel(name, x), -np.inf, np.inf, points=None)[0] \
        if name == "gaussian" else integrate.quad(lambda x: smoothing_kernel(name, x), -1, 1)[0]
    assert val == pytest.approx(1.0, rel=1e-10)
    assert smoothing_kernel(name, 0.3) == pytest.approx(smoothing_kernel(name, -0.3))


def test_unknown_kernel():
    with pytest.raises(ValueError):
        smoothing_kernel("box", 0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        RegressionConfig(n=2)
    with pytest.raises(ValueError):
        RegressionConfig(n=100, link="tan")
    with pytest.raises(ValueError):
        RegressionConfig(n=100, normalization="none")
    with pytest.raises(ValueError):
        RegressionConfig(n=100, noise=params_from_H(1, 0.7, 1.0))
    cfg = RegressionConfig(n=1024, kappa=0.2)
    assert cfg.h == pytest.approx(1024 ** -0.2)
    assert cfg.with_n(64).n == 64


def test_kappa_constraint_messages():
    cfg = RegressionConfig(n=256, H1=0.7, kappa=0.36)
    with pytest.raises(ValueError, match=r"kappa < H1/2"):
        check_kappa(cfg)
    # gamma_r = 1/2 makes both bounds coincide
    bounds = dict(kappa_bounds(RegressionConfig(n=256, H1=0.7, link="sqrt_abs"), None))
    assert bounds["kappa < H1*gamma_r"] == pytest.approx(bounds["kappa < H1/2"])
    labels = [b[0] for b in check_kappa(RegressionConfig(n=256, kappa=0.2))]
    assert labels == ["kappa < H1/2", "kappa < H1*gamma_r"]


def test_kappa_bound_from_power_law_noise():
    # weak tempering leaves power-law correlations and adds the -2 l_R bound
    cfg = RegressionConfig(n=64, kappa=0.2, noise=params_from_H(2, 0.75, 1e-3))
    fit = fit_noise_exponent(cfg)
    assert -1 < fit.slope < 0
    bounds = dict(kappa_bounds(cfg, fit))
    assert bounds["kappa < -2*l_R"] == pytest.approx(-2 * fit.slope)
    strong = RegressionConfig(n=256, kappa=0.2, noise=default_noise())
    assert "kappa < -2*l_R" not in dict(kappa_bounds(strong, fit_noise_exponent(strong)))


def test_fbm_on_steps():
    B = fbm_on_steps(128, 0.7, 4)
    assert B.size == 128 and B[0] == 0.0
    np.testing.assert_array_equal(B, fbm_on_steps(128, 0.7, 4))


def _dataset(x, y):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    return Dataset(x, y, y, np.zeros_like(y), math.nan, math.nan)


def test_nadaraya_watson_basics():
    x = np.linspace(-1, 1, 41)
    assert nadaraya_watson(0.2, _dataset(x, np.full_like(x, 3.5)), 0.3) == pytest.approx(3.5)
    # empty window under a compact kernel
    assert math.isnan(nadaraya_watson(5.0, _dataset(x, x), 0.1, "triangle"))
    with pytest.raises(ValueError):
        nadaraya_watson(0.0, _dataset(x, x), 0.0)
    # exact for linear data symmetric around the evaluation point
    assert nadaraya_watson(0.0, _dataset(x, 2 * x + 1), 0.25, "epanechnikov") == pytest.approx(1.0)


@given(st.integers(0, 2 ** 31), st.floats(-0.8, 0.8), st.floats(0.05, 0.5))
@settings(max_examples=40, deadline=None)
def test_smoothing_bias_bounded_by_hoelder(seed, x0, h):
    # compact kernel: M1 averages r over |B_i - x| <= h, so |M1 - r(x)| <= L h^gamma
    B = np.random.default_rng(seed).uniform(-1, 1, 400)
    for link, L, gam in (("sin", 1.0, 1.0), ("sqrt_abs", 1.0, 0.5)):
        cfg = RegressionConfig(n=400, link=link, kernel="quartic")
        data = _dataset(B, cfg.r(B))
        w = smoothing_kernel("quartic", (x0 - B) / h)
        if w.sum() == 0:
            continue
        m1 = float(np.sum(w * data.signal) / w.sum())
        assert abs(m1 - float(cfg.r(np.array(x0)))) <= L * h ** gam + 1e-12


def test_decomposition_adds_up():
    cfg = RegressionConfig(n=256, noise=params_from_H(2, 0.75, 50.0), cells_per_step=4)
    data = generate_model(cfg, 1)
    for x in (-0.3, 0.0, 0.4):
        m1, m2 = decompose_m1_m2(x, data, cfg)
        assert m1 + m2 == pytest.approx(nadaraya_watson(x, data, cfg.h, cfg.kernel), rel=1e-10, abs=1e-12)


def test_noise_normalizations():
    p = params_from_H(2, 0.75, 50.0)
    a = generate_model(RegressionConfig(n=128, noise=p, cells_per_step=4), 2)
    b = generate_model(RegressionConfig(n=128, noise=p, cells_per_step=4, normalization="multiply_by_Sn"), 2)
    np.testing.assert_allclose(b.noise, a.noise * a.Sn ** 2, rtol=1e-12)
    np.testing.assert_array_equal(a.x, b.x)
    c = generate_model(RegressionConfig(n=128, noise=p, cells_per_step=4, sn_source="discrete"), 2)
    assert c.Sn ** 2 == pytest.approx(a.noise_variance_ratio * a.Sn ** 2, rel=1e-12)


def test_zero_link_without_noise_is_exact():
    cfg = RegressionConfig(n=512, link="zero")
    data = generate_model(cfg, 0)
    assert nadaraya_watson(0.1, data, cfg.h) == 0.0


def test_noise_free_identity_example():
    # r(x) = x, no noise, n = 4096, H1 = 0.7, kappa = 0.3: median |r_hat(0)| over 50 seeds
    base = RegressionConfig(n=4096, H1=0.7, kappa=0.3, link="identity")
    run = consistency_experiment(base, [4096], [0.0], 50, coupled=False)
    assert run.medians()[0, 0] < 0.05


def test_run_csv_and_single_seed():
    base = RegressionConfig(n=64, noise=None)
    run = consistency_experiment(base, [64, 128], [0.0, 0.5], 1)
    lines = run.to_csv().splitlines()
    assert lines[0] == "n,x,median_abs_err,iqr,empty_window_count,seed_count"
    assert len(lines) == 5
    assert all(l.split(",")[-1] == "1" for l in lines[1:])
    with pytest.raises(ValueError, match="divide"):
        consistency_experiment(base, [64, 96], [0.0], 2)
    with pytest.raises(ValueError):
        consistency_experiment(base, [64], [0.0], 0)


def test_coupled_runs_share_the_regressor():
    base = RegressionConfig(n=64)
    a = consistency_experiment(base, [64, 256], [0.0], 3, base_seed=7)
    b = consistency_experiment(base, [64, 256], [0.0], 3, base_seed=7)
    np.testing.assert_array_equal(a.errors, b.errors)
