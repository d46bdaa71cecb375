"""Verification suites. Each returns a CheckReport; the command line and the
acceptance tests run the same code."""
from __future__ import annotations

import math

import numpy as np

from .kernels import FilterParams, params_from_H
from .moments import (CheckReport, bessel_product_identity, cov_hermite, cumulant_I2_discrete,
                      cumulant_limit_rosenblatt, cumulant_rosenblatt, discrete_chain_rate,
                      cov_filtered_hermite, cumulant_filtered_rosenblatt, richardson,
                      verify_scaling, verify_stationarity)
from .quadrature import QuadratureSpec, integrate_1d
from .specfun import bessel_k, bessel_k_smallarg, gamma, hermite_poly

SUITES = ("specfun", "lemma-int", "covariance", "cumulants", "scaling", "stationarity",
          "limit", "simulation", "regression")


def _se_row(rep: CheckReport, name: str, est: float, se: float, target: float, allowance: float = 0.0):
    """Pass when |est - target| <= 4 se + allowance."""
    ok = abs(est - target) <= 4.0 * se + allowance
    return rep.add_flag(f"{name} (|diff|={abs(est - target):.4g}, 4se+allow={4 * se + allowance:.4g})",
                        ok, est, target)


def bessel_closed_form_check() -> CheckReport:
    """K_{1/2} closed form on 20 points of [0.01, 20] and the small-argument ratio at 1e-6."""
    rep = CheckReport("bessel")
    x = np.linspace(0.01, 20.0, 20)
    k = bessel_k(0.5, x)
    exact = np.sqrt(np.pi / (2 * x)) * np.exp(-x)
    for xi, a, b in zip(x, k, exact):
        rep.add(f"K_1/2({xi:.4g}) closed form", a, b, 1e-9)
    for nu in (0.125, 0.25):
        rep.add(f"K_{nu}(1e-6) small-argument ratio", bessel_k(nu, 1e-6), bessel_k_smallarg(nu, 1e-6), 1e-2)
    return rep


def suite_specfun() -> CheckReport:
    rep = bessel_closed_form_check()
    rep.title = "specfun"
    rep.add("K order symmetry", bessel_k(-0.3, 2.0), bessel_k(0.3, 2.0), 1e-15)
    rep.add("Gamma(1/2)", gamma(0.5), math.sqrt(math.pi), 1e-13)
    rep.add("Gamma(5)", gamma(5.0), 24.0, 1e-13)
    rep.add("He_2(1.7)", hermite_poly(2, 1.7), 1.7 ** 2 - 1.0, 1e-15)
    return rep


def lemma_int_lhs(tau: float, lam: float, r: float) -> float:
    """int_0^inf y^{tau-1} (y + r)^{tau-1} e^{-lam (2y + r)} dy by adaptive quadrature.

    y = z^{1/tau} turns y^{tau-1} dy into dz / tau; the factor e^{-lam r}
    is pulled out so the integrand is O(1) against the absolute tolerance.
    """
    q = 1.0 / tau
    f = lambda z: q * (z ** q + r) ** (tau - 1.0) * np.exp(-2.0 * lam * z ** q)
    res = integrate_1d(f, 0.0, np.inf, QuadratureSpec(abs_tol=1e-14, rel_tol=1e-11), points=[r ** tau])
    if not res.converged:
        raise ArithmeticError("lemma-int oracle did not converge")
    return res.value * math.exp(-lam * r)


def suite_lemma_int() -> CheckReport:
    rep = CheckReport("lemma-int")
    for tau in (0.3, 0.375, 0.45):
        for lam in (0.1, 1.0, 10.0):
            for r in (0.01, 0.1, 1.0, 5.0):
                rep.add(f"tau={tau} lam={lam} |u-v|={r}", bessel_product_identity(tau, lam, r, 0.0),
                        lemma_int_lhs(tau, lam, r), 1e-6)
    return rep


def suite_covariance() -> CheckReport:
    from .moments import cov_general_product
    rep = CheckReport("covariance")
    p = params_from_H(2, 0.75, 1.0)
    g1 = lambda x: np.where(x > 0, np.abs(x) ** (p.d - 1.0), 0.0)
    for t, s in ((1.0, 1.0), (1.0, 0.5)):
        rep.add(f"Bessel route vs direct product route cov({t},{s})", cov_hermite(t, s, p),
                cov_general_product(t, s, g1, p), 1e-6)
    rep.add("symmetry cov(1, 0.5) = cov(0.5, 1)", cov_hermite(1.0, 0.5, p), cov_hermite(0.5, 1.0, p), 1e-12)
    rep.add_flag("cov(0, 1) = 0", cov_hermite(0.0, 1.0, p) == 0.0)
    ts = np.array([0.25, 0.5, 1.0, 1.5, 2.0])
    G = np.array([[cov_hermite(a, b, p) for b in ts] for a in ts])
    ev = np.linalg.eigvalsh(G)
    rep.add_flag("Gram matrix positive semidefinite", ev.min() >= -1e-8 * ev.max(), ev.min(), ev.max())
    fp = FilterParams(p, 0.2)
    rep.add("filtered symmetry", cov_filtered_hermite(1.0, 0.5, fp), cov_filtered_hermite(0.5, 1.0, fp), 1e-12)
    rep.add("filtered variance vs chain with numeric filter overlap", cumulant_filtered_rosenblatt(1.0, 2, fp),
            cov_filtered_hermite(1.0, 1.0, fp), 1e-4)
    return rep


def suite_variance_cumulant() -> CheckReport:
    rep = CheckReport("variance-cumulant")
    for H in (0.6, 0.75, 0.9):
        for lam in (0.5, 1.0):
            p = params_from_H(2, H, lam)
            rep.add(f"C_2 = var H={H} lam={lam}", cumulant_rosenblatt(1.0, 2, p), cov_hermite(1.0, 1.0, p), 1e-4)
    return rep


def discrete_trace_check(M: int = 256, t: float = 1.0, H: float = 0.75, lam: float = 1.0,
                         orders=(2, 3), tol: float = 0.01) -> CheckReport:
    """Cell-projected trace cumulants against the analytic chain on M and 2M cells."""
    from .kernels import cell_kernel_matrix
    from .simulate import ChaosGrid
    rep = CheckReport("discrete-trace")
    p = params_from_H(2, H, lam)
    g1, g2 = ChaosGrid.build(M, t, lam), ChaosGrid.build(2 * M, t, lam)
    C1, C2 = cell_kernel_matrix(g1.edges, t, p), cell_kernel_matrix(g2.edges, t, p)
    factor = g1.delta / g2.delta
    for m in orders:
        a = cumulant_rosenblatt(t, m, p)
        c1, c2 = cumulant_I2_discrete(C1, m), cumulant_I2_discrete(C2, m)
        rate = discrete_chain_rate(m, p.d)
        ex = richardson(c1, c2, rate, factor)
        rep.add_flag(f"m={m} raw gap M={M}: {abs(c1 - a) / abs(a):.4%}", True, c1, a)
        rep.add_flag(f"m={m} raw gap M={2 * M}: {abs(c2 - a) / abs(a):.4%}", True, c2, a)
        rep.add_flag(f"m={m} refinement moves toward analytic", abs(c2 - a) < abs(c1 - a), c2, a)
        rep.add(f"m={m} extrapolated (rate {rate:.3g}) vs analytic", ex, a, tol)
    return rep


def suite_cumulants() -> CheckReport:
    rep = suite_variance_cumulant()
    p = params_from_H(2, 0.75, 1.0)
    c4 = cumulant_rosenblatt(1.0, 4, p)
    rep.add_flag("C_4 > 0", c4 > 0, c4)
    rep.extend(discrete_trace_check())
    return rep


def suite_scaling(cs=(0.5, 2.0, 10.0), orders=(3,)) -> CheckReport:
    rep = CheckReport("scaling")
    p = params_from_H(2, 0.75, 1.0)
    for c in cs:
        rep.extend(verify_scaling(p, c, 1.0, orders, tol_cov=1e-5, tol_cum=1e-3))
    return rep


def suite_stationarity() -> CheckReport:
    p = params_from_H(2, 0.75, 1.0)
    rep = verify_stationarity(p, [(0.5, 1.0), (2.0, 1.0), (5.0, 1.0)], tol=1e-5)
    vals = [r.lhs for r in rep.rows]
    spread = (max(vals) - min(vals)) / max(vals)
    rep.add_flag(f"max pairwise spread {spread:.3e} <= 1e-5", spread <= 1e-5, max(vals), min(vals))
    return rep


LIMIT_LAMBDAS = (1.0, 0.3, 0.1, 0.03, 0.01)


def suite_limit(H: float = 0.55, orders=(2, 3), lambdas=LIMIT_LAMBDAS, final_tol: float = 0.05) -> CheckReport:
    """Gap to the lam -> 0 limit: strictly decreasing along lambdas, below final_tol at the last."""
    rep = CheckReport("limit")
    p = params_from_H(2, H, 1.0)
    for m in orders:
        lim = cumulant_limit_rosenblatt(1.0, m, p.d)
        gaps = [abs(cumulant_rosenblatt(1.0, m, p.with_lambda(l)) - lim) / abs(lim) for l in lambdas]
        desc = ", ".join(f"{g:.4f}" for g in gaps)
        rep.add_flag(f"m={m} gaps strictly decreasing [{desc}]", all(b < a for a, b in zip(gaps, gaps[1:])))
        rep.add_flag(f"m={m} gap at lam={lambdas[-1]} = {gaps[-1]:.4%} below {final_tol:.0%}",
                     gaps[-1] < final_tol, gaps[-1], final_tol)
    return rep


def simulation_moments_check(M: int = 512, reps: int = 20000, seed: int = 2024, H: float = 0.75,
                             lam: float = 1.0, bias_limit: float = 0.02) -> CheckReport:
    """Sample variance and k_3 of Z(1) against the analytic values.

    Each sample statistic must fall within 4 SE plus the discretization
    bias (exact cumulant of the simulated scheme minus analytic), and that
    bias must stay below bias_limit.
    """
    from .kernels import cell_kernel_matrix
    from .simulate import ChaosGrid, discrete_cumulant, k_statistics, simulate_tempered_rosenblatt
    rep = CheckReport("simulation-moments")
    p = params_from_H(2, H, lam)
    grid = ChaosGrid.build(M, 1.0, lam)
    C = cell_kernel_matrix(grid.edges, 1.0, p)
    paths = simulate_tempered_rosenblatt([0.0, 1.0], p, grid, reps, seed, matrices=[None, C])
    ks = k_statistics(paths.values[:, 1], 3)
    coarse = ChaosGrid.build(M // 2, 1.0, lam)
    Cc = cell_kernel_matrix(coarse.edges, 1.0, p)
    for m, (est, se) in ((2, ks[1]), (3, ks[2])):
        a = cumulant_rosenblatt(1.0, m, p)
        disc = discrete_cumulant(C, m)
        bias = (disc - a) / a
        bias_c = (discrete_cumulant(Cc, m) - a) / a
        _se_row(rep, f"k_{m} sample vs analytic", est, se, a, abs(disc - a))
        rep.add_flag(f"k_{m} bias M={M // 2}: {bias_c:.3%}, M={M}: {bias:.3%} (shrinks)", abs(bias) < abs(bias_c))
        rep.add_flag(f"k_{m} discretization bias {abs(bias):.3%} < {bias_limit:.0%}", abs(bias) < bias_limit,
                     disc, a)
    return rep


def fbm_covariance_check(Hs=(0.5, 0.7), reps: int = 10000, n_grid: int = 16, seed: int = 7) -> CheckReport:
    """Sample covariance of fBm on a 16-point grid within 4 SE of the exact covariance."""
    from .simulate import fbm_paths
    rep = CheckReport("fbm")
    for H in Hs:
        paths = fbm_paths(n_grid, H, 1.0, reps, seed)
        X = paths.values[:, 1:]
        t = paths.times[1:]
        exact = 0.5 * (t[:, None] ** (2 * H) + t[None, :] ** (2 * H) - np.abs(t[:, None] - t[None, :]) ** (2 * H))
        Xc = X - X.mean(axis=0)
        S = Xc.T @ Xc / (reps - 1)
        # SE of a sample covariance from the spread of the products
        prod = Xc[:, :, None] * Xc[:, None, :]
        se = prod.std(axis=0, ddof=1) / math.sqrt(reps)
        worst = np.max(np.abs(S - exact) / se)
        rep.add_flag(f"H={H}: max |S - exact| / se = {worst:.3f} <= 4", worst <= 4.0, worst, 4.0)
        rep.add_flag(f"H={H}: B(0) = 0", bool(np.all(paths.values[:, 0] == 0.0)))
    return rep


def suite_simulation(quick: bool = False) -> CheckReport:
    rep = CheckReport("simulation")
    if quick:
        rep.extend(simulation_moments_check(M=256, reps=4096))
    else:
        rep.extend(simulation_moments_check())
    rep.extend(fbm_covariance_check())
    return rep


def regression_check(ns=(256, 1024, 4096), x_eval=(-0.5, 0.0, 0.5), seeds: int = 50,
                     final_tol: float = 0.1, seed: int = 0):
    from .regress import RegressionConfig, consistency_experiment, default_noise
    base = RegressionConfig(n=ns[0], H1=0.7, kappa=0.2, kernel="gaussian", link="sin",
                            noise=default_noise(), normalization="divide_by_Sn")
    run = consistency_experiment(base, ns, x_eval, seeds, base_seed=seed)
    rep = CheckReport("regression")
    med = run.medians()
    for b, x in enumerate(x_eval):
        col = ", ".join(f"{v:.4f}" for v in med[:, b])
        rep.add_flag(f"x={x}: medians strictly decreasing in n [{col}]", bool(np.all(np.diff(med[:, b]) < 0)))
        rep.add_flag(f"x={x}: median at n={ns[-1]} = {med[-1, b]:.4f} < {final_tol}", med[-1, b] < final_tol,
                     med[-1, b], final_tol)
    return rep, run


def suite_regression(quick: bool = False) -> CheckReport:
    if quick:
        return regression_check(ns=(64, 256), seeds=8)[0]
    return regression_check()[0]


def run_suite(name: str, quick: bool = False) -> CheckReport:
    if name == "specfun":
        return suite_specfun()
    if name == "lemma-int":
        return suite_lemma_int()
    if name == "covariance":
        return suite_covariance()
    if name == "cumulants":
        return suite_cumulants()
    if name == "scaling":
        return suite_scaling(cs=(0.5, 2.0)) if quick else suite_scaling()
    if name == "stationarity":
        return suite_stationarity()
    if name == "limit":
        return suite_limit()
    if name == "simulation":
        return suite_simulation(quick)
    if name == "regression":
        return suite_regression(quick)
    raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
