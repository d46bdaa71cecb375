"""Covariances, cumulants and structural checks of tempered Hermite processes.

Notation used below, with nu = 1/2 - d:
    P(d, lam)   = Gamma(d) (2 lam)^nu / sqrt(pi)
    phi(r)      = r^{-nu} K_nu(lam r)
so that int (u-x)_+^{d-1} (v-x)_+^{d-1} e^{-lam(u-x)-lam(v-x)} dx = P phi(|u-v|).
"""
from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .kernels import FilterParams, HermiteParams
from .quadrature import (DEFAULT_SPEC, IntegrationResult, QuadratureSpec, gauss_legendre,
                         graded_rule, integrate_1d, integrate_2d_diag_singular, integrate_md)
from .specfun import bessel_k, gamma, gamma_signed


class ConvergenceError(ArithmeticError):
    """Quadrature ended without meeting its tolerance."""


def _checked(res: IntegrationResult, what: str) -> float:
    if not res.converged:
        raise ConvergenceError(f"{what}: quadrature did not converge "
                               f"(value {res.value:.6g}, error {res.error_estimate:.3g})")
    return res.value


def prefactor(d: float, lam: float) -> float:
    return gamma(d) * (2.0 * lam) ** (0.5 - d) / math.sqrt(math.pi)


def chain_factor(r, d: float, lam: float):
    """phi(r) = r^{d-1/2} K_{1/2-d}(lam r) for r > 0."""
    r = np.asarray(r, dtype=float)
    x = lam * r
    # below 1e-20 the leading small-argument term is exact to double precision
    tiny = x < 1e-20
    if not np.any(tiny):
        return r ** (d - 0.5) * bessel_k(0.5 - d, x)
    out = np.empty_like(r)
    out[~tiny] = r[~tiny] ** (d - 0.5) * bessel_k(0.5 - d, x[~tiny])
    nu = 0.5 - d
    out[tiny] = 2.0 ** (nu - 1.0) * gamma(nu) * lam ** (-nu) * r[tiny] ** (2.0 * d - 1.0)
    return out if out.ndim else float(out)


def bessel_product_identity(tau: float, lam: float, u: float, v: float) -> float:
    """Closed form of int e^{-lam(u-x)_+} e^{-lam(v-x)_+} (u-x)_+^{tau-1} (v-x)_+^{tau-1} dx."""
    if not 0.0 < tau < 0.5:
        raise ValueError("tau must lie in (0, 1/2)")
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    r = abs(u - v)
    if r == 0:
        raise ValueError("u = v: the integral diverges (use the small-argument limit)")
    return prefactor(tau, lam) * float(chain_factor(r, tau, lam))


def _diag_exponent(p: HermiteParams) -> float:
    return p.k * (2.0 * p.d - 1.0)


def _tail(rate: float, spec: QuadratureSpec) -> float:
    return spec.truncation_decades / rate


def _difference_integral(F: Callable, t: float, s: float, exponent: float, rate: float,
                         spec: QuadratureSpec, what: str) -> float:
    """int_0^t int_0^s F(|u - v|) du dv for a kernel decaying like e^{-rate r}."""
    if t <= 0 or s <= 0:
        return 0.0
    res = integrate_2d_diag_singular(F, ((0.0, t), (0.0, s)), exponent, spec,
                                     depends_on_difference=True, r_max=_tail(rate, spec))
    return _checked(res, what)


def cov_hermite(t: float, s: float, p: HermiteParams, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Covariance E[Z(t) Z(s)] for t, s >= 0 through the per-coordinate Bessel identity.

    k! P^k int_0^t int_0^s phi(|u - v|)^k du dv.
    """
    p.require_tempered()
    if t < 0 or s < 0:
        raise ValueError("cov_hermite: times must be >= 0")
    if t == 0 or s == 0:
        return 0.0
    F = lambda r: chain_factor(r, p.d, p.lam) ** p.k
    val = _difference_integral(F, t, s, _diag_exponent(p), p.k * p.lam, spec, "cov_hermite")
    return math.factorial(p.k) * prefactor(p.d, p.lam) ** p.k * val


def _autocorrelation_1d(g1: Callable, r: float, lam: float, spec: QuadratureSpec) -> float:
    """D(r) = int_0^inf g1(w) g1(r + w) e^{-2 lam w} dw."""
    hi = _tail(2.0 * lam, spec)
    f = lambda w: g1(w) * g1(r + w) * np.exp(-2.0 * lam * w)
    pts = [r] if 0 < r < hi else None
    return _checked(integrate_1d(f, 0.0, hi, spec.scaled(0.1), points=pts), "autocorrelation")


def cov_general_product(t: float, s: float, g1: Callable, p: HermiteParams,
                        spec: QuadratureSpec = DEFAULT_SPEC,
                        singular_exponent: float | None = None) -> float:
    """Covariance for a product kernel g(x) = prod g1(x_i), without the Bessel identity.

    k! int_0^t int_0^s e^{-lam k |u-v|} D(|u-v|)^k du dv with D computed by
    quadrature. g1 must vanish for arguments <= 0.
    """
    p.require_tempered()
    if t <= 0 or s <= 0:
        return 0.0
    ex = _diag_exponent(p) if singular_exponent is None else singular_exponent

    def F(r):
        r = np.asarray(r, dtype=float)
        D = np.array([_autocorrelation_1d(g1, float(ri), p.lam, spec) for ri in r.ravel()])
        return (np.exp(-p.lam * r.ravel()) * D).reshape(r.shape) ** p.k

    val = _difference_integral(F, t, s, ex, p.k * p.lam, spec, "cov_general_product")
    return math.factorial(p.k) * val


# ---- fractional filter ---------------------------------------------------------

def filter_autocorrelation(rho, beta: float):
    """A(rho) = int w(v) w(v + rho) dv for w(u) = (1-u)_+^beta - (-u)_+^beta, rho != 0.

    Closed form (C/2)(|rho+1|^{2b+1} - 2|rho|^{2b+1} + |rho-1|^{2b+1}) with
    C = Gamma(b+1)^2 / (Gamma(2b+2) sin(pi (b + 1/2))); at b = -1/2 the
    limit log|rho^2 - 1| - 2 log|rho| is used.
    """
    r = np.abs(np.asarray(rho, dtype=float))
    far = r > 2.0
    rf = np.where(far, r, 4.0)
    # |rho| > 2: even binomial series in 1/rho^2, free of the second-difference cancellation
    coef, powers = _autocorrelation_series(beta)
    series = np.zeros_like(rf)
    for c, a in zip(coef, powers):
        series += c * rf ** a
    if abs(beta + 0.5) < 1e-9:
        near = np.log(np.abs(r * r - 1.0)) - 2.0 * np.log(r)
    else:
        e = 2.0 * beta + 1.0
        C = _autocorrelation_constant(beta)
        near = 0.5 * C * ((r + 1.0) ** e - 2.0 * r ** e + np.abs(r - 1.0) ** e)
    out = np.where(far, series, near)
    return out if out.ndim else float(out)


_SERIES_LEN = 40


def _autocorrelation_constant(beta: float) -> float:
    e = 2.0 * beta + 1.0
    return gamma(beta + 1.0) ** 2 / (gamma(e + 1.0) * math.sin(math.pi * (beta + 0.5)))


def _autocorrelation_series(beta: float):
    """A(rho) = sum_j coef_j rho^{power_j} for |rho| > 1 (terms to 4^{-40} at rho = 2).

    From (1 + x)^e - 2 + (1 - x)^e = 2 sum_{j>=1} binom(e, 2j) x^{2j}, or
    log(1 - x^2) = -sum x^{2j}/j at beta = -1/2.
    """
    j = np.arange(1, _SERIES_LEN + 1)
    if abs(beta + 0.5) < 1e-9:
        return -1.0 / j, -2.0 * j
    e = 2.0 * beta + 1.0
    # generalized binomial coefficients binom(e, 2j) by the running product
    b = np.empty(2 * _SERIES_LEN + 1)
    b[0] = 1.0
    for i in range(1, b.size):
        b[i] = b[i - 1] * (e - i + 1) / i
    return _autocorrelation_constant(beta) * b[2 * j], e - 2.0 * j


_W_CHUNK = 2048


def filter_product_integral(offsets, beta: float, n: int = 8, levels: int = 24) -> np.ndarray:
    """W(o) = int_R prod_j w(x + o_j) dx for rows of offsets, shape (N, m).

    Breakpoints x = -o_j and 1 - o_j split the line; each finite segment gets
    a Gauss-Legendre rule graded geometrically towards both ends, the left
    tail one graded towards the last breakpoint and, after x = x0 - 1/u,
    towards u = 0.
    """
    o = np.atleast_2d(np.asarray(offsets, dtype=float))
    if o.shape[0] > _W_CHUNK:
        return np.concatenate([filter_product_integral(o[i:i + _W_CHUNK], beta, n, levels)
                               for i in range(0, o.shape[0], _W_CHUNK)])
    N, m = o.shape
    bp = np.sort(np.concatenate([-o, 1.0 - o], axis=1), axis=1)
    top = (1.0 - o).min(axis=1)          # integrand vanishes beyond this point
    bp = np.minimum(bp, top[:, None])

    def integrand(x):
        val = np.ones_like(x)
        for j in range(m):
            y = x + o[:, j].reshape((N,) + (1,) * (x.ndim - 1))
            f = np.zeros_like(y)
            pos = (y >= 0) & (y < 1)
            f[pos] = np.exp(beta * np.log1p(-y[pos]))
            neg = y < 0
            ay = -y[neg]
            # |y|^b ((1 + 1/|y|)^b - 1), free of cancellation for large |y|
            f[neg] = np.exp(beta * np.log(ay)) * np.expm1(beta * np.log1p(1.0 / ay))
            val *= f
        return val

    xg, wg, cg = graded_rule(n, levels, 0.2, both_ends=True, complement=True)
    lo, hi = bp[:, :-1, None], bp[:, 1:, None]
    L = hi - lo
    x = np.where(xg > 0.5, hi - L * cg, lo + L * xg)
    total = (integrand(x) * L * wg).sum(axis=(1, 2))
    x0 = bp[:, :1]
    xl, wl = graded_rule(n, levels, 0.2)
    total += (integrand(x0 - xl) * wl).sum(axis=1)
    total += (integrand(x0 - 1.0 / xl) * wl / xl ** 2).sum(axis=1)
    return total


def _filtered_variance_unit(mu: float, fp: FilterParams, spec: QuadratureSpec) -> float:
    """I(mu) = 2 int_0^inf [rho^{d-1/2} K_{1/2-d}(mu rho)]^k A(rho) drho."""
    p = fp.base
    G = lambda r: chain_factor(r, p.d, mu) ** p.k * filter_autocorrelation(r, fp.beta)
    e0 = _diag_exponent(p) + min(0.0, 2 * fp.beta + 1.0)
    e1 = min(0.0, 2 * fp.beta + 1.0)
    T = 2.0 + _tail(p.k * mu, spec)
    parts = []
    for a, b, ea, eb in ((0.0, 0.5, e0, 0.0), (0.5, 1.0, 0.0, e1), (1.0, 2.0, e1, 0.0)):
        parts.append(_integrate_with_endpoints(G, a, b, ea, eb, spec))
    parts.append(_checked(integrate_1d(G, 2.0, T, spec.scaled(0.25)), "filtered variance tail"))
    return 2.0 * math.fsum(parts)


def _integrate_with_endpoints(G, a, b, ea, eb, spec):
    """int_a^b G with |x-a|^ea and |x-b|^eb endpoint behaviour removed by substitution."""
    if ea < 0:
        qa = 1.0 / (1.0 + ea)
        f = lambda y: G(a + (b - a) * y ** qa) * (b - a) * qa * y ** (qa - 1.0)
        return _checked(integrate_1d(f, 0.0, 1.0, spec.scaled(0.25)), "filtered variance")
    if eb < 0:
        qb = 1.0 / (1.0 + eb)
        f = lambda y: G(b - (b - a) * y ** qb) * (b - a) * qb * y ** (qb - 1.0)
        return _checked(integrate_1d(f, 0.0, 1.0, spec.scaled(0.25)), "filtered variance")
    return _checked(integrate_1d(G, a, b, spec.scaled(0.25)), "filtered variance")


def filtered_exponent(fp: FilterParams) -> float:
    """Power of |t| in the filtered variance: 2 beta + 2 + k (d - 1/2)."""
    return 2.0 * fp.beta + 2.0 + fp.base.k * (fp.base.d - 0.5)


def filtered_variance(t: float, fp: FilterParams, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    p = fp.base
    p.require_tempered()
    r = abs(t)
    if r == 0:
        return 0.0
    I = _filtered_variance_unit(p.lam * r, fp, spec)
    return (math.factorial(p.k) * prefactor(p.d, p.lam) ** p.k * fp.scale ** 2
            * r ** filtered_exponent(fp) * I)


def cov_filtered_hermite(t: float, s: float, fp: FilterParams, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Covariance of the filtered process: (V(t) + V(s) - V(t - s)) / 2."""
    return 0.5 * (filtered_variance(t, fp, spec) + filtered_variance(s, fp, spec)
                  - filtered_variance(t - s, fp, spec))


# ---- cumulant chains -------------------------------------------------------------

def _cycle_classes(m: int):
    """Distinct cyclic orders of m sorted points with multiplicities (summing to m!)."""
    seen = {}
    for perm in itertools.permutations(range(m)):
        edges = tuple(sorted(tuple(sorted((perm[i], perm[(i + 1) % m]))) for i in range(m)))
        seen[edges] = seen.get(edges, 0) + 1
    return list(seen.items())


def _chain_gap_integrand(m: int, pair_fn: Callable):
    """Sum over orderings of prod over cycle edges of pair_fn(distance), in gap coordinates."""
    classes = _cycle_classes(m)

    def f(gaps):
        n = gaps.shape[0]
        cache = {}
        total = np.zeros(n)
        for edges, mult in classes:
            prod = np.full(n, float(mult))
            for (i, j) in edges:
                if (i, j) not in cache:
                    # summing gaps directly avoids cancellation between tiny and large gaps
                    cache[(i, j)] = pair_fn(gaps[:, i:j].sum(axis=1))
                prod = prod * cache[(i, j)]
            total += prod
        return total

    return f


def cumulant_constant(m: int) -> float:
    return 2.0 ** (m - 1) * math.factorial(m - 1)


def _chain_rule_size(m: int):
    # nodes per panel, grading depth and accepted relative error of the gap-mode rule
    return {2: (12, 28, 1e-6), 3: (10, 24, 1e-6), 4: (8, 12, 1e-5)}[m]


def cumulant_rosenblatt(t: float, m: int, p: HermiteParams, spec: QuadratureSpec = DEFAULT_SPEC,
                        points: int | None = None, levels: int | None = None) -> float:
    """m-th cumulant of the tempered second-chaos process at time t (k = 2).

    2^{m-1} (m-1)! P^m int_{[0,t]^m} prod_cyclic phi(|s_i - s_{i+1}|) ds.
    """
    if p.k != 2:
        raise ValueError("cumulant_rosenblatt requires k = 2")
    if not 2 <= m <= 4:
        raise ValueError("cumulant order m must lie in [2, 4]")
    p.require_tempered()
    if t <= 0:
        raise ValueError("t must be > 0")
    n0, l0, rtol = _chain_rule_size(m)
    f = _chain_gap_integrand(m, lambda r: chain_factor(r, p.d, p.lam))
    res = integrate_md(f, m, t, points=points or n0, levels=levels or l0, mode="gap",
                       spec=spec, rho_max=_tail(2.0 * p.lam, spec),
                       rho_exponent=min(0.0, 2.0 * p.d * m - 2.0))
    tol = max(spec.abs_tol, rtol * abs(res.value))
    if not (np.isfinite(res.value) and res.error_estimate <= tol):
        raise ConvergenceError(f"cumulant_rosenblatt: error estimate {res.error_estimate:.3g}")
    return cumulant_constant(m) * prefactor(p.d, p.lam) ** m * res.value


def cumulant_I2_discrete(A, m: int) -> float:
    """2^{m-1} (m-1)! trace(A^m) for a symmetric matrix A."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if m < 2:
        raise ValueError("m must be >= 2")
    if not np.allclose(A, A.T, rtol=1e-12, atol=1e-14 * max(1.0, np.abs(A).max(initial=0.0))):
        raise ValueError("A must be symmetric")
    if A.size == 0:
        return 0.0
    ev = np.linalg.eigvalsh(0.5 * (A + A.T))
    return cumulant_constant(m) * math.fsum(ev ** m)


def richardson(coarse: float, fine: float, rate: float, factor: float = 2.0) -> float:
    """Extrapolate fine + (fine - coarse)/(factor^rate - 1) for error ~ h^rate."""
    return fine + (fine - coarse) / (factor ** rate - 1.0)


def discrete_chain_rate(m: int, d: float) -> float:
    """Expected convergence exponent of cell-projected cumulants in the cell width."""
    return 2.0 * d * m - 1.0


def limit_constants(m: int, d: float) -> dict:
    """Candidate constants multiplying int prod |s_i - s_{i+1}|^{2d-1} in the lam -> 0 limit.

    derived: 2^{m-1} (m-1)! [2^{-2d} Gamma(d) Gamma(1/2-d) / sqrt(pi)]^m, the
             limit of P phi(r) ~ 2^{-2d} Gamma(d) Gamma(1/2-d)/sqrt(pi) r^{2d-1}.
    printed: 2^{-1} (m-1)! [Gamma(d) Gamma(d-1/2) / sqrt(pi)]^m.
    """
    c = 2.0 ** (-2.0 * d) * gamma(d) * gamma(0.5 - d) / math.sqrt(math.pi)
    printed = 0.5 * math.factorial(m - 1) * (gamma(d) * gamma_signed(d - 0.5) / math.sqrt(math.pi)) ** m
    return {"derived": cumulant_constant(m) * c ** m, "printed": printed}


def limit_constant_numeric(d: float, lam: float = 1e-8, r: float = 1.0) -> float:
    """P(d, lam) phi(r) r^{1-2d} at small lam: numeric version of the per-edge limit constant."""
    return prefactor(d, lam) * float(chain_factor(r, d, lam)) * r ** (1.0 - 2.0 * d)


def power_chain_integral(m: int, d: float, t: float = 1.0) -> float:
    """int_{[0,t]^m} prod_cyclic |s_i - s_{i+1}|^{2d-1} ds (t^{2dm} times the unit value)."""
    if m == 2:
        return 2.0 * t ** (4 * d) / ((4 * d - 1) * 4 * d)
    n0, l0, _ = _chain_rule_size(m)
    f = _chain_gap_integrand(m, lambda r: r ** (2 * d - 1))
    res = integrate_md(f, m, 1.0, points=n0, levels=l0 + 8, mode="gap",
                       rho_exponent=min(0.0, 2.0 * d * m - 2.0))
    return res.value * t ** (2 * d * m)


def cumulant_limit_rosenblatt(t: float, m: int, d: float, spec: QuadratureSpec = DEFAULT_SPEC,
                              constant: str = "derived") -> float:
    """lam -> 0 limit of the m-th cumulant: constant * int prod |s_i - s_{i+1}|^{2d-1}.

    constant selects "derived" (limit of the tempered constant) or "printed";
    limit_constants returns both.
    """
    if not 0.25 < d < 0.5:
        raise ValueError("d must lie in (1/4, 1/2)")
    if not 2 <= m <= 4:
        raise ValueError("cumulant order m must lie in [2, 4]")
    return limit_constants(m, d)[constant] * power_chain_integral(m, d, t)


def _rho_rule(mu: float, n: int, levels: int):
    """Nodes on (0, inf) for the spread of the points: graded panels on [0, 1]
    and [1, 2] (the filter overlap has kinks at spread 1), geometric panels
    on [2, T] with T set by the exponential decay at rate mu."""
    T = 2.0 + 40.0 / mu
    xb, wb, _ = graded_rule(n, levels, 0.2, both_ends=True, complement=True)
    xs, ws = [xb, 1.0 + xb], [wb, wb]
    tx, tw = gauss_legendre(n)
    edges = 2.0 + (T - 2.0) * (np.geomspace(1e-3, 1.0, 16) - 1e-3) / (1.0 - 1e-3)
    for a, b in zip(edges[:-1], edges[1:]):
        xs.append(a + (b - a) * tx)
        ws.append((b - a) * tw)
    return np.concatenate(xs), np.concatenate(ws)


def _filtered_chain_unit(m: int, mu: float, fp: FilterParams, n: int = 6, levels: int = 8,
                         wlevels: int = 12) -> float:
    """J_m(mu) = int_{R^m} prod w(u_j) prod_cyclic psi(|u_i - u_{i+1}|), m in {2, 3}.

    psi(r) = r^{d-1/2} K_{1/2-d}(mu r) and w the unit filter weight. Points
    are sorted and written through their spread rho and, for m = 3, the
    position b rho of the middle point; the filter enters through
    W(offsets) = int prod_j w(x + o_j) dx.
    """
    p = fp.base
    psi = lambda r: chain_factor(r, p.d, mu)
    if m == 2:
        # one-dimensional: afford a much finer rule
        rho, wrho = _rho_rule(mu, n + 6, levels + 16)
        W = filter_product_integral(np.stack([np.zeros_like(rho), rho], axis=1), fp.beta, 10, wlevels + 20)
        return 2.0 * math.fsum(wrho * psi(rho) ** 2 * W)
    if m != 3:
        raise ValueError("filtered chain implemented for m in {2, 3}")
    rho, wrho = _rho_rule(mu, n, levels)
    # b-panels split where the middle point sits a unit distance from an end
    inv = 1.0 / np.maximum(rho, 1e-300)
    brk = np.sort(np.stack([np.zeros_like(rho), np.ones_like(rho), np.clip(inv, 0.0, 1.0),
                            np.clip(1.0 - inv, 0.0, 1.0)], axis=1), axis=1)
    xg, wg, cg = graded_rule(n - 2, levels - 2, 0.2, both_ends=True, complement=True)
    lo, hi = brk[:, :-1, None], brk[:, 1:, None]
    L = hi - lo
    xb = np.where(xg > 0.5, hi - L * cg, lo + L * xg)             # (R, 3, nodes)
    cb = np.where(xg > 0.5, (1.0 - hi) + L * cg, 1.0 - xb)       # 1 - b without cancellation
    wb = L * wg
    R = np.broadcast_to(rho[:, None, None], xb.shape)
    a = R * xb
    c = R * cb
    W = filter_product_integral(np.stack([np.zeros(R.size), a.ravel(), R.ravel()], axis=1),
                                fp.beta, n - 2, wlevels).reshape(R.shape)
    ok = (a > 0) & (c > 0)
    vals = np.zeros_like(a)
    vals[ok] = R[ok] * psi(a[ok]) * psi(c[ok]) * psi(R[ok]) * W[ok]
    return 6.0 * math.fsum((wrho[:, None, None] * wb * vals).ravel())


def cumulant_filtered_rosenblatt(t: float, m: int, fp: FilterParams,
                                 spec: QuadratureSpec = DEFAULT_SPEC, refine: bool = False) -> float:
    """m-th cumulant (m in {2, 3}) of the filtered second-chaos process at time t.

    2^{m-1} (m-1)! P^m scale^m |t|^{m(beta + 1 + d - 1/2)} J_m(lam |t|).
    refine=True evaluates J_m with a finer rule.
    """
    p = fp.base
    if p.k != 2:
        raise ValueError("cumulant_filtered_rosenblatt requires k = 2")
    if m not in (2, 3):
        raise ValueError("cumulant order m must be 2 or 3")
    p.require_tempered()
    r = abs(t)
    if r == 0:
        return 0.0
    J = _filtered_chain_unit(m, p.lam * r, fp, *((8, 10, 14) if refine else (6, 8, 12)))
    expo = m * (fp.beta + 1.0 + p.d - 0.5)
    return cumulant_constant(m) * prefactor(p.d, p.lam) ** m * fp.scale ** m * r ** expo * J


def _power_series_tail(a: float, beta: float, R: float) -> float:
    """int_R^inf rho^a A(rho) drho termwise from the series of A (R > 1)."""
    coef, powers = _autocorrelation_series(beta)
    q = a + powers + 1.0
    if np.any(q >= 0):
        raise ValueError("filtered limit diverges: need 4d - 2 + 2 beta < 0")
    return math.fsum(coef * R ** q / (-q))


def cumulant_filtered_limit(t: float, fp: FilterParams, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """lam -> 0 limit of the filtered variance (k = 2).

    2 c^2 scale^2 |t|^{2 beta + 4d} int_R |a|^{4d-2} A(a) da with the
    derived per-edge constant c = 2^{-2d} Gamma(d) Gamma(1/2-d)/sqrt(pi).
    """
    p = fp.base
    if p.k != 2:
        raise ValueError("requires k = 2")
    d = p.d
    c = 2.0 ** (-2.0 * d) * gamma(d) * gamma(0.5 - d) / math.sqrt(math.pi)
    G = lambda r: r ** (4 * d - 2) * filter_autocorrelation(r, fp.beta)
    e0 = 4 * d - 2 + min(0.0, 2 * fp.beta + 1.0)
    e1 = min(0.0, 2 * fp.beta + 1.0)
    parts = [_integrate_with_endpoints(G, 0.0, 0.5, e0, 0.0, spec),
             _integrate_with_endpoints(G, 0.5, 1.0, 0.0, e1, spec),
             _integrate_with_endpoints(G, 1.0, 2.0, e1, 0.0, spec),
             _power_series_tail(4 * d - 2, fp.beta, 2.0)]
    return 2.0 * c * c * fp.scale ** 2 * abs(t) ** (2 * fp.beta + 4 * d) * 2.0 * math.fsum(parts)


# ---- structural checks --------------------------------------------------------

@dataclass
class CheckRow:
    name: str
    lhs: float
    rhs: float
    rel_err: float
    passed: bool


@dataclass
class CheckReport:
    title: str
    rows: list = field(default_factory=list)

    def add(self, name: str, lhs: float, rhs: float, tol: float, abs_floor: float = 0.0) -> CheckRow:
        denom = max(abs(rhs), abs(lhs), abs_floor, 1e-300)
        rel = abs(lhs - rhs) / denom if (lhs != rhs) else 0.0
        row = CheckRow(name, float(lhs), float(rhs), float(rel), bool(rel <= tol))
        self.rows.append(row)
        return row

    def add_flag(self, name: str, ok: bool, lhs: float = math.nan, rhs: float = math.nan) -> CheckRow:
        row = CheckRow(name, float(lhs), float(rhs), math.nan, bool(ok))
        self.rows.append(row)
        return row

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def max_rel_err(self) -> float:
        errs = [r.rel_err for r in self.rows if np.isfinite(r.rel_err)]
        return max(errs) if errs else 0.0

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write("name\tlhs\trhs\trel_err\tpass\n")
        for r in self.rows:
            buf.write(f"{r.name}\t{r.lhs:.17g}\t{r.rhs:.17g}\t{r.rel_err:.3e}\t{'PASS' if r.passed else 'FAIL'}\n")
        return buf.getvalue()

    def extend(self, other: "CheckReport"):
        self.rows.extend(other.rows)
        return self


def increment_second_moment(t: float, h: float, p: HermiteParams, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """E[(Z(t+h) - Z(t))^2] from the covariance function."""
    return (cov_hermite(t + h, t + h, p, spec) - 2.0 * cov_hermite(t + h, t, p, spec)
            + cov_hermite(t, t, p, spec))


def verify_stationarity(p: HermiteParams, pairs: Sequence, spec: QuadratureSpec = DEFAULT_SPEC,
                        tol: float = 1e-5) -> CheckReport:
    """Increment second moments depend on h only: compared with cov(h, h) for each (t, h)."""
    rep = CheckReport("stationarity")
    for t, h in pairs:
        lhs = increment_second_moment(t, h, p, spec)
        rhs = cov_hermite(h, h, p, spec) if h > 0 else 0.0
        rep.add(f"E[(Z({t}+{h})-Z({t}))^2] vs cov({h},{h})", lhs, rhs, tol)
    return rep


def verify_scaling(p: HermiteParams | FilterParams, c: float, t: float, orders: Sequence = (),
                   spec: QuadratureSpec = DEFAULT_SPEC, tol_cov: float = 1e-5,
                   tol_cum: float = 1e-3) -> CheckReport:
    """cov(ct, ct; lam) = c^{2H} cov(t, t; c lam) and C_m(ct; lam) = c^{mH} C_m(t; c lam).

    The right-hand sides use a finer quadrature rule than the left so the
    two sides do not share nodes.
    """
    rep = CheckReport("scaling")
    fine = spec.scaled(0.1)
    if isinstance(p, FilterParams):
        H = p.H_f
        lam = p.base.lam
        scaled = FilterParams(p.base.with_lambda(c * lam), p.beta, p.normalized)
        lhs = cov_filtered_hermite(c * t, c * t, p, spec)
        rhs = c ** (2 * H) * cov_filtered_hermite(t, t, scaled, fine)
        rep.add(f"filtered var c={c}", lhs, rhs, tol_cov)
        for m in orders:
            lhs = cumulant_filtered_rosenblatt(c * t, m, p, spec)
            rhs = c ** (m * H) * cumulant_filtered_rosenblatt(t, m, scaled, fine, refine=True)
            rep.add(f"filtered C_{m} c={c}", lhs, rhs, tol_cum)
        return rep
    H, lam = p.H, p.lam
    scaled = p.with_lambda(c * lam)
    lhs = cov_hermite(c * t, c * t, p, spec)
    rhs = c ** (2 * H) * cov_hermite(t, t, scaled, fine)
    rep.add(f"var c={c}", lhs, rhs, tol_cov)
    for m in orders:
        lhs = cumulant_rosenblatt(c * t, m, p, spec)
        n0, l0, _ = _chain_rule_size(m)
        rhs = c ** (m * H) * cumulant_rosenblatt(t, m, scaled, spec, points=n0 + 2, levels=l0 + 2)
        rep.add(f"C_{m} c={c}", lhs, rhs, tol_cum)
    return rep


@dataclass
class CumulantReport:
    order: int
    analytic: float
    limit_value: float
    limit_value_printed: float
    oracle: float = math.nan
    mc_estimate: float = math.nan
    mc_se: float = math.nan

    @property
    def limit_gap(self) -> float:
        return abs(self.analytic - self.limit_value) / abs(self.limit_value)


def cumulant_reports(t: float, m_max: int, p: HermiteParams | FilterParams,
                     spec: QuadratureSpec = DEFAULT_SPEC) -> list:
    if m_max > 4 or m_max < 2:
        raise ValueError("m_max must lie in [2, 4]")
    out = []
    for m in range(2, m_max + 1):
        if isinstance(p, FilterParams):
            if m > 3:
                raise ValueError("filtered cumulants available for m <= 3")
            a = cumulant_filtered_rosenblatt(t, m, p, spec)
            lim = cumulant_filtered_limit(t, p, spec) if m == 2 else math.nan
            out.append(CumulantReport(m, a, lim, math.nan))
        else:
            a = cumulant_rosenblatt(t, m, p, spec)
            lim = cumulant_limit_rosenblatt(t, m, p.d, spec)
            lp = cumulant_limit_rosenblatt(t, m, p.d, spec, constant="printed")
            out.append(CumulantReport(m, a, lim, lp))
    return out


def cumulant_reports_to_text(reports: Sequence) -> str:
    buf = io.StringIO()
    buf.write("order\tanalytic\tlimit\tlimit_printed_constant\tlimit_gap\toracle\tmc_estimate\tmc_se\n")
    for r in reports:
        buf.write(f"{r.order}\t{r.analytic:.17g}\t{r.limit_value:.17g}\t{r.limit_value_printed:.17g}\t"
                  f"{r.limit_gap:.6e}\t{r.oracle:.17g}\t{r.mc_estimate:.17g}\t{r.mc_se:.17g}\n")
    return buf.getvalue()
