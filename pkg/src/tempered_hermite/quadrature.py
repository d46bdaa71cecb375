"""Deterministic quadrature engines.

integrate_1d: vectorized adaptive Gauss-Kronrod (7/15) with bisection.
integrate_2d_diag_singular: rectangle split along u = v, graded in |u - v|.
integrate_md: ordered-simplex tensor rules or scrambled Sobol over [0, t]^m.

Integrands are always called with numpy arrays and must broadcast.
Reductions use math.fsum so results do not depend on panel order.
"""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_subdivisions: int = 2000
    truncation_decades: float = 40.0

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("QuadratureSpec: tolerances must be > 0")
        if self.max_subdivisions < 1:
            raise ValueError("QuadratureSpec: max_subdivisions must be >= 1")
        if self.truncation_decades < 10:
            raise ValueError("QuadratureSpec: truncation_decades must be >= 10")

    def tol(self, value: float) -> float:
        return max(self.abs_tol, self.rel_tol * abs(value))

    def scaled(self, factor: float) -> "QuadratureSpec":
        """Same spec with both tolerances multiplied by factor."""
        return QuadratureSpec(self.abs_tol * factor, self.rel_tol * factor,
                              self.max_subdivisions, self.truncation_decades)


DEFAULT_SPEC = QuadratureSpec()


@dataclass
class IntegrationResult:
    value: float
    error_estimate: float
    evaluations: int
    converged: bool

    def __float__(self):
        return float(self.value)


# Gauss-Kronrod 7/15 nodes on [-1, 1]
_XK = np.array([
    -0.991455371120812639206854697526329, -0.949107912342758524526189684047851,
    -0.864864423359769072789712788640926, -0.741531185599394439863864773280788,
    -0.586087235467691130294144845693013, -0.405845151377397166906606412076961,
    -0.207784955007898467600689403773245, 0.0,
    0.207784955007898467600689403773245, 0.405845151377397166906606412076961,
    0.586087235467691130294144845693013, 0.741531185599394439863864773280788,
    0.864864423359769072789712788640926, 0.949107912342758524526189684047851,
    0.991455371120812639206854697526329])
_WK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
    0.204432940075298892414161999234649, 0.190350578064785409913256402421014,
    0.169004726639267902826583426598550, 0.140653259715525918745189590510238,
    0.104790010322250183839876322541518, 0.063092092629978553290700663189204,
    0.022935322010529224963732008058970])
_WG = np.zeros(15)
_WG[[1, 3, 5, 7, 9, 11, 13]] = [
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
    0.381830050505118944950369775488975, 0.279705391489276667901467771423780,
    0.129484966168869693270611432679082]


def _gk_panels(f, a: np.ndarray, b: np.ndarray):
    c = 0.5 * (a + b)
    hw = 0.5 * (b - a)
    x = c[:, None] + hw[:, None] * _XK[None, :]
    fx = np.asarray(f(x), dtype=float)
    if fx.shape != x.shape:
        fx = np.broadcast_to(fx, x.shape)
    if not np.all(np.isfinite(fx)):
        raise FloatingPointError("integrand returned non-finite values")
    k = hw * (fx @ _WK)
    g = hw * (fx @ _WG)
    mean = k / np.where(hw > 0, 2 * hw, 1.0)
    asc = hw * (np.abs(fx - mean[:, None]) @ _WK)
    err = np.abs(k - g)
    # QUADPACK-style rescaling of the raw Gauss/Kronrod difference
    scale = np.where(asc > 0, np.minimum(1.0, (200.0 * err / np.where(asc > 0, asc, 1.0)) ** 1.5), 1.0)
    err = np.where(asc > 0, asc * scale, err)
    roundoff = 50 * np.finfo(float).eps * np.abs(hw * (np.abs(fx) @ _WK))
    err = np.maximum(err, roundoff)
    return k, err


def _map_infinite(f, a: float, b: float):
    """Map (a, inf), (-inf, b) or the whole line onto a bounded interval.

    Nodes that round onto the mapped endpoint (the point at infinity)
    contribute zero.
    """
    def guard(t, c):
        ok = c > 0
        return ok, np.where(ok, c, 1.0)

    if np.isinf(a) and np.isinf(b):
        def g(t):
            ok, c = guard(t, 1 - t * t)
            return np.where(ok, f(t / c) * (1 + t * t) / c ** 2, 0.0)
        return g, -1.0, 1.0
    if np.isinf(b):
        def g(t):
            ok, c = guard(t, 1 - t)
            return np.where(ok, f(a + t / c) / c ** 2, 0.0)
        return g, 0.0, 1.0

    def g(t):
        ok, c = guard(t, 1 - t)
        return np.where(ok, f(b - t / c) / c ** 2, 0.0)
    return g, 0.0, 1.0


def integrate_1d(f: Callable, a: float, b: float, spec: QuadratureSpec = DEFAULT_SPEC,
                 points=None) -> IntegrationResult:
    """Adaptive bisection with a 7/15 Gauss-Kronrod pair.

    `points` are interior breakpoints (kinks, singularities) used as initial
    panel edges. Infinite limits are mapped onto a bounded interval.
    Non-finite integrand values end the run with converged = False.
    """
    try:
        return _integrate_1d(f, a, b, spec, points)
    except FloatingPointError:
        return IntegrationResult(math.nan, math.inf, 0, False)


def _integrate_1d(f, a, b, spec, points):
    if not a < b:
        if a == b:
            return IntegrationResult(0.0, 0.0, 0, True)
        raise ValueError("integrate_1d: need a < b")
    if np.isinf(a) or np.isinf(b):
        if points is not None and len(points):
            # split at the breakpoints, map only the infinite pieces
            edges = [a] + sorted(p for p in points if a < p < b) + [b]
            parts = [_integrate_1d(f, lo, hi, spec, None) for lo, hi in zip(edges[:-1], edges[1:])]
            return _combine(parts, spec)
        g, a, b = _map_infinite(f, a, b)
        f = g

    fw = f
    edges = [a] + sorted(float(p) for p in (points or []) if a < p < b) + [b]
    lo = np.array(edges[:-1])
    hi = np.array(edges[1:])
    vals, errs = _gk_panels(fw, lo, hi)
    nev = 15 * lo.size
    heap = [(-e, i) for i, e in enumerate(errs)]
    heapq.heapify(heap)
    panels = {i: (lo[i], hi[i], vals[i], errs[i]) for i in range(lo.size)}
    next_id = lo.size
    nsub = lo.size
    while True:
        total = math.fsum(p[2] for p in panels.values())
        err = math.fsum(p[3] for p in panels.values())
        tol = spec.tol(total)
        if err <= tol:
            return IntegrationResult(total, err, nev, True)
        if nsub >= spec.max_subdivisions:
            return IntegrationResult(total, err, nev, False)
        # split the worst panels that together carry the excess error
        batch = []
        excess = err - 0.5 * tol
        while heap and excess > 0 and len(batch) < 64:
            ne, i = heapq.heappop(heap)
            batch.append(i)
            excess += ne
        if not batch:
            return IntegrationResult(total, err, nev, False)
        blo = np.array([panels[i][0] for i in batch])
        bhi = np.array([panels[i][1] for i in batch])
        mid = 0.5 * (blo + bhi)
        if np.any((mid <= blo) | (mid >= bhi)):
            return IntegrationResult(total, err, nev, False)
        nlo = np.concatenate([blo, mid])
        nhi = np.concatenate([mid, bhi])
        nv, ne_ = _gk_panels(fw, nlo, nhi)
        nev += 15 * nlo.size
        for i in batch:
            del panels[i]
        for j in range(nlo.size):
            panels[next_id] = (nlo[j], nhi[j], nv[j], ne_[j])
            heapq.heappush(heap, (-ne_[j], next_id))
            next_id += 1
        nsub += len(batch)


def _combine(parts, spec) -> IntegrationResult:
    v = math.fsum(p.value for p in parts)
    e = math.fsum(p.error_estimate for p in parts)
    return IntegrationResult(v, e, sum(p.evaluations for p in parts),
                             all(p.converged for p in parts) and e <= spec.tol(v) * len(parts))


def tail_cutoff(rate: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Distance beyond which a factor e^{-rate w} has dropped by truncation_decades e-folds."""
    if rate <= 0:
        raise ValueError("tail_cutoff: rate must be > 0")
    return spec.truncation_decades / rate


def gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def graded_rule(n: int, levels: int, ratio: float = 0.15, both_ends: bool = False,
                 complement: bool = False):
    """Composite Gauss-Legendre on [0, 1], geometrically graded toward 0 (and 1).

    Panels [0, q^L], [q^L, q^{L-1}], ..., [q, 1]; integrands like x^p with
    p > -1 converge geometrically in `levels`. With complement=True the
    array 1 - x is returned as well, computed without cancellation.
    """
    x0, w0 = gauss_legendre(n)
    if both_ends:
        xl, wl = graded_rule(n, levels, ratio)
        x = np.concatenate([0.5 * xl, 1 - 0.5 * xl[::-1]])
        c = np.concatenate([1 - 0.5 * xl, 0.5 * xl[::-1]])
        w = np.concatenate([0.5 * wl, 0.5 * wl[::-1]])
        return (x, w, c) if complement else (x, w)
    edges = np.concatenate([[0.0], ratio ** np.arange(levels, -1, -1)])
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        xs.append(lo + (hi - lo) * x0)
        ws.append((hi - lo) * w0)
    x, w = np.concatenate(xs), np.concatenate(ws)
    return (x, w, 1.0 - x) if complement else (x, w)


def integrate_2d_diag_singular(f: Callable, domain, singular_exponent: float,
                               spec: QuadratureSpec = DEFAULT_SPEC, inner_nodes: int = 24,
                               depends_on_difference: bool = False, r_max: float | None = None
                               ) -> IntegrationResult:
    """Integrate f(u, v) over [u0, u1] x [v0, v1] with a |u - v|^p diagonal singularity.

    Each half (u > v, u < v) is written in (r, position) with r = |u - v|;
    the outer r-integral uses r = R y^{1/(1+p)} so that r^p dr is bounded,
    the inner integral along the diagonal direction is Gauss-Legendre.
    With depends_on_difference=True, f is called as f(r) with r = |u - v|
    and the inner integral is the exact overlap length. r_max truncates
    the outer integral (tempered integrands). In the general mode |u - v|
    is recomputed from the points and cannot resolve gaps below machine
    precision, so strong singularities (p near -1) need the difference mode.
    """
    (u0, u1), (v0, v1) = domain
    p = float(singular_exponent)
    if not -1.0 < p <= 0.0:
        raise ValueError("singular_exponent must lie in (-1, 0]")
    if u1 <= u0 or v1 <= v0:
        return IntegrationResult(0.0, 0.0, 0, True)
    xg, wg = gauss_legendre(inner_nodes)
    q = 1.0 / (1.0 + p)
    parts = []
    # points a in [a0, a1] and b = a + r in [b0, b1]; half 1 has u = b, half 2 v = b
    for (a0, a1, b0, b1, swap) in ((v0, v1, u0, u1, False), (u0, u1, v0, v1, True)):
        R = b1 - a0
        if R <= 0:
            continue
        rmin = max(0.0, b0 - a1)
        if r_max is not None:
            if rmin >= r_max:
                continue
            R = min(R, r_max)

        def outer(y, a0=a0, a1=a1, b0=b0, b1=b1, swap=swap, R=R):
            r = R * y ** q
            jac = R * q * y ** (q - 1.0)
            lo = np.maximum(a0, b0 - r)
            hi = np.minimum(a1, b1 - r)
            ln = np.clip(hi - lo, 0.0, None)
            if depends_on_difference:
                return jac * ln * np.asarray(f(r), dtype=float)
            a = lo[..., None] + ln[..., None] * xg
            b = a + r[..., None]
            fv = f(b, a) if not swap else f(a, b)
            fv = np.broadcast_to(np.asarray(fv, dtype=float), a.shape)
            return jac * ln * (fv @ wg)

        # kinks of the overlap length as a function of r
        ks = sorted({(k / R) ** (1.0 / q) for k in (b0 - a0, b1 - a1, b0 - a1, b1 - a0)
                     if 0.0 < k < R})
        ylo = (rmin / R) ** (1.0 / q) if rmin > 0 else 0.0
        ks = [k for k in ks if k > ylo]
        parts.append(integrate_1d(outer, ylo, 1.0, spec.scaled(0.5), points=ks))
    if not parts:
        return IntegrationResult(0.0, 0.0, 0, True)
    res = _combine(parts, spec)
    if not depends_on_difference:
        res.evaluations *= inner_nodes
    return res


_MAX_DIM = 5


def _simplex_rule(m: int, n: int, levels: int, ratio: float):
    """Nodes on the unit simplex of m-1 gaps in (rho, stick-breaking) coordinates.

    Returns rho (N,), unit gaps (N, m-1) summing to one, and weights (N,)
    holding the product rule weights and the stick-breaking Jacobian; the
    remaining factor rho^{m-2} drho is left to the caller.
    """
    xr, wr = graded_rule(n, levels, ratio)
    xb, wb, cb = graded_rule(n, levels, ratio, both_ends=True, complement=True)
    idx = np.meshgrid(*([np.arange(xr.size)] + [np.arange(xb.size)] * (m - 2)), indexing="ij")
    idx = [i.ravel() for i in idx]
    rho = xr[idx[0]]
    w = wr[idx[0]].copy()
    unit = np.empty((rho.size, m - 1))
    rem = np.ones_like(rho)
    for j in range(m - 2):
        b, c = xb[idx[j + 1]], cb[idx[j + 1]]
        w = w * wb[idx[j + 1]] * c ** (m - 3 - j)
        unit[:, j] = rem * b
        rem = rem * c
    unit[:, m - 2] = rem
    return rho, unit, w


def integrate_md(f: Callable, m: int, t: float = 1.0, method: str = "tensor", points: int = 10,
                 spec: QuadratureSpec = DEFAULT_SPEC, mode: str = "cube", levels: int | None = None,
                 replicates: int = 16, seed: int = 0, ratio: float = 0.2,
                 rho_max: float | None = None, rho_exponent: float = 0.0) -> IntegrationResult:
    """Integrate over the cube [0, t]^m (m <= 5).

    mode="cube": f takes an (N, m) array of points.
    mode="gap": the integrand depends on the sorted points only through their
    consecutive gaps and is already summed over all m! orderings; f takes an
    (N, m-1) array of gaps. Translation along the diagonal is integrated
    exactly (factor t - sum of gaps), and the total gap may be truncated at
    rho_max when the integrand decays. rho_exponent e > -1 declares that the
    integrand, including the rho^{m-2} volume factor, behaves like rho^e at
    small total gap; rho = y^{1/(1+e)} then removes that singularity.

    Tensor method: ordered simplices, graded Gauss-Legendre with `points`
    nodes per panel; the error estimate is the difference with a coarser rule.
    Quasi-random method: scrambled Sobol replicates of 2^points points each,
    error = standard error over replicates (cube mode only).
    """
    if m > _MAX_DIM:
        raise ValueError(f"integrate_md: dimension {m} above limit {_MAX_DIM}")
    if m < 1:
        raise ValueError("integrate_md: m must be >= 1")
    if method == "quasi-random":
        if mode != "cube":
            raise ValueError("quasi-random method supports mode='cube' only")
        from scipy.stats import qmc
        ests = []
        for r in range(replicates):
            sob = qmc.Sobol(d=m, scramble=True, seed=np.random.default_rng([seed, r]))
            x = sob.random_base2(points) * t
            ests.append(math.fsum(np.asarray(f(x), dtype=float)) / x.shape[0] * t ** m)
        v = math.fsum(ests) / replicates
        se = float(np.std(ests, ddof=1) / math.sqrt(replicates)) if replicates > 1 else math.inf
        ok = bool(np.isfinite(v) and se <= spec.tol(v))
        return IntegrationResult(v, se, replicates * 2 ** points, ok)
    if method != "tensor":
        raise ValueError(f"integrate_md: unknown method {method!r}")
    if mode not in ("cube", "gap"):
        raise ValueError(f"integrate_md: unknown mode {mode!r}")
    if levels is None:
        # cube mode reconstructs points, so gaps below ~1e-12 lose all digits
        levels = 24 if mode == "gap" else 6

    def evaluate(n, lev):
        if m == 1:
            if mode == "gap":
                return t * float(np.asarray(f(np.zeros((1, 0))), dtype=float).ravel()[0]), 1
            xg, wg = gauss_legendre(max(n, 2))
            return math.fsum(t * wg * np.asarray(f((t * xg)[:, None]), dtype=float)), xg.size
        R = t if rho_max is None or mode == "cube" else min(t, rho_max)
        rho, unit, w = _simplex_rule(m, n, lev, ratio)
        if mode == "gap" and rho_exponent != 0.0:
            q = 1.0 / (1.0 + rho_exponent)
            w = w * q * rho ** (q - 1.0)
            rho = rho ** q
            # nodes whose spread underflows carry negligible weight
            keep = rho > 1e-280
            rho, unit, w = rho[keep], unit[keep], w[keep]
        rho = R * rho
        gaps = rho[:, None] * unit
        w = w * R * rho ** (m - 2)
        span = t - rho
        if mode == "gap":
            return math.fsum(w * span * np.asarray(f(gaps), dtype=float)), gaps.shape[0]
        # translation coordinate a = span * z, z in [0, 1]
        xz, wz = gauss_legendre(n)
        total = []
        nev = 0
        cums = np.concatenate([np.zeros((gaps.shape[0], 1)), np.cumsum(gaps, axis=1)], axis=1)
        for perm in itertools.permutations(range(m)):
            acc = np.zeros(gaps.shape[0])
            for zk, wk in zip(xz, wz):
                sorted_pts = span[:, None] * zk + cums
                pts = np.empty_like(sorted_pts)
                pts[:, list(perm)] = sorted_pts
                acc += wk * np.asarray(f(pts), dtype=float)
                nev += pts.shape[0]
            total.append(math.fsum(w * span * acc))
        return math.fsum(total), nev

    fine, n1 = evaluate(points, levels)
    coarse, n2 = evaluate(max(points - 2, 2), max(levels - 4, 4))
    err = abs(fine - coarse)
    ok = bool(np.isfinite(fine) and err <= spec.tol(fine))
    return IntegrationResult(fine, err, n1 + n2, ok)
