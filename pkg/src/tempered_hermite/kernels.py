"""Parameter algebra and kernel functions of tempered Hermite-type processes."""
from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .quadrature import (DEFAULT_SPEC, IntegrationResult, QuadratureSpec, graded_rule,
                         integrate_1d)


def _close(a: float, b: float, tol: float = 1e-10) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


@dataclass(frozen=True)
class HermiteParams:
    """Order k, Hurst index H, per-coordinate exponent d, homogeneity alpha, tempering lam.

    d = 1/2 - (1 - H)/k and alpha = H - k/2 - 1 = k(d - 1) are tied to H;
    construct through params_from_H unless all fields are already consistent.
    """
    k: int
    H: float
    d: float
    alpha: float
    lam: float

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be an integer >= 1, got {self.k}")
        if not 0.5 < self.H < 1.0:
            raise ValueError(f"H must lie in (1/2, 1), got {self.H}")
        lo, hi = 0.5 - 0.5 / self.k, 0.5
        if not lo < self.d < hi:
            raise ValueError(f"d must lie in ({lo}, {hi}), got {self.d}")
        if not _close(self.d, 0.5 - (1.0 - self.H) / self.k):
            raise ValueError("d inconsistent with H: need d = 1/2 - (1-H)/k")
        if not _close(self.alpha + 1.0, self.H - self.k / 2):
            raise ValueError("alpha inconsistent with H: need alpha + 1 = H - k/2")
        a_lo, a_hi = -(self.k + 1) / 2, -self.k / 2
        if not a_lo < self.alpha < a_hi:
            raise ValueError(f"alpha must lie in ({a_lo}, {a_hi}), got {self.alpha}")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lambda must be >= 0, got {self.lam}")

    def with_lambda(self, lam: float) -> "HermiteParams":
        return HermiteParams(self.k, self.H, self.d, self.alpha, float(lam))

    def require_tempered(self):
        if not self.lam > 0:
            raise ValueError("lambda must be > 0 for direct evaluation (0 is limit-only)")


def params_from_H(k: int, H: float, lam: float) -> HermiteParams:
    if int(k) != k or k < 1:
        raise ValueError(f"k must be an integer >= 1, got {k}")
    if not 0.5 < H < 1.0:
        raise ValueError(f"H must lie in (1/2, 1), got {H}")
    if not lam >= 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    d = 0.5 - (1.0 - H) / k
    return HermiteParams(int(k), float(H), d, H - k / 2 - 1.0, float(lam))


@dataclass(frozen=True)
class FilterParams:
    """Fractional filter exponent beta on top of a Hermite parameter set."""
    base: HermiteParams
    beta: float
    normalized: bool = True

    def __post_init__(self):
        a, k = self.base.alpha, self.base.k
        lo, hi = -a - k / 2 - 1.0, -a - k / 2
        if self.beta == 0:
            raise ValueError("beta must be nonzero (use the indicator branch for beta = 0)")
        if not lo < self.beta < hi:
            raise ValueError(f"beta must lie in ({lo}, {hi}), got {self.beta}")

    @property
    def H_f(self) -> float:
        """Self-similarity exponent of the filtered process."""
        return self.beta + 1.0 + self.base.alpha + self.base.k / 2

    @property
    def scale(self) -> float:
        """Factor carried by the filter weight: 1/beta when normalized."""
        return 1.0 / self.beta if self.normalized else 1.0


def hermite_g(x, d: float):
    """prod_j (x_j)_+^{d-1} over the last axis; zero when any x_j <= 0."""
    xa = np.asarray(x, dtype=float)
    pos = xa > 0
    safe = np.where(pos, xa, 1.0)
    out = np.prod(safe ** (d - 1.0), axis=-1)
    return np.where(np.all(pos, axis=-1), out, 0.0)


@dataclass
class H1Report:
    passed: bool
    max_violation: float
    rows: list = field(default_factory=list)


def check_h1(g: Callable, alpha: float, samples: Sequence, tol: float = 1e-10) -> H1Report:
    """Homogeneity g(c x) = c^alpha g(x) at each sample (c, x); relative violations."""
    rows = []
    worst = 0.0
    for c, x in samples:
        x = np.asarray(x, dtype=float)
        lhs = float(g(c * x))
        rhs = float(c ** alpha * g(x))
        viol = abs(lhs - rhs) / max(abs(rhs), 1e-300)
        rows.append((float(c), tuple(x.tolist()), lhs, rhs, viol))
        worst = max(worst, viol)
    return H1Report(worst <= tol, worst, rows)


def check_h2(g: Callable, k: int, lam: float, u: float, spec: QuadratureSpec = DEFAULT_SPEC,
             nodes: int = 12, levels: int = 30) -> IntegrationResult:
    """Integrability test int_{R_+^k} |g(y) g(1+y)| prod_j e^{-2 lam u y_j} dy.

    k = 1 uses adaptive quadrature on (0, inf). For k >= 2 a product rule is
    used: each axis is graded toward 0, truncated where the tempering has
    decayed by truncation_decades e-folds (or mapped from (0, inf) when
    lam*u = 0); converged compares two resolutions. Divergence shows up as
    converged = False.
    """
    rate = 2.0 * lam * u
    if rate < 0:
        raise ValueError("check_h2: lam * u must be >= 0")

    def integrand(y):
        y = np.asarray(y, dtype=float)
        return np.abs(g(y) * g(1.0 + y)) * np.exp(-rate * y.sum(axis=-1))

    if k == 1:
        f1 = lambda y: integrand(y[..., None])
        hi = spec.truncation_decades / rate if rate > 0 else np.inf
        pts = [1.0] if hi > 1.0 else None
        return integrate_1d(f1, 0.0, hi, spec, points=pts)

    def product_rule(n, lev):
        x, w = graded_rule(n, lev)
        if rate > 0:
            T = spec.truncation_decades / rate
            y, wy = T * x, T * w
        else:
            # y = z/(1-z): graded near z=0 and z=1
            x, w, c = graded_rule(n, lev, both_ends=True, complement=True)
            y, wy = x / c, w / c ** 2
        grids = np.meshgrid(*([np.arange(y.size)] * k), indexing="ij")
        idx = np.stack([gi.ravel() for gi in grids], axis=-1)
        vals = integrand(y[idx]) * np.prod(wy[idx], axis=-1)
        return math.fsum(vals), idx.shape[0]

    fine, n1 = product_rule(nodes, levels)
    coarse, n2 = product_rule(max(nodes - 2, 2), max(levels - 4, 4))
    err = abs(fine - coarse)
    ok = bool(np.isfinite(fine) and err <= max(spec.abs_tol, 1e-6 * abs(fine)))
    return IntegrationResult(fine, err, n1 + n2, ok)


def tempered_time_kernel(t: float, x, p: HermiteParams, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """h_t(x) = int_{max(0, max x)}^t prod_j (s - x_j)^{d-1} e^{-lam (s - x_j)} ds.

    Zero when max x >= t. Coincident maximal coordinates make the lower
    endpoint singularity non-integrable when their multiplicity m has
    m(d - 1) <= -1; the kernel is then +inf.
    """
    if not t > 0:
        raise ValueError("tempered_time_kernel: t must be > 0")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != p.k:
        raise ValueError(f"x must have {p.k} coordinates")
    xmax = float(x.max())
    if xmax >= t:
        return 0.0
    lo = max(0.0, xmax)
    mult = int(np.sum(x == xmax)) if xmax >= 0 else 0
    e = mult * (p.d - 1.0)
    if mult and e <= -1.0:
        return math.inf
    # s = lo + L y^q absorbs the (s - lo)^e endpoint behaviour
    L = t - lo
    q = 1.0 / (1.0 + e) if mult else 1.0

    offset = lo - x      # exact zero for the maximal coordinates

    def f(y):
        ds = L * q * y ** (q - 1.0)
        diff = offset + (L * y ** q)[..., None]
        val = np.prod(np.where(diff > 0, diff, 1.0) ** (p.d - 1.0), axis=-1)
        val = val * np.exp(-p.lam * diff.sum(axis=-1))
        return val * ds

    res = integrate_1d(f, 0.0, 1.0, spec)
    if not res.converged:
        raise ArithmeticError(f"tempered_time_kernel: quadrature did not converge (err {res.error_estimate:g})")
    return res.value


def filter_weight(t: float, s, beta: float, normalized: bool = True):
    """(1/beta)[(t - s)_+^beta - (-s)_+^beta], without 1/beta when normalized is False."""
    if beta == 0:
        raise ValueError("filter_weight: beta = 0 is the indicator branch, see filter_indicator")
    sa = np.asarray(s, dtype=float)
    a = t - sa
    b = -sa
    pa = np.where(a > 0, np.where(a > 0, a, 1.0) ** beta, 0.0)
    pb = np.where(b > 0, np.where(b > 0, b, 1.0) ** beta, 0.0)
    out = pa - pb
    if normalized:
        out = out / beta
    return out if out.ndim else float(out)


def filter_indicator(t: float, s):
    """Degenerate beta = 0 branch: 1 on [0, t) for t > 0 (sign-flipped on [t, 0) for t < 0)."""
    sa = np.asarray(s, dtype=float)
    out = np.where((sa >= min(0.0, t)) & (sa < max(0.0, t)), 1.0, 0.0) * (1.0 if t >= 0 else -1.0)
    return out if out.ndim else float(out)


# ---- plain-text configuration ------------------------------------------------

def params_to_text(p: HermiteParams | FilterParams, section: str = "params") -> str:
    cp = configparser.ConfigParser()
    base = p.base if isinstance(p, FilterParams) else p
    cp[section] = {"k": str(base.k), "H": repr(base.H), "d": repr(base.d), "lambda": repr(base.lam)}
    if isinstance(p, FilterParams):
        cp[section]["beta"] = repr(p.beta)
        cp[section]["normalized"] = "true" if p.normalized else "false"
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def params_from_mapping(m) -> HermiteParams | FilterParams:
    """Build parameters from a key-value mapping (keys k, H, d, lambda, beta, normalized)."""
    keys = {str(k).lower(): v for k, v in dict(m).items()}
    k = int(keys.get("k", 2))
    lam = float(keys.get("lambda", 1.0))
    if "h" in keys:
        H = float(keys["h"])
        p = params_from_H(k, H, lam)
        if "d" in keys and not _close(float(keys["d"]), p.d):
            raise ValueError(f"d = {keys['d']} inconsistent with H = {H}")
    elif "d" in keys:
        p = params_from_H(k, 1.0 - k * (0.5 - float(keys["d"])), lam)
    else:
        raise ValueError("configuration needs H or d")
    if "beta" in keys and str(keys["beta"]).strip() not in ("", "none"):
        norm = str(keys.get("normalized", "true")).strip().lower() in ("1", "true", "yes", "on")
        return FilterParams(p, float(keys["beta"]), norm)
    return p


def params_from_text(text: str, section: str = "params") -> HermiteParams | FilterParams:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    if section not in cp:
        raise ValueError(f"configuration has no [{section}] section")
    return params_from_mapping(cp[section])


# ---- cell projection of the k = 2 kernel -------------------------------------

def cell_amplitude(s, lo, hi, d: float, lam: float):
    """int_lo^hi (s - x)_+^{d-1} e^{-lam (s - x)} dx for broadcastable s, lo, hi."""
    from scipy.special import gammainc, gammaincc
    a = np.clip(np.asarray(s) - hi, 0.0, None)
    b = np.clip(np.asarray(s) - lo, 0.0, None)
    if lam == 0:
        return (b ** d - a ** d) / d
    la, lb = lam * a, lam * b
    # upper-tail difference is the accurate one once both points sit past the mode
    reg = np.where(la > d, gammaincc(d, la) - gammaincc(d, lb), gammainc(d, lb) - gammainc(d, la))
    return math.gamma(d) * lam ** (-d) * reg


def cell_factor(edges, t: float, p: HermiteParams, nodes: int = 8):
    """Factor the cell-projected kernel on [0, t] as C = (B * w) @ B.T.

    Cells are [edges[i], edges[i+1]] with orthonormal indicator basis
    1_cell / sqrt(width). B[i, q] = a_i(s_q) / sqrt(width_i) where a_i is the
    cell amplitude and s_q are quadrature nodes on [0, t]. Each panel between
    consecutive edges uses s = x_k + len * u^{1/d}, which linearizes the
    (s - x_k)^d onset of the amplitudes.
    """
    edges = np.asarray(edges, dtype=float)
    if np.any(np.diff(edges) <= 0):
        raise ValueError("cell edges must be strictly increasing")
    if t <= 0:
        return np.zeros((edges.size - 1, 0)), np.zeros(0)
    inner = edges[(edges > 0) & (edges < t)]
    brk = np.concatenate([[0.0], inner, [t]])
    ug, wg = np.polynomial.legendre.leggauss(nodes)
    ug, wg = 0.5 * (ug + 1), 0.5 * wg
    e = 1.0 / p.d
    ln = np.diff(brk)
    s = (brk[:-1, None] + ln[:, None] * ug ** e).ravel()
    w = (ln[:, None] * e * ug ** (e - 1.0) * wg).ravel()
    lo, hi = edges[:-1], edges[1:]
    B = cell_amplitude(s[None, :], lo[:, None], hi[:, None], p.d, p.lam)
    B /= np.sqrt(hi - lo)[:, None]
    return B, w


def cell_kernel_matrix(edges, t: float, p: HermiteParams, nodes: int = 8) -> np.ndarray:
    """Matrix of the k = 2 kernel h_t projected on the cells: C_ij = <h_t, e_i x e_j>."""
    if p.k != 2:
        raise ValueError("cell_kernel_matrix is defined for k = 2")
    B, w = cell_factor(edges, t, p, nodes)
    C = (B * w) @ B.T
    return 0.5 * (C + C.T)
