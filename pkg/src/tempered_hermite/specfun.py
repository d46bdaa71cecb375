"""Special functions: Gamma, modified Bessel K of real order, Hermite polynomials.

Everything here is vectorized over numpy arrays and free of shared state.
"""
from __future__ import annotations

import math

import numpy as np

# Lanczos approximation, g = 7, nine coefficients. Relative error is around
# 1e-15 for x >= 0.5; smaller arguments go through the reflection formula.
_LANCZOS_G = 7.0
_LANCZOS_COEF = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])

# K_nu(x) below this floor is reported as an exact zero with a flag.
UNDERFLOW_FLOOR = 1e-300
# Arguments below this are refused: K_nu(x) ~ x^{-|nu|} overflows for the
# orders in use and the integral representation needs an unbounded range.
SMALL_ARG_FLOOR = 1e-30
MAX_ORDER = 5.0
MAX_HERMITE_DEGREE = 20


def _lanczos(x: np.ndarray) -> np.ndarray:
    # valid for x >= 0.5
    z = x - 1.0
    acc = np.full_like(z, _LANCZOS_COEF[0])
    for i in range(1, len(_LANCZOS_COEF)):
        acc = acc + _LANCZOS_COEF[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return np.sqrt(2.0 * np.pi) * np.exp((z + 0.5) * np.log(t) - t) * acc


def gamma(x):
    """Gamma function for x > 0 (scalar or array)."""
    xa = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(xa)) or np.any(xa <= 0):
        raise ValueError("gamma: argument must be finite and > 0")
    small = xa < 0.5
    out = np.empty_like(xa)
    out[~small] = _lanczos(xa[~small])
    xs = xa[small]
    out[small] = np.pi / (np.sin(np.pi * xs) * _lanczos(1.0 - xs))
    return out if out.ndim else float(out)


def gamma_signed(x: float) -> float:
    """Gamma at a non-integer real argument, negative values allowed (reflection)."""
    if x > 0:
        return gamma(x)
    if float(x).is_integer():
        raise ValueError("gamma_signed: pole at non-positive integer")
    return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))


def _bessel_k_core(nu: float, x: np.ndarray) -> np.ndarray:
    """Trapezoid rule on K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt.

    The integrand is analytic in a strip around the real axis, so the
    trapezoid rule converges geometrically; the step is shrunk like x^{-1/2}
    for large x where the integrand narrows around t = 0.
    """
    anu = abs(nu)
    # cutoff: x cosh T - |nu| T >= 745 (two fixed-point passes suffice)
    T = np.arccosh(np.maximum(745.0 / x, 1.0)) + 1.0
    for _ in range(2):
        T = np.arccosh(np.maximum((745.0 + anu * T) / x, 1.0)) + 0.5
    hmax = np.minimum(0.1, 0.5 / np.sqrt(x))
    n = int(min(max(np.max(np.ceil(T / hmax)), 16), 8192))
    h = T / n
    j = np.arange(n + 1)
    t = h[:, None] * j[None, :]
    f = np.exp(-x[:, None] * np.cosh(t)) * np.cosh(anu * t)
    f[:, 0] *= 0.5
    return h * f.sum(axis=1)


# series branch: x <= 1, |nu| < 1 and nu at least this far from an integer
_SERIES_MAX_X = 1.0
_SERIES_MIN_FRAC = 0.02
_SERIES_TERMS = 24


def _bessel_k_series(nu: float, x: np.ndarray) -> np.ndarray:
    """K_nu = pi / (2 sin(nu pi)) (I_{-nu} - I_nu) from the power series of I_{+-nu}.

    For x <= 1 the terms fall like (x/2)^{2j} / (j!)^2, so a fixed number of
    terms reaches double precision; the sin(nu pi) factor costs at most a
    digit for the allowed orders.
    """
    h = 0.5 * x
    h2 = h * h
    lh = np.log(h)
    ip = np.zeros_like(x)
    im = np.zeros_like(x)
    p = np.ones_like(x)
    fact = 1.0
    for j in range(_SERIES_TERMS):
        if j:
            p = p * h2
            fact *= j
        ip += p / (fact * gamma_signed(j + nu + 1.0))
        im += p / (fact * gamma_signed(j - nu + 1.0))
    ip *= np.exp(nu * lh)
    im *= np.exp(-nu * lh)
    return np.pi / (2.0 * math.sin(nu * math.pi)) * (im - ip)


def _series_ok(nu: float) -> bool:
    anu = abs(nu)
    return anu < 1.0 and min(anu, 1.0 - anu) >= _SERIES_MIN_FRAC


def bessel_k(nu: float, x, return_flags: bool = False):
    """Modified Bessel function of the second kind K_nu(x), real order, x > 0.

    Integral representation by the trapezoid rule; for x <= 1 and
    fractional |nu| < 1 the power series of I_{+-nu} is used instead.
    Symmetric in nu. Values below UNDERFLOW_FLOOR come back as 0; with
    return_flags=True a boolean mask marking those entries is returned too.
    """
    if not np.isfinite(nu) or abs(nu) > MAX_ORDER:
        raise ValueError(f"bessel_k: |nu| must be <= {MAX_ORDER}")
    xa = np.asarray(x, dtype=float)
    scalar = xa.ndim == 0
    xa = np.atleast_1d(xa)
    if np.any(~(xa > 0)):
        raise ValueError("bessel_k: x must be > 0")
    if np.any(xa < SMALL_ARG_FLOOR):
        raise OverflowError(f"bessel_k: x below small-argument floor {SMALL_ARG_FLOOR}")
    flat = xa.ravel()
    out = np.zeros_like(flat)
    # K_nu(x) < sqrt(pi/(2x)) e^{-x} (1 + O(nu^2/x)) drops under 1e-300 past ~690
    live = flat < 700.0
    if _series_ok(nu):
        small = flat <= _SERIES_MAX_X
        if np.any(small):
            out[small] = _bessel_k_series(abs(nu), flat[small])
        live &= ~small
    idx = np.flatnonzero(live)
    # bucket by magnitude so each batch shares a similar node count
    order = idx[np.argsort(flat[idx])]
    for chunk in np.array_split(order, max(1, int(np.ceil(order.size / 4096)))):
        if chunk.size:
            out[chunk] = _bessel_k_core(nu, flat[chunk])
    under = out < UNDERFLOW_FLOOR
    out[under] = 0.0
    out = out.reshape(xa.shape)
    under = under.reshape(xa.shape)
    if scalar:
        out, under = float(out[0]), bool(under[0])
    return (out, under) if return_flags else out


def bessel_k_smallarg(nu: float, x):
    """Leading small-x behaviour of K_nu: 2^{|nu|-1} Gamma(|nu|) x^{-|nu|}, or -log x at nu = 0."""
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0)):
        raise ValueError("bessel_k_smallarg: x must be > 0")
    anu = abs(nu)
    if anu == 0.0:
        out = -np.log(xa)
    else:
        out = 2.0 ** (anu - 1.0) * gamma(anu) * xa ** (-anu)
    return out if np.ndim(out) else float(out)


def hermite_poly(q: int, x):
    """Probabilists' Hermite polynomial He_q(x) by the three-term recurrence."""
    if int(q) != q or q < 0:
        raise ValueError("hermite_poly: degree must be a non-negative integer")
    if q > MAX_HERMITE_DEGREE:
        raise ValueError(f"hermite_poly: degree above guard {MAX_HERMITE_DEGREE}")
    xa = np.asarray(x, dtype=float)
    h_prev = np.ones_like(xa)
    if q == 0:
        return h_prev if xa.ndim else float(h_prev)
    h = xa.copy()
    for j in range(1, int(q)):
        h, h_prev = xa * h - j * h_prev, h
    return h if xa.ndim else float(h)
