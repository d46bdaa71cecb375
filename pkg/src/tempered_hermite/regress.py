"""Nadaraya-Watson regression on fractional Brownian motion with tempered
second-chaos noise, and the consistency experiment across sample sizes."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .kernels import HermiteParams, params_from_H
from .simulate import (ChaosGrid, CorrelationFit, fbm_paths, increment_correlation_exponent,
                       tempered_noise_increments)

KERNELS = ("gaussian", "triangle", "epanechnikov", "quartic")
NORMALIZATIONS = ("divide_by_Sn", "multiply_by_Sn")


def smoothing_kernel(name: str, x):
    """Smoothing kernels integrating to one over the real line."""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) <= 1.0
    if name == "gaussian":
        out = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    elif name == "triangle":
        out = np.where(inside, 1.0 - np.abs(x), 0.0)
    elif name == "epanechnikov":
        out = np.where(inside, 0.75 * (1.0 - x * x), 0.0)
    elif name == "quartic":
        out = np.where(inside, 15.0 / 16.0 * (1.0 - x * x) ** 2, 0.0)
    else:
        raise ValueError(f"unknown smoothing kernel {name!r}; choose from {KERNELS}")
    return out if out.ndim else float(out)


# link functions with their Hoelder exponents
LINKS: dict = {
    "sin": (np.sin, 1.0),
    "cos": (np.cos, 1.0),
    "identity": (lambda x: np.asarray(x, dtype=float), 1.0),
    "zero": (lambda x: np.zeros_like(np.asarray(x, dtype=float)), 1.0),
    "abs": (np.abs, 1.0),
    "sqrt_abs": (lambda x: np.sqrt(np.abs(x)), 0.5),
}


@dataclass(frozen=True)
class RegressionConfig:
    n: int
    H1: float = 0.7
    kappa: float = 0.2
    kernel: str = "gaussian"
    link: str = "sin"
    noise: HermiteParams | None = None     # None: no noise
    cells_per_step: int = 8
    normalization: str = "divide_by_Sn"
    sn_source: str = "analytic"            # "analytic" (covariance) or "discrete" (simulated kernel)

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("n must be >= 3")
        if not 0.0 < self.H1 < 1.0:
            raise ValueError("H1 must lie in (0, 1)")
        if not 0.0 < self.kappa < 1.0:
            raise ValueError("kappa must lie in (0, 1)")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown smoothing kernel {self.kernel!r}")
        if self.link not in LINKS:
            raise ValueError(f"unknown link {self.link!r}; choose from {sorted(LINKS)}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        if self.sn_source not in ("analytic", "discrete"):
            raise ValueError("sn_source must be 'analytic' or 'discrete'")
        if self.noise is not None and self.noise.k != 2:
            raise ValueError("noise must be a second-chaos (k = 2) process")
        if self.cells_per_step < 1:
            raise ValueError("cells_per_step must be >= 1")

    @property
    def h(self) -> float:
        return self.n ** (-self.kappa)

    @property
    def r(self) -> Callable:
        return LINKS[self.link][0]

    @property
    def gamma_r(self) -> float:
        return LINKS[self.link][1]

    def with_n(self, n: int) -> "RegressionConfig":
        return replace(self, n=n)


def fit_noise_exponent(cfg: RegressionConfig, max_lag: int = 16) -> CorrelationFit | None:
    if cfg.noise is None:
        return None
    return increment_correlation_exponent(cfg.noise, cfg.n, min(max_lag, cfg.n - 1))


def kappa_bounds(cfg: RegressionConfig, fit: CorrelationFit | None) -> list:
    """The inequalities kappa must satisfy, as (label, bound) pairs."""
    out = [("kappa < H1/2", cfg.H1 / 2.0), ("kappa < H1*gamma_r", cfg.H1 * cfg.gamma_r)]
    if fit is not None and not fit.degenerate and -1.0 < fit.slope < 0.0:
        out.append(("kappa < -2*l_R", -2.0 * fit.slope))
    return out


def check_kappa(cfg: RegressionConfig, fit: CorrelationFit | None = None) -> list:
    """Raise ValueError naming the first violated inequality; return the bounds."""
    bounds = kappa_bounds(cfg, fit)
    for label, b in bounds:
        if not cfg.kappa < b:
            raise ValueError(f"constraint violated: {label} (kappa={cfg.kappa}, bound={b:.6g})")
    return bounds


@dataclass
class Dataset:
    x: np.ndarray          # B(i/n), i = 0..n-1
    y: np.ndarray
    signal: np.ndarray     # r(B(i/n))
    noise: np.ndarray      # scaled noise terms
    Sn: float
    noise_variance_ratio: float   # simulated increment variance / S_n^2

    @property
    def n(self) -> int:
        return self.x.size


def dataset_seed(base_seed: int, n: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, n, index]).generate_state(1, np.uint64)[0] >> np.uint64(1))


def fbm_on_steps(n: int, H1: float, seed: int) -> np.ndarray:
    """B(i/n), i = 0..n-1."""
    return fbm_paths(n - 1, H1, (n - 1) / n, 1, seed).values[0]


def generate_model(cfg: RegressionConfig, seed: int, path: np.ndarray | None = None) -> Dataset:
    """Y_i = r(B(i/n)) + noise_i, i = 0..n-1, with independent fBm and chaos streams.

    path, when given, supplies B(i/n) (for instance a finer path subsampled)
    and the fBm stream is not used.
    """
    n = cfg.n
    if path is None:
        B = fbm_on_steps(n, cfg.H1, seed)
    else:
        B = np.asarray(path, dtype=float)
        if B.size != n:
            raise ValueError("path must hold n values")
    signal = cfg.r(B)
    if cfg.noise is None:
        return Dataset(B, signal.copy(), signal, np.zeros(n), math.nan, math.nan)
    grid = ChaosGrid.uniform(1.0, n * cfg.cells_per_step, cfg.noise.lam)
    paths, Sn = tempered_noise_increments(n, cfg.noise, grid, 1, seed)
    inc = paths.values[0]
    dvar = paths.flags["discrete_variance"]
    S = Sn if cfg.sn_source == "analytic" else math.sqrt(dvar)
    noise = inc / S if cfg.normalization == "divide_by_Sn" else S * inc
    return Dataset(B, signal + noise, signal, noise, S, dvar / Sn ** 2)


def _weights(x: float, data: Dataset, h: float, kernel: str) -> np.ndarray:
    return smoothing_kernel(kernel, (x - data.x) / h)


def nadaraya_watson(x: float, data: Dataset, h: float, kernel: str = "gaussian") -> float:
    """sum Y_i K((x - B_i)/h) / sum K((x - B_i)/h); nan when no weight falls in the window."""
    if not h > 0:
        raise ValueError("bandwidth h must be > 0")
    w = _weights(x, data, h, kernel)
    den = math.fsum(w)
    if den == 0.0:
        return math.nan
    return math.fsum(w * data.y) / den


def decompose_m1_m2(x: float, data: Dataset, cfg: RegressionConfig) -> tuple:
    """(M1, M2): the kernel-weighted averages of r(B_i) and of the noise terms."""
    w = _weights(x, data, cfg.h, cfg.kernel)
    den = math.fsum(w)
    if den == 0.0:
        return math.nan, math.nan
    return math.fsum(w * data.signal) / den, math.fsum(w * data.noise) / den


@dataclass
class RegressionRun:
    ns: list
    x_eval: list
    seeds: int
    errors: np.ndarray              # len(ns) x len(x_eval) x seeds, nan = empty window
    m2: np.ndarray                  # same shape, |M2|
    fits: dict = field(default_factory=dict)
    noise_variance_ratio: dict = field(default_factory=dict)

    def summary(self) -> list:
        rows = []
        for a, n in enumerate(self.ns):
            for b, x in enumerate(self.x_eval):
                e = self.errors[a, b]
                ok = e[np.isfinite(e)]
                med = float(np.median(ok)) if ok.size else math.nan
                iqr = float(np.subtract(*np.percentile(ok, [75, 25]))) if ok.size else math.nan
                rows.append((n, x, med, iqr, int(e.size - ok.size), int(ok.size)))
        return rows

    def medians(self) -> np.ndarray:
        return np.array([[r[2] for r in self.summary() if r[0] == n] for n in self.ns])

    def monotone(self) -> bool:
        """Median error strictly decreasing in n at every evaluation point."""
        med = self.medians()
        return bool(np.all(np.diff(med, axis=0) < 0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("n,x,median_abs_err,iqr,empty_window_count,seed_count\n")
        for n, x, med, iqr, empty, cnt in self.summary():
            buf.write(f"{n},{x:.17g},{med:.17g},{iqr:.17g},{empty},{cnt}\n")
        return buf.getvalue()


def consistency_experiment(base: RegressionConfig, ns: Sequence, x_eval: Sequence, seeds: int,
                           base_seed: int = 0, coupled: bool = True) -> RegressionRun:
    """|r_hat(x) - r(x)| across seeds for each n, after checking the kappa constraint at every n.

    coupled=True draws one fBm path per seed on the finest grid and
    subsamples it for the coarser n (each n must divide the largest), so
    all sample sizes observe the same realization; noise is drawn per n.
    """
    if seeds < 1:
        raise ValueError("seeds must be >= 1")
    ns = [int(n) for n in ns]
    fits = {}
    for n in ns:
        cfg = base.with_n(n)
        fits[n] = fit_noise_exponent(cfg)
        check_kappa(cfg, fits[n])
    n_max = max(ns)
    if coupled and any(n_max % n for n in ns):
        raise ValueError("coupled runs need every n to divide the largest n")
    err = np.full((len(ns), len(x_eval), seeds), math.nan)
    m2 = np.full_like(err, math.nan)
    ratio = {}
    paths = {}
    for a, n in enumerate(ns):
        cfg = base.with_n(n)
        for s in range(seeds):
            path = None
            if coupled:
                if s not in paths:
                    paths[s] = fbm_on_steps(n_max, base.H1, dataset_seed(base_seed, 0, s))
                path = paths[s][::n_max // n]
            data = generate_model(cfg, dataset_seed(base_seed, n, s), path)
            ratio[n] = data.noise_variance_ratio
            for b, x in enumerate(x_eval):
                est = nadaraya_watson(x, data, cfg.h, cfg.kernel)
                err[a, b, s] = abs(est - float(cfg.r(np.array(x))))
                m2[a, b, s] = abs(decompose_m1_m2(x, data, cfg)[1])
    return RegressionRun(ns, list(map(float, x_eval)), seeds, err, m2, fits, ratio)


def default_noise(H: float = 0.75, lam: float = 2000.0) -> HermiteParams:
    """Tempered Rosenblatt noise with tempering strong enough to decorrelate increments."""
    return params_from_H(2, H, lam)
