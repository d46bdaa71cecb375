"""Sample paths: fractional Brownian motion and a discrete second-chaos
approximation of the tempered Rosenblatt process, plus k-statistics.

Random streams: every draw comes from numpy's PCG64 seeded by
SeedSequence(seed, spawn_key=(purpose, replication block)), so a block of
replications is the same whether produced alone or as part of a larger run.
"""
from __future__ import annotations

import io
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cholesky
from threadpoolctl import threadpool_limits

from .kernels import HermiteParams, cell_kernel_matrix
from .moments import chain_factor, cov_hermite, prefactor
from .quadrature import integrate_1d
from .specfun import gamma

# stream purposes
STREAM_FBM = 1
STREAM_CHAOS = 2
BLOCK = 256          # replications per stream block; fixes BLAS shapes too
BINARY_MAGIC = b"THSP0001"


class GridTailError(ArithmeticError):
    """The grid's left truncation leaves more kernel mass than tolerated."""


def _rng(seed: int, purpose: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(purpose, block))))


@dataclass
class SamplePaths:
    times: np.ndarray
    values: np.ndarray            # reps x len(times)
    seed: int
    scheme: str                   # "fbm" | "discrete-chaos"
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != self.times.size:
            raise ValueError("values must be reps x len(times)")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("sample values must be finite")

    @property
    def reps(self) -> int:
        return self.values.shape[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(f"{t:.17g}" for t in self.times) + "\n")
        for row in self.values:
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()

    def to_bytes(self) -> bytes:
        """Little-endian dump: magic (8 bytes), uint64 reps, uint64 n_times,
        int64 seed, n_times doubles of times, then reps * n_times doubles row-major."""
        head = BINARY_MAGIC + struct.pack("<QQq", self.reps, self.times.size, int(self.seed))
        return head + self.times.astype("<f8").tobytes() + self.values.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, scheme: str = "unknown") -> "SamplePaths":
        if data[:8] != BINARY_MAGIC:
            raise ValueError("not a sample-path dump")
        reps, nt, seed = struct.unpack("<QQq", data[8:32])
        off = 32
        times = np.frombuffer(data, "<f8", nt, off)
        vals = np.frombuffer(data, "<f8", reps * nt, off + 8 * nt).reshape(reps, nt)
        return cls(times.copy(), vals.copy(), seed, scheme)


# ---- fractional Brownian motion ------------------------------------------------

def fgn_autocovariance(n: int, H: float) -> np.ndarray:
    """Autocovariance of unit-step fractional Gaussian noise at lags 0..n-1."""
    k = np.arange(n, dtype=float)
    e = 2.0 * H
    return 0.5 * (np.abs(k + 1) ** e - 2.0 * k ** e + np.abs(k - 1) ** e)


def _circulant_sqrt_eigs(gam: np.ndarray):
    """Eigenvalues of the minimal circulant embedding of a Toeplitz autocovariance."""
    row = np.concatenate([gam, gam[-2:0:-1]])
    ev = np.fft.fft(row).real
    return ev, row.size


def fbm_paths(n_grid: int, H1: float, T: float, reps: int, seed: int) -> SamplePaths:
    """fBm at times T * (0..n_grid) / n_grid by circulant embedding of the increments.

    Falls back to a Cholesky factor of the increment covariance when the
    embedding has a negative eigenvalue; flags["cholesky_fallback"] records it.
    """
    if n_grid < 2:
        raise ValueError("n_grid must be >= 2")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if not 0.0 < H1 < 1.0:
        raise ValueError("H1 must lie in (0, 1)")
    if not T > 0:
        raise ValueError("T must be > 0")
    gam = fgn_autocovariance(n_grid, H1)
    ev, N = _circulant_sqrt_eigs(gam)
    fallback = bool(np.min(ev) < -1e-10 * np.max(ev))
    if fallback:
        idx = np.arange(n_grid)
        L = cholesky(gam[np.abs(idx[:, None] - idx[None, :])], lower=True)
    else:
        sq = np.sqrt(np.clip(ev, 0.0, None) / N)
    scale = (T / n_grid) ** H1
    out = np.empty((reps, n_grid + 1))
    out[:, 0] = 0.0

    def block(b):
        start = b * BLOCK
        nb = min(BLOCK, reps - start)
        g = _rng(seed, STREAM_FBM, b)
        if fallback:
            inc = g.standard_normal((BLOCK, n_grid))[:nb] @ L.T
        else:
            z = g.standard_normal((BLOCK, N)) + 1j * g.standard_normal((BLOCK, N))
            inc = np.fft.fft(sq * z[:nb], axis=1).real[:, :n_grid]
        out[start:start + nb, 1:] = np.cumsum(inc * scale, axis=1)

    run_blocks(block, _n_blocks(reps))
    times = T * np.arange(n_grid + 1) / n_grid
    return SamplePaths(times, out, seed, "fbm", {"cholesky_fallback": fallback})


# ---- white-noise cells ---------------------------------------------------------

@dataclass(frozen=True)
class ChaosGrid:
    """Cells [edges[i], edges[i+1]] covering [L, t_max].

    The inner region [0, t_max] holds uniform cells of width delta; the
    left region [L, 0] uses cells growing geometrically away from 0, where
    the tempering makes the kernel smooth and small.
    """
    edges: np.ndarray
    delta: float
    L: float
    t_max: float

    @property
    def M(self) -> int:
        return self.edges.size - 1

    @property
    def points(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @classmethod
    def build(cls, M: int, t_max: float, lam: float, inner_fraction: float = 0.85,
              left_extent: float = 12.0, max_left: float = 1e4) -> "ChaosGrid":
        """M cells with L = -min(left_extent / lam, max_left)."""
        if M < 8:
            raise ValueError("M must be >= 8")
        if not t_max > 0 or not lam > 0:
            raise ValueError("t_max and lambda must be > 0")
        n_in = max(1, int(round(inner_fraction * M)))
        n_left = M - n_in
        if n_left < 1:
            raise ValueError("inner_fraction leaves no left cells")
        delta = t_max / n_in
        L = -min(left_extent / lam, max_left)
        # widths delta * r^j, j = 1..n_left, summing to |L|
        target = -L / delta
        if target <= n_left:
            left = L * (1.0 - np.arange(n_left) / n_left)
        else:
            lo, hi = 1.0, 2.0
            f = lambda r: r * (r ** n_left - 1.0) / (r - 1.0) - target
            while f(hi) < 0:
                hi *= 2.0
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                lo, hi = (mid, hi) if f(mid) < 0 else (lo, mid)
            r = 0.5 * (lo + hi)
            widths = delta * r ** np.arange(1, n_left + 1)
            left = -np.cumsum(widths)[::-1]
            left[0] = L
        edges = np.concatenate([left, delta * np.arange(n_in + 1)])
        edges[-1] = t_max
        return cls(edges, delta, float(L), float(t_max))

    @classmethod
    def uniform(cls, t_max: float, cells_per_unit: int, lam: float, left_extent: float = 12.0,
                max_left: float = 1e4) -> "ChaosGrid":
        """Uniform cells of width 1/cells_per_unit on [L, t_max] (L a multiple of the width)."""
        delta = 1.0 / cells_per_unit
        n_left = int(math.ceil(min(left_extent / lam, max_left) / delta))
        n_in = int(round(t_max / delta))
        if abs(n_in * delta - t_max) > 1e-12 * max(1.0, t_max):
            raise ValueError("t_max must be a multiple of the cell width")
        edges = delta * np.arange(-n_left, n_in + 1, dtype=float)
        return cls(edges, delta, float(edges[0]), float(t_max))

    def tail_fraction(self, p: HermiteParams, t: float | None = None) -> float:
        """Upper bound on the share of ||h_t||^2 lying where a coordinate is below L.

        With g(u) = u^{d-1} e^{-lam u}: for x1 < L <= 0, h_t(x1, x2) <= g(|x1|) G(x2)
        where G(x2) = int_0^t g(s - x2) ds <= Gamma(d) lam^{-d} and
        int G = t Gamma(d) lam^{-d}. Hence the discarded mass is at most
        2 t (Gamma(d) lam^{-d})^2 |L|^{2d-2} e^{-2 lam |L|} / (2 lam),
        compared with ||h_t||^2 = Var Z(t) / 2.
        """
        t = self.t_max if t is None else t
        d, lam = p.d, p.lam
        aL = abs(self.L)
        mass = (2.0 * t * (gamma(d) * lam ** (-d)) ** 2
                * aL ** (2 * d - 2) * math.exp(-2 * lam * aL) / (2 * lam))
        return mass / (0.5 * cov_hermite(t, t, p))


# ---- discrete second chaos -----------------------------------------------------

def chaos_matrices(times: Sequence, p: HermiteParams, grid: ChaosGrid, nodes: int = 8) -> list:
    """Projected kernel matrices C_t = <h_t, e_i x e_j> for each time."""
    if p.k != 2:
        raise ValueError("discrete chaos simulation requires k = 2")
    return [np.zeros((grid.M, grid.M)) if t == 0 else cell_kernel_matrix(grid.edges, t, p, nodes)
            for t in times]


def _quadratic_forms(xi: np.ndarray, C: np.ndarray, diagonal: str) -> np.ndarray:
    q = np.einsum("ij,ij->i", xi @ C, xi)
    if diagonal == "wick":
        return q - np.trace(C)
    return q - (xi * xi) @ np.diag(C)


def simulate_tempered_rosenblatt(times: Sequence, p: HermiteParams, grid: ChaosGrid, reps: int,
                                 seed: int, diagonal: str = "wick", tail_tolerance: float = 1e-6,
                                 matrices: list | None = None) -> SamplePaths:
    """Z(t) ~ sum_ij C_t[i, j] xi_i xi_j minus its diagonal part, xi i.i.d. N(0, 1) per cell.

    diagonal="wick" subtracts trace(C_t), giving exactly the double Wiener
    integral of the cell-projected kernel; diagonal="exclude" drops the
    i = j terms altogether.
    """
    times = np.asarray(times, dtype=float)
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if times.size == 0 or times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must start at 0 and increase strictly")
    if times[-1] > grid.t_max + 1e-12:
        raise ValueError("grid does not cover the requested times")
    if diagonal not in ("wick", "exclude"):
        raise ValueError("diagonal must be 'wick' or 'exclude'")
    p.require_tempered()
    tail = grid.tail_fraction(p, times[-1])
    if tail > tail_tolerance:
        raise GridTailError(f"grid tail bound {tail:.3g} exceeds {tail_tolerance:.3g}; extend L")
    if matrices is None:
        with threadpool_limits(limits=1):
            mats = chaos_matrices(times, p, grid)
    else:
        mats = matrices
    out = np.zeros((reps, times.size))

    def block(b):
        start = b * BLOCK
        nb = min(BLOCK, reps - start)
        xi = _rng(seed, STREAM_CHAOS, b).standard_normal((BLOCK, grid.M))
        for j, C in enumerate(mats):
            if times[j] == 0.0:
                continue
            out[start:start + nb, j] = _quadratic_forms(xi, C, diagonal)[:nb]

    run_blocks(block, _n_blocks(reps))
    return SamplePaths(times, out, seed, "discrete-chaos", {"tail_fraction": tail, "diagonal": diagonal})


def discrete_cumulant(C: np.ndarray, m: int, diagonal: str = "wick") -> float:
    """Exact m-th cumulant of the simulated quadratic form (m = 2, 3)."""
    A = C if diagonal == "wick" else C - np.diag(np.diag(C))
    ev = np.linalg.eigvalsh(A)
    return 2.0 ** (m - 1) * math.factorial(m - 1) * math.fsum(ev ** m)


# ---- k-statistics ----------------------------------------------------------------

def _kstats_from_sums(n, s1, s2, s3, s4):
    k1 = s1 / n
    k2 = (n * s2 - s1 ** 2) / (n * (n - 1))
    k3 = (n * n * s3 - 3 * n * s2 * s1 + 2 * s1 ** 3) / (n * (n - 1) * (n - 2))
    k4 = (-6 * s1 ** 4 + 12 * n * s1 ** 2 * s2 - 3 * n * (n - 1) * s2 ** 2
          - 4 * n * (n + 1) * s1 * s3 + n * n * (n + 1) * s4) / (n * (n - 1) * (n - 2) * (n - 3))
    return [k1, k2, k3, k4]


def k_statistics(samples, max_order: int = 4) -> list:
    """Unbiased k-statistics k_1..k_max_order with jackknife standard errors.

    Returns a list of (estimate, se). Sums run over centered data, which
    leaves k_2..k_4 unchanged and keeps the power sums well conditioned.
    """
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n < 100:
        raise ValueError("k_statistics needs at least 100 samples")
    if not 1 <= max_order <= 4:
        raise ValueError("max_order must lie in [1, 4]")
    c = math.fsum(x) / n
    y = x - c
    pw = [y ** r for r in range(1, 5)]
    S = [math.fsum(v) for v in pw]
    full = _kstats_from_sums(float(n), *S)
    full[0] += c
    loo = _kstats_from_sums(float(n - 1), *[S[r] - pw[r] for r in range(4)])
    loo[0] = loo[0] + c
    out = []
    for r in range(max_order):
        th = loo[r]
        se = math.sqrt((n - 1) / n * math.fsum((th - th.mean()) ** 2))
        out.append((float(full[r]), se))
    return out


# ---- increments used as regression noise --------------------------------------------

def increment_variance(n: int, p: HermiteParams) -> float:
    """S_n^2 = E[Z(1/n)^2], the variance of every increment over a step 1/n."""
    return cov_hermite(1.0 / n, 1.0 / n, p)


def tempered_noise_increments(n: int, p: HermiteParams, grid: ChaosGrid, reps: int, seed: int,
                              diagonal: str = "wick") -> tuple:
    """Increments Z((i+1)/n) - Z(i/n), i = 0..n-1, and S_n.

    Uses a uniform grid whose cell width divides 1/n: the increment kernel
    is then the step-0 kernel shifted by whole cells, so one projected
    matrix serves every step and Z on the grid is built in one pass by
    sliding the Gaussian vector.
    """
    if n < 1 or reps < 1:
        raise ValueError("n and reps must be >= 1")
    per = grid.delta * n
    cells = int(round(1.0 / per)) if per > 0 else 0
    if cells < 1 or abs(cells * per - 1.0) > 1e-9:
        raise ValueError("grid cell width must divide the step 1/n")
    edges = grid.edges
    # local window: cells in [-(left span), 1/n]
    n_left = int(round(-grid.L / grid.delta))
    local = grid.delta * np.arange(-n_left, cells + 1, dtype=float)
    with threadpool_limits(limits=1):
        C = cell_kernel_matrix(local, 1.0 / n, p)
    w = C.shape[0]
    if grid.M < n_left + n * cells or abs(edges[0] + n_left * grid.delta) > 1e-9:
        raise ValueError("grid must be uniform from L to 1 with matching width")
    out = np.empty((reps, n))
    trC = np.trace(C)
    dC = np.diag(C)

    def block(b):
        start = b * BLOCK
        nb = min(BLOCK, reps - start)
        xi = _rng(seed, STREAM_CHAOS, b).standard_normal((BLOCK, grid.M))[:nb]
        for r in range(nb):
            seg = np.lib.stride_tricks.sliding_window_view(xi[r], w)[::cells][:n]
            q = np.einsum("ij,ij->i", seg @ C, seg)
            out[start + r] = q - (trC if diagonal == "wick" else (seg * seg) @ dC)

    run_blocks(block, _n_blocks(reps))
    Sn = math.sqrt(increment_variance(n, p))
    times = np.arange(n, dtype=float) / n
    flags = {"diagonal": diagonal, "discrete_variance": discrete_cumulant(C, 2, diagonal)}
    return SamplePaths(times, out, seed, "discrete-chaos", flags), Sn


@dataclass
class CorrelationFit:
    slope: float
    lags: np.ndarray
    correlations: np.ndarray
    faster_than_power: bool
    degenerate: bool


def increment_correlations(p: HermiteParams, n: int, max_lag: int) -> np.ndarray:
    """R(j) = Cov(Z((j+1)/n) - Z(j/n), Z(1/n)) / E[Z(1/n)^2] for j = 0..max_lag.

    With V(r) = E[Z(r)^2], stationarity gives
    Cov = (V((j+1)/n) - 2 V(j/n) + V((j-1)/n)) / 2. The lag-j values are
    evaluated directly as the double integral of the kernel over the two
    steps, which avoids the cancellation in that second difference.
    """
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    ell = 1.0 / n
    F = lambda r: chain_factor(r, p.d, p.lam) ** p.k
    c = math.factorial(p.k) * prefactor(p.d, p.lam) ** p.k
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    v0 = cov_hermite(ell, ell, p)
    for j in range(1, max_lag + 1):
        # int over the two steps = int_{-ell}^{ell} F(|j ell + r|) (ell - |r|) dr
        f = lambda r: F(np.abs(j * ell + r)) * (ell - np.abs(r))
        res = integrate_1d(f, -ell, ell, points=[0.0])
        out[j] = c * res.value / v0
    return out


def increment_correlation_exponent(p: HermiteParams, n: int, max_lag: int) -> CorrelationFit:
    """Log-log slope l_R of |R(j)| over lags 2..max_lag.

    Slopes steeper than -1 are flagged as faster-than-power decay (the
    tempered, exponential regime).
    """
    if max_lag < 3:
        raise ValueError("max_lag must be >= 3")
    R = increment_correlations(p, n, max_lag)
    lags = np.arange(2, max_lag + 1)
    vals = np.abs(R[2:])
    good = vals > 1e-300
    if good.sum() < 2:
        return CorrelationFit(math.nan, lags, R, True, True)
    slope = float(np.polyfit(np.log(lags[good]), np.log(vals[good]), 1)[0])
    return CorrelationFit(slope, lags, R, slope < -1.0, False)


def _n_blocks(reps: int) -> int:
    return (reps + BLOCK - 1) // BLOCK


def run_blocks(fn: Callable, n_blocks: int) -> list:
    """fn(b) for b = 0..n_blocks-1 on thread_count() workers.

    BLAS is pinned to one thread meanwhile, so every block is computed with
    the same operation order whatever the worker count: results do not
    depend on TEMPERED_THREADS.
    """
    with threadpool_limits(limits=1):
        workers = min(thread_count(), n_blocks)
        if workers <= 1:
            return [fn(b) for b in range(n_blocks)]
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, range(n_blocks)))


def thread_count() -> int:
    """Thread budget from TEMPERED_THREADS (default 1); results never depend on it."""
    try:
        return max(1, int(os.environ.get("TEMPERED_THREADS", "1")))
    except ValueError:
        return 1
