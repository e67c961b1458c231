"""Fractional Brownian paths, mollified drivers and their iterated integrals.

Paths live on a uniform grid t_j = t0 + j*step.  Increments are sampled
exactly in law by circulant embedding of the fractional Gaussian noise
covariance.  Mollification treats the sampled path as piecewise linear, so
both xi_eps = C_eps (B * rho_eps)' at grid points and the increments of
B_eps = C_eps B * rho_eps between grid points are exact for that path.  The
iterated integrals are the signature of the piecewise-linear interpolation
of B_eps, which satisfies Chen and shuffle relations to rounding error.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import linalg, signal

from .kernel_lab import get_mollifier, scaling_constant

RESOLUTION = 10


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    t0: float
    t1: float
    step: float

    def __post_init__(self):
        n = (self.t1 - self.t0) / self.step
        if self.t1 <= self.t0 or abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise GridError("grid end points must be t0 + n*step with n >= 1")

    @classmethod
    def dyadic(cls, t0: float = -1.0, t1: float = 2.0, log2: int = 16) -> "Grid":
        return cls(t0, t1, 2.0 ** -log2)

    @property
    def n(self) -> int:
        return int(round((self.t1 - self.t0) / self.step))

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.step * np.arange(self.n + 1)

    def index(self, t: float) -> int:
        j = (t - self.t0) / self.step
        k = int(round(j))
        if abs(j - k) > 1e-6 or not 0 <= k <= self.n:
            raise GridError(f"time {t} is not a grid point of [{self.t0}, {self.t1}]")
        return k

    def crop(self, a: float, b: float) -> "Grid":
        return Grid(self.t0 + self.index(a) * self.step, self.t0 + self.index(b) * self.step, self.step)


@dataclass
class GridPath:
    grid: Grid
    values: np.ndarray          # (..., m, n+1)
    hurst: float
    seed: int
    sample_ids: tuple[int, ...] = ()

    @property
    def m(self) -> int:
        return self.values.shape[-2]

    def crop(self, a: float, b: float) -> "GridPath":
        i, j = self.grid.index(a), self.grid.index(b)
        return GridPath(self.grid.crop(a, b), self.values[..., i:j + 1], self.hurst, self.seed, self.sample_ids)


def fgn_autocovariance(H: float, n: int, step: float) -> np.ndarray:
    k = np.arange(n + 1, dtype=float)
    return 0.5 * step ** (2 * H) * (np.abs(k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))


@lru_cache(maxsize=16)
def _circulant_sqrt(H: float, n: int, step: float):
    g = fgn_autocovariance(H, n, step)
    row = np.concatenate([g, g[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        return None
    return np.sqrt(np.clip(lam, 0, None) / row.size)


@lru_cache(maxsize=4)
def _dense_factor(H: float, n: int, step: float):
    g = fgn_autocovariance(H, n, step)
    return linalg.cholesky(linalg.toeplitz(g[:n]), lower=True)


def _stream(seed: int, component: int, sample: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, component, sample]))


def sample_fgn(H: float, n: int, step: float, rng: np.random.Generator) -> np.ndarray:
    root = _circulant_sqrt(H, n, step)
    if root is None:
        warnings.warn("circulant embedding is not positive; using a dense factorisation", RuntimeWarning)
        return _dense_factor(H, n, step) @ rng.standard_normal(n)
    z = rng.standard_normal(root.size) + 1j * rng.standard_normal(root.size)
    return np.fft.fft(root * z).real[:n]


def sample_fbm(H: float, grid: Grid, m: int, seed: int, samples: int | Sequence[int] | None = None,
               window: tuple[float, float] | None = None) -> GridPath:
    """Two-sided fBm on the grid, pinned to 0 at t = 0 (or at t0 if t0 > 0).

    Each (component, sample index) has its own random stream, so a sample
    does not depend on which other samples are drawn alongside it.
    `window` crops the stored values.
    """
    if not 0 < H < 1:
        raise ValueError("H must lie in (0, 1)")
    ids = [0] if samples is None else (list(range(samples)) if isinstance(samples, int) else list(samples))
    anchor = grid.index(0.0) if grid.t0 < 0 <= grid.t1 else 0
    lo, hi = (0, grid.n) if window is None else (grid.index(window[0]), grid.index(window[1]))
    out = np.empty((len(ids), m, hi - lo + 1))
    for a, sid in enumerate(ids):
        for comp in range(m):
            inc = sample_fgn(H, grid.n, grid.step, _stream(seed, comp, sid))
            path = np.concatenate([[0.0], np.cumsum(inc)])
            out[a, comp] = path[lo:hi + 1] - path[anchor]
    g = grid if window is None else grid.crop(*window)
    values = out[0] if samples is None else out
    return GridPath(g, values, H, seed, tuple(ids))


_GL12 = leggauss(12)


def _mollifier_weights(rho, eps: float, step: float):
    """Stencils for piecewise-linear paths.

    xi(t_n)   = sum_d w_d dB_{n-d} / step,  w_d = R(d h) - R((d-1) h)
    dBe_n     = sum_d a_d dB_{n-d},         a_d = int rho_eps(u) tri(d - u/step) du
    with h = step/eps and R the distribution function of rho.
    """
    K = int(math.ceil(eps / step)) + 1
    d = np.arange(-K, K + 2)
    h = step / eps
    w = rho.cdf(d * h) - rho.cdf((d - 1) * h)
    x, wt = _GL12
    a = np.zeros(d.size)
    for side in (-1, 1):
        # u in [d*step, (d+side)*step]; tri weight 1 - |u/step - d|
        lo, hi = d * step, (d + side) * step
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        u = mid[:, None] + half[:, None] * x
        tri = 1 - np.abs(u / step - d[:, None])
        a += np.abs(half) * np.sum(wt * tri * rho.evaluate(u / eps) / eps, axis=1)
    return int(d[0]), w, a


@dataclass
class Driver:
    """Mollified driver on a grid; NaN outside the valid range."""
    grid: Grid
    xi: np.ndarray          # (..., m, n+1) at grid points
    increments: np.ndarray  # (..., m, n) increments of B_eps
    eps: float
    c_eps: float
    valid: tuple[float, float]

    @property
    def m(self) -> int:
        return self.xi.shape[-2]

    def window(self, s: float, t: float) -> np.ndarray:
        if s > t:
            raise GridError("reversed interval")
        if s < self.valid[0] - 1e-12 or t > self.valid[1] + 1e-12:
            raise GridError(f"[{s}, {t}] leaves the valid range {self.valid}")
        i, j = self.grid.index(s), self.grid.index(t)
        return self.increments[..., i:j]


def mollify(path: GridPath, eps: float, mollifier: str = "bump", c_eps: float | None = None) -> Driver:
    if eps < RESOLUTION * path.grid.step:
        raise GridError(f"eps={eps} is below {RESOLUTION} grid steps")
    rho = get_mollifier(mollifier)
    if c_eps is None:
        c_eps = scaling_constant(path.hurst, eps) if path.hurst <= 0.25 else 1.0
    d0, w, a = _mollifier_weights(rho, eps, path.grid.step)
    dB = np.diff(path.values, axis=-1)
    L = dB.shape[-1]
    shape = dB.shape[:-1]
    flat = dB.reshape(-1, L)
    conv_w = signal.oaconvolve(flat, w[None, :], mode="full", axes=-1)
    conv_a = signal.oaconvolve(flat, a[None, :], mode="full", axes=-1)
    dmax = d0 + w.size - 1
    xi = np.full(shape + (L + 1,), np.nan)
    inc = np.full(shape + (L,), np.nan)
    # point index n uses dB_{n-d} for d0 <= d <= dmax
    lo_p, hi_p = dmax, L - 1 + d0
    if hi_p < lo_p:
        raise GridError("path too short for this eps")
    xi[..., lo_p:hi_p + 1] = (c_eps / path.grid.step * conv_w[:, lo_p - d0:hi_p - d0 + 1]).reshape(shape + (-1,))
    inc[..., lo_p:hi_p + 1] = (c_eps * conv_a[:, lo_p - d0:hi_p - d0 + 1]).reshape(shape + (-1,))
    inc[..., hi_p] = np.nan
    g = path.grid
    valid = (g.t0 + lo_p * g.step, g.t0 + hi_p * g.step)
    return Driver(g, xi, inc, eps, c_eps, valid)


def constant_driver(grid: Grid, values: Sequence[float], eps: float = 0.0) -> Driver:
    """xi = const on the whole grid (tests and deterministic examples)."""
    v = np.asarray(values, dtype=float)
    xi = np.broadcast_to(v[:, None], (v.size, grid.n + 1)).copy()
    inc = xi[:, :-1] * grid.step
    return Driver(grid, xi, inc, eps, 1.0, (grid.t0, grid.t1))


def driver_from_path(grid: Grid, values: np.ndarray) -> Driver:
    """Driver whose B_eps is the given piecewise-linear path itself."""
    values = np.asarray(values, dtype=float)
    inc = np.diff(values, axis=-1)
    xi = np.concatenate([inc, inc[..., -1:]], axis=-1) / grid.step
    return Driver(grid, xi, inc, 0.0, 1.0, (grid.t0, grid.t1))


Word = tuple[int, ...]


class WordSeries:
    """Running iterated integrals S_w(t_k) for words over 1..m, from time s.

    For a piecewise-linear path, S_w(t_{k+1}) = sum over w = ab of
    S_a(t_k) prod_{l in b} D_l(k) / |b|!, so every word's time series is a
    cumulative sum of products of shorter-word series.
    """

    def __init__(self, increments: np.ndarray):
        self.D = increments
        self.n = increments.shape[-1]
        self._cache: dict[Word, np.ndarray] = {}

    def __call__(self, w: Word) -> np.ndarray:
        w = tuple(w)
        if w in self._cache:
            return self._cache[w]
        shape = self.D.shape[:-2] + (self.n + 1,)
        if not w:
            out = np.ones(shape)
        else:
            step = np.zeros(self.D.shape[:-2] + (self.n,))
            prod = np.ones_like(step)
            for j in range(1, len(w) + 1):
                prod = prod * self.D[..., w[-j] - 1, :]
                step += self(w[:-j])[..., :-1] * prod / math.factorial(j)
            out = np.zeros(shape)
            np.cumsum(step, axis=-1, out=out[..., 1:])
        self._cache[w] = out
        return out

    def at(self, w: Word, k: int = -1) -> np.ndarray:
        return self(w)[..., k]


def words_of_level(m: int, k: int) -> list[Word]:
    out: list[Word] = [()]
    for _ in range(k):
        out = [w + (i,) for w in out for i in range(1, m + 1)]
    return out


def iterated_integrals(driver: Driver, s: float, t: float, max_level: int = 4) -> list[np.ndarray]:
    """Levels 1..max_level of the signature over [s, t] as tensors (..., m, ..., m)."""
    if not 1 <= max_level <= 4:
        raise ValueError("levels 1..4 are supported")
    ws = WordSeries(driver.window(s, t))
    m = driver.m
    levels = []
    for k in range(1, max_level + 1):
        vals = np.stack([ws.at(w) for w in words_of_level(m, k)], axis=-1)
        levels.append(vals.reshape(vals.shape[:-1] + (m,) * k))
    return levels


def word_integrals(driver: Driver, s: float, t: float, words: Iterable[Word],
                   times: Sequence[float] | None = None) -> dict[Word, np.ndarray]:
    """Selected words over [s, t]; with `times`, values over [s, r] for each r."""
    ws = WordSeries(driver.window(s, t))
    if times is None:
        return {tuple(w): ws.at(tuple(w)) for w in words}
    idx = [driver.grid.index(r) - driver.grid.index(s) for r in times]
    return {tuple(w): ws(tuple(w))[..., idx] for w in words}


def _outer(a: np.ndarray, b: np.ndarray, ka: int, kb: int) -> np.ndarray:
    a_ = a.reshape(a.shape[:a.ndim - ka] + (-1,))
    b_ = b.reshape(b.shape[:b.ndim - kb] + (-1,))
    out = a_[..., :, None] * b_[..., None, :]
    m = a.shape[-1] if ka else b.shape[-1]
    return out.reshape(out.shape[:-2] + (m,) * (ka + kb))


def chen_compose(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Truncated tensor product of signatures over [s,t] and [t,u]."""
    if len(a) != len(b):
        raise ValueError("level mismatch")
    out = []
    for k in range(1, len(a) + 1):
        term = a[k - 1] + b[k - 1]
        for i in range(1, k):
            term = term + _outer(a[i - 1], b[k - i - 1], i, k - i)
        out.append(term)
    return out


@dataclass
class RoughSample:
    driver: Driver
    eps: float
    levels: dict[tuple[float, float], list[np.ndarray]]
    holder_meta: float = 0.24


def lift(driver: Driver, intervals: Iterable[tuple[float, float]], max_level: int = 4,
         alpha: float = 0.24) -> RoughSample:
    return RoughSample(driver, driver.eps,
                       {(s, t): iterated_integrals(driver, s, t, max_level) for s, t in intervals}, alpha)


# Monte Carlo


@dataclass(frozen=True)
class MCConfig:
    hurst: float
    eps: float
    mollifier: str = "bump"
    m: int = 2
    grid_log2: int = 16
    t0: float = -1.0
    t1: float = 2.0
    samples: int = 1000
    seed: int = 0
    chunk: int = 50
    batches: int = 20
    workers: int = 1
    c_eps: float | None = None

    @property
    def grid(self) -> Grid:
        return Grid.dyadic(self.t0, self.t1, self.grid_log2)


def _chunk_drivers(cfg: MCConfig, ids: Sequence[int], window: tuple[float, float]) -> Driver:
    g = cfg.grid
    pad = math.ceil(cfg.eps / g.step + 3) * g.step
    lo = max(g.t0, g.t0 + math.floor((window[0] - pad - g.t0) / g.step) * g.step)
    hi = min(g.t1, g.t0 + math.ceil((window[1] + pad - g.t0) / g.step) * g.step)
    path = sample_fbm(cfg.hurst, g, cfg.m, cfg.seed, ids, window=(lo, hi))
    return mollify(path, cfg.eps, cfg.mollifier, cfg.c_eps)


def _run_chunk(args):
    cfg, ids, window, fn = args
    # copies, so that views into per-chunk buffers do not keep them alive
    return {k: np.array(v) for k, v in fn(_chunk_drivers(cfg, ids, window)).items()}


def mc_collect(cfg: MCConfig, window: tuple[float, float],
               fn: Callable[[Driver], Mapping[str, np.ndarray]]) -> dict[str, np.ndarray]:
    """Per-sample values of fn over all samples, in sample order.

    fn maps a batched Driver (leading axis = samples) to named arrays whose
    leading axis is the sample axis.  Results do not depend on chunking or
    on the number of workers.
    """
    ids = list(range(cfg.samples))
    chunks = [ids[i:i + cfg.chunk] for i in range(0, len(ids), cfg.chunk)]
    jobs = [(cfg, c, window, fn) for c in chunks]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            parts = list(ex.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]
    return {k: np.concatenate([np.asarray(p[k]) for p in parts]) for k in parts[0]} if parts else {}


@dataclass
class MCEstimate:
    estimate: float
    stderr: float
    batch_table: list[dict] = field(default_factory=list)


def batch_means(values: np.ndarray, batches: int = 20) -> MCEstimate:
    values = np.asarray(values, dtype=float)
    n = values.size
    b = max(2, min(batches, n))
    labels = (np.arange(n) * b) // n
    means = np.array([values[labels == i].mean() for i in range(b)])
    table = [{"batch": i, "count": int(np.sum(labels == i)), "mean": float(means[i])} for i in range(b)]
    return MCEstimate(float(values.mean()), float(means.std(ddof=1) / math.sqrt(b)), table)


def _spec_products(spec, driver: Driver) -> np.ndarray:
    prod = None
    for f in spec.factors:
        s, t = float(f.interval[0]), float(f.interval[1])
        v = WordSeries(driver.window(s, t)).at(f.index)
        prod = v if prod is None else prod * v
    return prod


def mc_moment(spec, cfg: MCConfig) -> MCEstimate:
    """Monte Carlo mean of prod_i X_eps[i] with batch-means standard error."""
    if spec.component_count > cfg.m:
        cfg = MCConfig(**{**cfg.__dict__, "m": spec.component_count})
    lo = min(float(f.interval[0]) for f in spec.factors)
    hi = max(float(f.interval[1]) for f in spec.factors)
    vals = mc_collect(cfg, (lo, hi), _SpecFn(spec))["value"]
    return batch_means(vals, cfg.batches)


class _SpecFn:
    def __init__(self, spec):
        self.spec = spec

    def __call__(self, driver):
        return {"value": _spec_products(self.spec, driver)}


def increment_variance(H: float, eps: float, tau: float, mollifier: str = "bump",
                       c_eps: float | None = None) -> float:
    """E (B_eps(t+tau) - B_eps(t))^2 = C^2 int g0_eps(w) (|tau+w|^{2H} - |w|^{2H}) dw,

    g0 the autocorrelation of rho; the Gaussian closed form behind E X^(1)_i^2.
    """
    from scipy import integrate

    from .kernel_lab import autocorrelation

    rho = get_mollifier(mollifier)
    if c_eps is None:
        c_eps = scaling_constant(H, eps)
    y = tau / eps
    f = lambda w: float(autocorrelation(rho, w)[0]) * (abs(y + w) ** (2 * H) - abs(w) ** (2 * H))
    pts = sorted({p for p in (-y, 0.0) if -2 < p < 2})
    val = integrate.quad(f, -2, 2, points=pts or None, limit=200, epsabs=1e-13)[0]
    return c_eps ** 2 * eps ** (2 * H) * val
