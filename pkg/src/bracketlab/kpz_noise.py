"""Noise fields of the rescaled KPZ problem on S^1 x R, and coarse solvers.

Fields are sampled spectrally on a space-time torus [0, T) x S^1: the
cell-averaged white noise eta is transformed once and every linear
functional of it (eta_eps, chi_eps, the heat-filtered field Psi with
d_x Psi = chi_eps) is obtained by multiplying with its transfer function,

    chi_eps^ = eps^{3/4} (-k^2) / (k^2 + i w) rho_eps^ eta^,
    Psi^     = eps^{3/4} (i k)  / (k^2 + i w) rho_eps^ eta^.

The result is stationary in time by construction (covariances are the
time-periodisations of the true ones), so no burn-in is needed.

The space-time mollifier is rho(t, x) = 8 r(4t) r(2x) with r the unit-mass
one-dimensional bump, supported in the parabolic unit ball, and
rho_eps(t, x) = eps^-3 rho(t/eps^2, x/eps).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, stats
from scipy.fft import next_fast_len

from .kernel_lab import get_mollifier

U_FORM = "U_FORM"
H_FORM = "H_FORM"
COLE_HOPF_REF = "COLE_HOPF_REF"

_GLX, _GLW = leggauss(200)
_FT_CUTOFF = 400.0


class ResolutionError(ValueError):
    pass


@lru_cache(maxsize=8)
def _bump_ft_table(name: str):
    rho = get_mollifier(name)
    x, wt = leggauss(1500)
    f = wt * rho.evaluate(x)
    nu = np.linspace(0, _FT_CUTOFF, 80001)
    vals = np.concatenate([np.cos(np.outer(chunk, x)) @ f for chunk in np.array_split(nu, 80)])
    return nu, vals


def bump_ft(nu, name: str = "bump"):
    """int r(u) cos(nu u) du for the unit-mass bump r; 0 beyond the table."""
    nu = np.abs(np.asarray(nu, dtype=float))
    grid, vals = _bump_ft_table(name)
    out = np.interp(nu, grid, vals)
    return np.where(nu > _FT_CUTOFF, 0.0, out)


@dataclass(frozen=True)
class Mollifier2D:
    name: str = "bump"
    t_scale: float = 4.0
    x_scale: float = 2.0

    def ft(self, w, k):
        return bump_ft(np.asarray(w) / self.t_scale, self.name) * bump_ft(np.asarray(k) / self.x_scale, self.name)

    def ft_eps(self, w, k, eps):
        return self.ft(eps ** 2 * np.asarray(w), eps * np.asarray(k))


@dataclass(frozen=True)
class SpaceTimeGrid:
    nx: int
    nt: int
    dt: float

    @property
    def dx(self) -> float:
        return 1.0 / self.nx

    @property
    def period(self) -> float:
        return self.nt * self.dt

    @classmethod
    def for_eps(cls, eps: float, nx: int = 1024, resolution: float = 10.0, min_period: float = 0.0,
                decorrelation: float = 10.0) -> "SpaceTimeGrid":
        """dt = (eps/resolution)^2 and a period covering both `min_period` and
        `decorrelation` correlation lengths (eps * decorrelation)^2."""
        dt = (eps / resolution) ** 2
        period = max(min_period, (decorrelation * eps) ** 2)
        nt = next_fast_len(int(math.ceil(period / dt)))
        return cls(nx, nt, dt)

    def check(self, eps: float, resolution: float = 10.0):
        if eps < resolution * max(self.dx, math.sqrt(self.dt)) * (1 - 1e-9):
            raise ResolutionError(f"eps={eps} is not resolved: need eps >= {resolution} max(dx, sqrt(dt))")

    @property
    def times(self):
        return self.dt * np.arange(self.nt)

    @property
    def xs(self):
        return self.dx * np.arange(self.nx)

    def frequencies(self):
        w = 2 * np.pi * np.fft.fftfreq(self.nt, self.dt)
        k = 2 * np.pi * np.fft.rfftfreq(self.nx, self.dx)
        return w[:, None], k[None, :]


@dataclass
class KpzFields:
    grid: SpaceTimeGrid
    eps: float
    mollifier2d: Mollifier2D
    chi: np.ndarray
    xi: np.ndarray
    c_eps: float
    eta_eps: np.ndarray
    psi: np.ndarray | None = None        # eps^{3/4} P * d_x eta_eps
    forcing: np.ndarray | None = None    # eps^{3/4} d_x eta_eps


def _transfers(grid: SpaceTimeGrid, eps: float, mol: Mollifier2D):
    w, k = grid.frequencies()
    r = mol.ft_eps(w, k, eps)
    a = eps ** 0.75
    with np.errstate(divide="ignore", invalid="ignore"):
        heat = 1.0 / (k ** 2 + 1j * w)
    heat[0, 0] = 0.0
    return {"eta_eps": r, "chi": a * (-k ** 2) * heat * r, "psi": a * 1j * k * heat * r,
            "forcing": a * 1j * k * r}


def grid_covariance(grid: SpaceTimeGrid, eps: float, which: str = "chi",
                    mollifier2d: Mollifier2D | None = None) -> np.ndarray:
    """Exact covariance c(lag) of the sampled discrete field (lags on the torus)."""
    T = _transfers(grid, eps, mollifier2d or Mollifier2D())[which]
    return np.fft.irfft2(np.abs(T) ** 2, s=(grid.nt, grid.nx)) / (grid.dt * grid.dx)


def exact_pairing_variance(grid: SpaceTimeGrid, eps: float, phi: "TestFunction", lam: float,
                           centre: tuple[float, float] | None = None,
                           mollifier2d: Mollifier2D | None = None) -> float:
    """Var <phi^lam, xi_eps> for the discrete sampled field:
    2 (dt dx)^2 sum_ij w_i w_j c(i-j)^2 by circular convolution."""
    c = grid_covariance(grid, eps, "chi", mollifier2d)
    centre = centre or (grid.period / 2, 0.5)
    w = phi.rescaled(lam, centre, grid)
    conv = np.fft.irfft2(np.fft.rfft2(c ** 2) * np.fft.rfft2(w), s=w.shape)
    return float(2 * (grid.dt * grid.dx) ** 2 * np.sum(w * conv))


def white_noise_ft(grid: SpaceTimeGrid, rng: np.random.Generator) -> np.ndarray:
    cells = rng.standard_normal((grid.nt, grid.nx)) / math.sqrt(grid.dt * grid.dx)
    return np.fft.rfft2(cells)


def build_chi_xi(grid: SpaceTimeGrid, eps: float, mollifier2d: Mollifier2D | None = None, seed: int = 0,
                 resolution: float = 10.0, extras: bool = False, c_eps: float | None = None) -> KpzFields:
    mol = mollifier2d or Mollifier2D()
    grid.check(eps, resolution)
    eta_hat = white_noise_ft(grid, np.random.default_rng(np.random.SeedSequence([seed, 11])))
    T = _transfers(grid, eps, mol)
    shape = (grid.nt, grid.nx)
    chi = np.fft.irfft2(T["chi"] * eta_hat, s=shape)
    eta_eps = np.fft.irfft2(T["eta_eps"] * eta_hat, s=shape)
    if c_eps is None:
        c_eps = kpz_constants(mol, eps, nx=grid.nx)[0]
    out = KpzFields(grid, eps, mol, chi, chi ** 2 - c_eps, c_eps, eta_eps)
    if extras:
        out.psi = np.fft.irfft2(T["psi"] * eta_hat, s=shape)
        out.forcing = np.fft.irfft2(T["forcing"] * eta_hat, s=shape)
    return out


_TH_X, _TH_W = leggauss(600)


def _mode_integrals(k: np.ndarray, eps: float, mol: Mollifier2D):
    """For each k: int dw/2pi of k^4/(k^4+w^2) rho_eps^2 and of its square
    with rho_eps^4, over the whole line.  With w = k^2 tan(theta) both become
    smooth integrals over theta in (0, pi/2)."""
    th = 0.25 * np.pi * (_TH_X + 1)
    wts = 0.25 * np.pi * _TH_W
    k = np.asarray(k, dtype=float)[:, None]
    w = k ** 2 * np.tan(th)[None, :]
    r = mol.ft_eps(w, k, eps)
    c = np.cos(th)[None, :]
    first = np.sum(wts * k ** 2 * r ** 2, axis=1)
    second = np.sum(wts * k ** 2 * c ** 2 * r ** 4, axis=1)
    return 2 * first / (2 * np.pi), 2 * second / (2 * np.pi)


def kpz_constants(mollifier2d: Mollifier2D | None, eps: float, nx: int | None = None):
    """(C_eps, sigma^2) by deterministic quadrature.

    C_eps = E chi_eps(0)^2 = sum_k int dw/2pi eps^{3/2} k^4/(k^4+w^2) rho_eps^2
    sigma^2 = 2 int K_eps^2 = 2 sum_k int dw/2pi eps^3 (k^4/(k^4+w^2))^2 rho_eps^4
    with k running over 2 pi Z (the unit torus).  `nx` truncates k to the
    modes a grid with nx points carries.
    """
    mol = mollifier2d or Mollifier2D()
    return _constants(mol, float(eps), nx)


@lru_cache(maxsize=64)
def _constants(mol, eps, nx):
    nmax = int(_FT_CUTOFF * mol.x_scale / (2 * np.pi * eps)) + 1
    if nx is not None:
        nmax = min(nmax, nx // 2)
    k = 2 * np.pi * np.arange(1, nmax + 1)
    first, second = _mode_integrals(k, eps, mol)
    # modes +k and -k
    return eps ** 1.5 * 2 * float(np.sum(first)), 2 * eps ** 3 * 2 * float(np.sum(second))


def kpz_kernel(mollifier2d: Mollifier2D | None, eps: float, t: float, x: float, kmax_factor: float = 1.0) -> float:
    """K_eps(t, x) on the real line (no torus), by quadrature in (w, k)."""
    mol = mollifier2d or Mollifier2D()
    kcut = kmax_factor * _FT_CUTOFF * mol.x_scale / eps
    wcut = _FT_CUTOFF * mol.t_scale / eps ** 2

    def inner(k):
        if k == 0:
            return 0.0
        f = lambda w: k ** 4 / (k ** 4 + w * w) * float(mol.ft_eps(w, k, eps)) ** 2
        if t == 0:
            v = integrate.quad(f, 0, wcut, points=[k * k], limit=400)[0]
        else:
            v = integrate.quad(f, 0, wcut, weight="cos", wvar=abs(t), limit=400)[0]
        return 2 * v / (2 * np.pi) * math.cos(k * x)

    val = integrate.quad(inner, 0, kcut, limit=400, epsabs=1e-13)[0]
    return eps ** 1.5 * 2 * val / (2 * np.pi)


@dataclass
class KpzKernels:
    eps: float
    c_eps: float
    sigma2: float

    def scaled(self, eps: float) -> float:
        return self.c_eps * (self.eps / eps) ** 1.5


@dataclass(frozen=True)
class TestFunction:
    """phi(t, x) = a b(4t) b(2x), normalised so that int phi = 1."""
    name: str = "bump"
    t_scale: float = 4.0
    x_scale: float = 2.0
    shift: tuple[float, float] = (0.0, 0.0)

    def __call__(self, t, x):
        r = get_mollifier(self.name)
        t = np.asarray(t) - self.shift[0]
        x = np.asarray(x) - self.shift[1]
        return self.t_scale * self.x_scale * r.evaluate(self.t_scale * t) * r.evaluate(self.x_scale * x)

    def l2_squared(self) -> float:
        r = get_mollifier(self.name)
        one = float(np.sum(_GLW * r.evaluate(_GLX) ** 2))
        return self.t_scale * self.x_scale * one * one

    def rescaled(self, lam: float, centre: tuple[float, float], grid: SpaceTimeGrid):
        """phi^lam_z on the grid (periodic in x), with its time support."""
        t = grid.times[:, None] - centre[0]
        x = (grid.xs[None, :] - centre[1] + 0.5) % 1.0 - 0.5
        return lam ** -3 * self(t / lam ** 2, x / lam)


def pair_field(field_: np.ndarray, grid: SpaceTimeGrid, phi: TestFunction, lam: float,
               centre: tuple[float, float]) -> float:
    """<field, phi^lam_z> by a Riemann sum.  The support must avoid the time
    seam of the torus."""
    half_t = lam ** 2 / phi.t_scale + abs(phi.shift[0]) * lam ** 2
    if centre[0] - half_t < 0 or centre[0] + half_t > grid.period:
        raise ValueError("test function support crosses the time boundary")
    w = phi.rescaled(lam, centre, grid)
    return float(np.sum(field_ * w) * grid.dt * grid.dx)


def pair_many(field_: np.ndarray, weights: list, grid: SpaceTimeGrid) -> np.ndarray:
    """Pair one field with many test functions.  A weight is either a full
    array or a (row_slice, block) pair restricted to its time support."""
    out = []
    for w in weights:
        if isinstance(w, tuple):
            rows, block = w
            out.append(np.sum(field_[rows] * block))
        else:
            out.append(np.sum(field_ * w))
    return np.array(out) * grid.dt * grid.dx


def local_weights(phi: TestFunction, lam: float, centre: tuple[float, float], grid: SpaceTimeGrid):
    """(row_slice, block) form of phi^lam_z for pair_many."""
    half_t = lam ** 2 / phi.t_scale + abs(phi.shift[0]) * lam ** 2
    if centre[0] - half_t < 0 or centre[0] + half_t > grid.period:
        raise ValueError("test function support crosses the time boundary")
    lo = max(int(math.floor((centre[0] - half_t) / grid.dt)) - 1, 0)
    hi = min(int(math.ceil((centre[0] + half_t) / grid.dt)) + 2, grid.nt)
    t = grid.times[lo:hi, None] - centre[0]
    x = (grid.xs[None, :] - centre[1] + 0.5) % 1.0 - 0.5
    return slice(lo, hi), lam ** -3 * phi(t / lam ** 2, x / lam)


def _centres(grid: SpaceTimeGrid, lam: float, phi: TestFunction, psi: TestFunction, copies: int):
    """Translates spread over the torus: `copies` in space times as many
    disjoint time slots as the period allows."""
    width = 2 * lam ** 2 * max(1 / phi.t_scale + abs(phi.shift[0]), 1 / psi.t_scale + abs(psi.shift[0]))
    slots = max(int(grid.period // width), 1)
    tcs = [(i + 0.5) * grid.period / slots for i in range(slots)]
    return [(tc, (j + 0.5) / copies) for tc in tcs for j in range(copies)]


@dataclass
class NoiseReport:
    eps: float
    samples: int
    var_xi: tuple[float, float]
    var_prediction: float
    correlation: tuple[float, float]
    kappa4_xi: tuple[float, float]
    kappa4_eta: tuple[float, float]
    var_chi: tuple[float, float]
    c_eps: float
    sigma2: float
    values: dict = field(default_factory=dict, repr=False)


def _kappa4(x):
    x = np.asarray(x) - np.mean(x)
    v = np.mean(x ** 2)
    return np.mean(x ** 4) / v ** 2 - 3


def _kappa4_with_error(per_sample, rng, boot=400):
    flat = per_sample.ravel()
    est = _kappa4(flat)
    n = per_sample.shape[0]
    bs = [_kappa4(per_sample[rng.integers(0, n, n)].ravel()) for _ in range(boot)]
    return float(est), float(np.std(bs, ddof=1))


def decorrelation_and_cumulants(eps: float, samples: int, seed: int = 0, nx: int = 1024, lam: float = 0.125,
                                copies: int = 8, resolution: float = 10.0, phi: TestFunction | None = None,
                                psi: TestFunction | None = None,
                                mollifier2d: Mollifier2D | None = None) -> NoiseReport:
    """Monte Carlo statistics of <phi^lam, xi_eps> and <psi^lam, eta_eps>.

    Each sample carries translates of the test functions spread over the
    torus (`copies` per time slot); per-sample averages give the standard
    errors.
    """
    mol = mollifier2d or Mollifier2D()
    phi = phi or TestFunction()
    psi = psi or TestFunction(shift=(0.05, 0.1))
    grid = SpaceTimeGrid.for_eps(eps, nx, resolution, min_period=3 * lam ** 2 / phi.t_scale)
    c_eps, sigma2 = kpz_constants(mol, eps, nx)
    centres = _centres(grid, lam, phi, psi, copies)
    wphi = [local_weights(phi, lam, z, grid) for z in centres]
    wpsi = [local_weights(psi, lam, z, grid) for z in centres]
    copies = len(centres)
    X = np.empty((samples, copies))
    Y = np.empty((samples, copies))
    chi2 = np.empty(samples)
    for s in range(samples):
        f = build_chi_xi(grid, eps, mol, seed=seed * 1_000_003 + s, resolution=resolution, c_eps=c_eps)
        X[s] = pair_many(f.xi, wphi, grid)
        Y[s] = pair_many(f.eta_eps, wpsi, grid)
        chi2[s] = np.mean(f.chi ** 2)
    rng = np.random.default_rng(seed)
    v_per = np.mean(X ** 2, axis=1)
    var = (float(np.mean(v_per)), float(np.std(v_per, ddof=1) / math.sqrt(samples)))
    xy = X * Y
    sx, sy = np.sqrt(np.mean(X ** 2)), np.sqrt(np.mean(Y ** 2))
    corr_per = np.mean(xy, axis=1) / (sx * sy)
    corr = (float(np.mean(corr_per)), float(np.std(corr_per, ddof=1) / math.sqrt(samples)))
    pred = sigma2 * phi.l2_squared() * lam ** -3
    return NoiseReport(eps, samples, var, pred, corr, _kappa4_with_error(X, rng), _kappa4_with_error(Y, rng),
                       (float(np.mean(chi2)), float(np.std(chi2, ddof=1) / math.sqrt(samples))), c_eps, sigma2,
                       {"xi": X, "eta": Y, "chi2": chi2})


# Solvers


@dataclass
class KpzSolution:
    times: np.ndarray
    h: np.ndarray            # (len(times), nx)
    variant: str
    flags: list[str] = field(default_factory=list)


def _heat_factor(nx, dt):
    k = 2 * np.pi * np.fft.rfftfreq(nx, 1.0 / nx)
    return k, np.exp(-k ** 2 * dt), np.where(k > 0, -np.expm1(-k ** 2 * dt) / np.where(k > 0, k ** 2, 1), dt)


def _dx(u_hat, k, nx):
    return np.fft.irfft(1j * k * u_hat, n=nx)


def solve_kpz(fields: KpzFields | None, h0: np.ndarray, variant: str, steps: int, stride: int = 1,
              dt: float | None = None, sigma: float = 0.0, seed: int = 0, noise_scale: float | None = None,
              guard: float = 1e6) -> KpzSolution:
    """Exponential-Euler in time, spectral in space.

    U_FORM   d_t u = u_xx + (u_x)^2 + a d_x eta_eps - (a^2/eps^{3/2}) C_eps,  a = eps^{3/4}
             unless `noise_scale` gives another a; u(0) = h0 + Psi(0), and the
             returned field is h = u - Psi.
    H_FORM   d_t h = h_xx + (h_x)^2 + 2 chi h_x + xi.
    COLE_HOPF_REF  Ito SHE d_t Z = Z_xx + sigma Z zeta with fresh noise,
             returns log Z.
    With fields=None the noise is switched off (deterministic flow).  The
    time step is stride * (fields grid dt); fields are read at every
    stride-th time, so halving the stride refines the same realisation.
    """
    h0 = np.asarray(h0, dtype=float)
    nx = h0.size
    flags = []
    if fields is not None:
        if fields.grid.nx != nx:
            raise ValueError("h0 does not match the field grid")
        dt = stride * fields.grid.dt
        if steps * stride >= fields.grid.nt:
            raise ValueError("not enough field time steps")
    elif dt is None:
        raise ValueError("dt is required without fields")
    k, decay, phi1 = _heat_factor(nx, dt)
    times = dt * np.arange(steps + 1)
    out = np.empty((steps + 1, nx))

    if variant == COLE_HOPF_REF:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 23]))
        Z = np.exp(h0)
        out[0] = h0
        dxs = 1.0 / nx
        for n in range(steps):
            zeta = rng.standard_normal(nx) * math.sqrt(dt / dxs)
            Z = np.fft.irfft(decay * np.fft.rfft(Z * (1 + sigma * zeta)), n=nx)
            if np.any(Z <= 0):
                flags.append(f"positivity lost at step {n + 1}")
                Z = np.maximum(Z, 1e-300)
            out[n + 1] = np.log(Z)
        return KpzSolution(times, out, variant, flags)

    if variant == U_FORM:
        if fields is not None:
            if fields.psi is None or fields.forcing is None:
                raise ValueError("U_FORM needs fields built with extras=True")
            a = fields.eps ** 0.75 if noise_scale is None else noise_scale
            ratio = a / fields.eps ** 0.75
            const = ratio ** 2 * fields.c_eps
            u = h0 + ratio * fields.psi[0]
        else:
            u = h0.copy()
        out[0] = h0
        uh = np.fft.rfft(u)
        for n in range(steps):
            ux = _dx(uh, k, nx)
            rhs = ux ** 2
            if fields is not None:
                rhs = rhs + ratio * fields.forcing[n * stride] - const
            uh = decay * uh + phi1 * np.fft.rfft(rhs)
            u = np.fft.irfft(uh, n=nx)
            if not np.all(np.isfinite(u)) or np.abs(u).max() > guard:
                flags.append(f"guard exceeded at step {n + 1}")
                out[n + 1:] = np.nan
                break
            shift = ratio * fields.psi[(n + 1) * stride] if fields is not None else 0.0
            out[n + 1] = u - shift
        return KpzSolution(times, out, variant, flags)

    if variant == H_FORM:
        hh = np.fft.rfft(h0)
        out[0] = h0
        for n in range(steps):
            hx = _dx(hh, k, nx)
            rhs = hx ** 2
            if fields is not None:
                rhs = rhs + 2 * fields.chi[n * stride] * hx + fields.xi[n * stride]
            hh = decay * hh + phi1 * np.fft.rfft(rhs)
            h = np.fft.irfft(hh, n=nx)
            if not np.all(np.isfinite(h)) or np.abs(h).max() > guard:
                flags.append(f"guard exceeded at step {n + 1}")
                out[n + 1:] = np.nan
                break
            out[n + 1] = h
        return KpzSolution(times, out, variant, flags)
    raise ValueError(f"unknown variant {variant!r}")


def change_of_variables_gap(eps: float, nx: int = 128, horizon: float | None = None, strides=(4, 2, 1),
                            seed: int = 0, resolution: float = 10.0, h0=None) -> list[float]:
    """Sup-norm gap between U_FORM (shifted) and H_FORM on one realisation,
    for successively halved time steps."""
    base = SpaceTimeGrid.for_eps(eps, nx, resolution * 2)
    fields = build_chi_xi(base, eps, seed=seed, resolution=resolution, extras=True)
    if horizon is None:
        horizon = 0.25 * base.period
    if h0 is None:
        x = base.xs
        h0 = 0.1 * np.sin(2 * np.pi * x)
    gaps = []
    for s in strides:
        steps = int(round(horizon / (s * base.dt)))
        u = solve_kpz(fields, h0, U_FORM, steps, stride=s)
        h = solve_kpz(fields, h0, H_FORM, steps, stride=s)
        gaps.append(float(np.nanmax(np.abs(u.h - h.h))))
    return gaps


def deterministic_limit_deviation(eps_ladder=(2 ** -2, 2 ** -5), samples: int = 8, seed: int = 0,
                                  horizon: float = 0.02, amplitude: float = 0.3,
                                  resolution: float = 10.0) -> list[float]:
    """RMS bulk deviation at time `horizon` between U_FORM with noise scaled
    by eps (instead of eps^{3/4}) and the noiseless flow from the same h0."""
    out = []
    for eps in eps_ladder:
        nx = max(128, 1 << math.ceil(math.log2(resolution / eps)))
        grid = SpaceTimeGrid.for_eps(eps, nx, resolution)
        h0 = amplitude * np.sin(2 * np.pi * grid.xs)
        steps = min(grid.nt - 1, int(round(horizon / grid.dt)))
        ref = solve_kpz(None, h0, U_FORM, steps, dt=grid.dt).h[-1]
        sq = []
        for s in range(samples):
            f = build_chi_xi(grid, eps, seed=seed * 1_000_003 + s, resolution=resolution, extras=True)
            h = solve_kpz(f, h0, U_FORM, steps, noise_scale=eps).h[-1]
            sq.append(np.mean((h - ref) ** 2))
        out.append(float(np.sqrt(np.mean(sq))))
    return out
