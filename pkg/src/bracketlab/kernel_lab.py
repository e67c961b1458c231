"""Covariance kernels of the mollified fBm derivative and the constant c.

With xi_eps = C_eps * d/dt (B * rho_eps) one has

    K_eps(t)    = C_eps^2 eps^(2H-2) k1(t/eps),
    Kbar_eps(t) = C_eps^2 eps^(2H-1) kb1(t/eps),

where k1(tau) = -1/2 int g1(u) |tau-u|^{2H} du with g1 the autocorrelation
of rho', and kb1 is the antiderivative of k1 vanishing at 0.  Equivalently
kb1 = 1/2 (rho * rho~ * F_H) with F_H(t) = 2H |t|^{2H-1} sign t.

The unit-scale profiles are tabulated once per (H, mollifier): k1 by
piecewise Chebyshev interpolation of adaptive quadrature values on
|tau| <= 8, kb1 as the exact antiderivative of those pieces, and both by a
convergent moment expansion beyond 8.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import chebyshev as C
from numpy.polynomial.legendre import leggauss
from scipy import integrate

_GL_X, _GL_W = leggauss(160)
_SWITCH = 8.0
_PIECES = (0.0, 0.5, 1.0, 2.0, 4.0, _SWITCH)
_CHEB_DEG = 48
_SERIES_TERMS = 40


class QuadratureError(RuntimeError):
    pass


def _gl(a, b, f):
    """Fixed high-order Gauss-Legendre on [a, b]; vectorised over array a, b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = mid[..., None] + half[..., None] * _GL_X
    return np.sum(f(x) * _GL_W, axis=-1) * half


def _bump_raw(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    ti = t[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ti * ti))
    return out


def _bump_raw_prime(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    ti = t[inside]
    q = 1.0 - ti * ti
    out[inside] = np.exp(-1.0 / q) * (-2.0 * ti / (q * q))
    return out


def _poly_bump_raw(t):
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) < 1, (1 - t * t) ** 3, 0.0) * _bump_raw(t)


def _poly_bump_raw_prime(t):
    t = np.asarray(t, dtype=float)
    q = np.where(np.abs(t) < 1, 1 - t * t, 0.0)
    return q ** 3 * _bump_raw_prime(t) - 6 * t * q ** 2 * _bump_raw(t)


@dataclass(frozen=True)
class Mollifier:
    """Smooth even bump supported in [-1, 1], normalised to unit mass."""
    name: str
    raw: Callable = field(repr=False, compare=False)
    raw_prime: Callable = field(repr=False, compare=False)
    support_radius: float = 1.0

    @property
    def norm(self) -> float:
        return _mass(self.name, self.raw)

    def evaluate(self, t):
        return self.raw(t) / self.norm

    def derivative(self, t):
        return self.raw_prime(t) / self.norm

    def cdf(self, t):
        """int_{-1}^t rho; used for exact mollification of piecewise-linear paths."""
        t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
        return _gl(np.full_like(t, -1.0), t, self.evaluate)

    def moment(self, k: int) -> float:
        return float(_gl(-1.0, 1.0, lambda x: x ** k * self.evaluate(x)))


_MASS_CACHE: dict[str, float] = {}


def _mass(name, raw):
    if name not in _MASS_CACHE:
        _MASS_CACHE[name] = float(_gl(-1.0, 1.0, raw))
    return _MASS_CACHE[name]


MOLLIFIERS: dict[str, Mollifier] = {
    "bump": Mollifier("bump", _bump_raw, _bump_raw_prime),
    "poly_bump": Mollifier("poly_bump", _poly_bump_raw, _poly_bump_raw_prime),
}


def get_mollifier(name: str | Mollifier) -> Mollifier:
    if isinstance(name, Mollifier):
        return name
    try:
        return MOLLIFIERS[name]
    except KeyError:
        raise ValueError(f"unknown mollifier {name!r}; known: {sorted(MOLLIFIERS)}") from None


def autocorrelation(rho: Mollifier, u, first="rho", second="rho"):
    """int f(a) g(a-u) da with f, g in {rho, rho'}; supported on |u| <= 2."""
    f = rho.evaluate if first == "rho" else rho.derivative
    g = rho.evaluate if second == "rho" else rho.derivative
    u = np.atleast_1d(np.asarray(u, dtype=float))
    lo = np.maximum(-1.0, u - 1.0)
    hi = np.minimum(1.0, u + 1.0)
    hi = np.maximum(hi, lo)
    out = _gl(lo, hi, lambda a: f(a) * g(a - u[:, None]))
    return out


def scaling_constant(H: float, eps: float) -> float:
    if not 0 < H <= 0.25:
        raise ValueError("H must lie in (0, 1/4]")
    if not eps > 0:
        raise ValueError("eps must be positive")
    if H < 0.25:
        return eps ** (0.25 - H)
    if eps >= 1:
        raise ValueError("C_eps is undefined for eps >= 1 at H = 1/4")
    return abs(math.log(eps)) ** -0.5


def F_H(H: float, t):
    t = np.asarray(t, dtype=float)
    return 2 * H * np.abs(t) ** (2 * H - 1) * np.sign(t)


def _F_derivative_coeffs(H, n_max):
    """c_n with F^(n)(tau) = c_n tau^(2H-1-n) for tau > 0."""
    c = np.empty(n_max + 1)
    c[0] = 2 * H
    for n in range(1, n_max + 1):
        c[n] = c[n - 1] * (2 * H - n)
    return c


def k1_quad(H: float, rho: Mollifier, tau: float, epsabs: float = 1e-13) -> float:
    """Unit-scale K profile by adaptive quadrature of -1/2 int g1(u)|tau-u|^{2H} du."""
    tau = abs(float(tau))

    def g1(u):
        return float(autocorrelation(rho, u, "prime", "prime")[0])

    pieces = []
    if tau < 2:
        pieces.append(integrate.quad(g1, -2.0, tau, weight="alg", wvar=(0.0, 2 * H),
                                     epsabs=epsabs, epsrel=1e-12, limit=400, full_output=1))
        pieces.append(integrate.quad(g1, tau, 2.0, weight="alg", wvar=(2 * H, 0.0),
                                     epsabs=epsabs, epsrel=1e-12, limit=400, full_output=1))
    else:
        pieces.append(integrate.quad(lambda u: g1(u) * abs(tau - u) ** (2 * H), -2.0, 2.0,
                                     epsabs=epsabs, epsrel=1e-12, limit=400, full_output=1))
    total = 0.0
    for res in pieces:
        val, err = res[0], res[1]
        if len(res) > 3 and err > 1e3 * epsabs:
            raise QuadratureError(f"k1 quadrature did not converge at tau={tau}: {res[3]}")
        total += val
    return -0.5 * total


def kbar1_quad(H: float, rho: Mollifier, tau: float, epsabs: float = 1e-13) -> float:
    """Independent route: 1/2 int (rho*rho~)(u) F_H(tau-u) du by adaptive quadrature."""
    sgn = 1.0 if tau >= 0 else -1.0
    tau = abs(float(tau))

    def g0(u):
        return float(autocorrelation(rho, u)[0])

    a = 2 * H - 1
    if tau < 2:
        left = integrate.quad(g0, -2.0, tau, weight="alg", wvar=(0.0, a), epsabs=epsabs, limit=400)[0]
        right = integrate.quad(g0, tau, 2.0, weight="alg", wvar=(a, 0.0), epsabs=epsabs, limit=400)[0]
        val = 2 * H * (left - right)
    else:
        val = integrate.quad(lambda u: g0(u) * float(F_H(H, tau - u)), -2.0, 2.0,
                             epsabs=epsabs, limit=400)[0]
    return sgn * 0.5 * val


def rho_conv_F_quad(H: float, rho: Mollifier, t: float) -> float:
    """(rho * F_H)(t) by adaptive quadrature with the kink split out."""
    sgn = 1.0 if t >= 0 else -1.0
    t = abs(float(t))
    a = 2 * H - 1
    f = lambda u: float(rho.evaluate(u))
    if t < 1:
        left = integrate.quad(f, -1.0, t, weight="alg", wvar=(0.0, a), limit=400)[0]
        right = integrate.quad(f, t, 1.0, weight="alg", wvar=(a, 0.0), limit=400)[0]
        return sgn * 2 * H * (left - right)
    return sgn * integrate.quad(lambda u: f(u) * float(F_H(H, t - u)), -1.0, 1.0, limit=400)[0]


class KernelProfile:
    """Unit-scale k1 and kb1 for one (H, mollifier), tabulated once."""

    def __init__(self, H: float, rho: Mollifier):
        self.H = H
        self.rho = rho
        self._k_pieces = []
        self._kb_pieces = []
        offset = 0.0
        for a, b in zip(_PIECES[:-1], _PIECES[1:]):
            nodes = C.chebpts2(_CHEB_DEG + 1)
            vals = np.array([k1_quad(H, rho, 0.5 * (b - a) * x + 0.5 * (b + a)) for x in nodes])
            coef = C.chebfit(nodes, vals, _CHEB_DEG)
            anti = C.chebint(coef, lbnd=-1) * 0.5 * (b - a)
            anti[0] += offset
            offset = float(C.chebval(1.0, anti))
            self._k_pieces.append(coef)
            self._kb_pieces.append(anti)
        self.tail_coeff_k = max(float(np.max(np.abs(c[-4:]))) for c in self._k_pieces)
        g0_moments = self._g0_even_moments(_SERIES_TERMS)
        cF = _F_derivative_coeffs(H, _SERIES_TERMS + 2)
        n = np.arange(0, _SERIES_TERMS + 1, 2)
        fact = np.array([math.factorial(int(k)) for k in n], dtype=float)
        self._kb_series = (0.5 * cF[n] * g0_moments / fact, 2 * H - 1 - n)
        self._k_series = (0.5 * cF[n + 1] * g0_moments / fact, 2 * H - 2 - n)
        self.seam_mismatch = abs(self._series(self._kb_series, np.array([_SWITCH]))[0] - offset)

    def _g0_even_moments(self, n_max):
        m = [self.rho.moment(k) for k in range(n_max + 1)]
        out = []
        for n in range(0, n_max + 1, 2):
            out.append(sum(math.comb(n, k) * m[k] * m[n - k] * (-1) ** (n - k) for k in range(n + 1)))
        return np.array(out)

    @staticmethod
    def _series(spec, tau):
        coef, powers = spec
        return np.sum(coef * tau[:, None] ** powers, axis=1)

    def _piecewise(self, pieces, tau):
        out = np.empty_like(tau)
        for (a, b), coef in zip(zip(_PIECES[:-1], _PIECES[1:]), pieces):
            sel = (tau >= a) & (tau <= b)
            if np.any(sel):
                x = (2 * tau[sel] - (a + b)) / (b - a)
                out[sel] = C.chebval(x, coef)
        return out

    def k1(self, tau):
        tau = np.abs(np.atleast_1d(np.asarray(tau, dtype=float)))
        out = np.empty_like(tau)
        near = tau <= _SWITCH
        out[near] = self._piecewise(self._k_pieces, tau[near])
        out[~near] = self._series(self._k_series, tau[~near])
        return out

    def kb1(self, tau):
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        a = np.abs(tau)
        out = np.empty_like(a)
        near = a <= _SWITCH
        out[near] = self._piecewise(self._kb_pieces, a[near])
        out[~near] = self._series(self._kb_series, a[~near])
        return np.sign(tau) * out

    def kb1_squared_integral(self, T: float) -> float:
        """int_0^T kb1^2 on the unit scale (T may be huge)."""
        total = 0.0
        for a, b in zip(_PIECES[:-1], _PIECES[1:]):
            if a >= T:
                break
            hi = min(b, T)
            total += float(_gl(a, hi, lambda x: self.kb1(x.ravel()).reshape(x.shape) ** 2))
        if T > _SWITCH:
            # smooth power-law decay: integrate in log variable
            lo, hi = math.log(_SWITCH), math.log(T)
            total += float(_gl(lo, hi, lambda y: np.exp(y) * self.kb1(np.exp(y).ravel()).reshape(y.shape) ** 2))
        return total

    def kb1_squared_tail(self, T: float) -> float:
        """int_T^inf kb1^2 for H < 1/4 from the leading terms of the expansion."""
        if self.H >= 0.25:
            return math.inf
        coef, powers = self._kb_series
        total = 0.0
        for i in range(len(coef)):
            for j in range(len(coef)):
                p = powers[i] + powers[j] + 1
                total += -coef[i] * coef[j] * T ** p / p
        return total

    def abs_integral(self, T: float) -> float:
        total = 0.0
        for a, b in zip(_PIECES[:-1], _PIECES[1:]):
            if a >= T:
                break
            total += float(_gl(a, min(b, T), lambda x: np.abs(self.kb1(x.ravel())).reshape(x.shape)))
        if T > _SWITCH:
            lo, hi = math.log(_SWITCH), math.log(T)
            total += float(_gl(lo, hi, lambda y: np.exp(y) * np.abs(self.kb1(np.exp(y).ravel())).reshape(y.shape)))
        return total


@lru_cache(maxsize=32)
def kernel_profile(H: float, mollifier: str = "bump") -> KernelProfile:
    return KernelProfile(H, get_mollifier(mollifier))


@dataclass(frozen=True)
class KernelModel:
    hurst: float
    eps: float
    mollifier: str = "bump"
    c_eps: float | None = None

    def __post_init__(self):
        get_mollifier(self.mollifier)
        if self.c_eps is None:
            object.__setattr__(self, "c_eps", scaling_constant(self.hurst, self.eps))

    @property
    def profile(self) -> KernelProfile:
        return kernel_profile(self.hurst, self.mollifier)

    @property
    def rho(self) -> Mollifier:
        return get_mollifier(self.mollifier)

    def K(self, t):
        H, e = self.hurst, self.eps
        t = np.asarray(t, dtype=float)
        return (self.c_eps ** 2 * e ** (2 * H - 2) * self.profile.k1(t.ravel() / e)).reshape(t.shape)

    def Kbar(self, t):
        H, e = self.hurst, self.eps
        t = np.asarray(t, dtype=float)
        return (self.c_eps ** 2 * e ** (2 * H - 1) * self.profile.kb1(t.ravel() / e)).reshape(t.shape)

    def kbar_squared_integral(self, delta: float) -> float:
        """int_{-delta}^{delta} Kbar_eps^2."""
        H, e = self.hurst, self.eps
        return self.c_eps ** 4 * e ** (4 * H - 1) * 2 * self.profile.kb1_squared_integral(delta / e)

    def kbar_abs_integral(self, delta: float) -> float:
        H, e = self.hurst, self.eps
        return self.c_eps ** 2 * e ** (2 * H) * 2 * self.profile.abs_integral(delta / e)


def k_eps(model: KernelModel, t: float, direct: bool = False) -> float:
    """K_eps(t); `direct` bypasses the tabulation and runs the quadrature."""
    if direct:
        H, e = model.hurst, model.eps
        return model.c_eps ** 2 * e ** (2 * H - 2) * k1_quad(H, model.rho, t / e)
    return float(model.K(t))


def kbar_eps(model: KernelModel, t: float, direct: bool = False) -> float:
    if t == 0:
        return 0.0
    if direct:
        H, e = model.hurst, model.eps
        return model.c_eps ** 2 * e ** (2 * H - 1) * kbar1_quad(H, model.rho, t / e)
    return float(model.Kbar(t))


@dataclass
class ConstantEstimate:
    estimate: float
    per_eps: list[dict]
    limit_from_tail: float | None
    monotone: bool
    diagnostics: list[str]


def constant_c(H: float, mollifier: str = "bump", eps_list: Sequence[float] = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6),
               delta: float = 1.0) -> ConstantEstimate:
    """Values of int_{-delta}^{delta} Kbar_eps^2 along eps_list and their limit.

    The extrapolation fits v(eps) = a + b r(eps) through the last two points,
    with r = eps^(1-4H) for H < 1/4 (the tail of Kbar^2 decays like
    tau^(4H-2)) and r = 1/|log eps| at H = 1/4.  For H < 1/4 the limit is
    also available directly from the expansion tail.
    """
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    eps_list = sorted(eps_list, reverse=True)
    rows = []
    for e in eps_list:
        m = KernelModel(H, e, mollifier)
        rows.append({"eps": e, "value": m.kbar_squared_integral(delta)})
    vals = np.array([r["value"] for r in rows])
    diffs = np.diff(vals)
    diags = []
    monotone = bool(np.all(diffs >= -1e-12) or np.all(diffs <= 1e-12))
    if not monotone:
        diags.append("per-eps sequence is not monotone")
    if len(rows) >= 3 and H < 0.25 and np.any(np.abs(diffs[1:]) > np.abs(diffs[:-1]) * (1 + 1e-9)):
        diags.append("successive differences do not shrink")
    rate = (lambda e: e ** (1 - 4 * H)) if H < 0.25 else (lambda e: 1.0 / abs(math.log(e)))
    if len(rows) >= 2:
        r1, r2 = rate(eps_list[-2]), rate(eps_list[-1])
        v1, v2 = vals[-2], vals[-1]
        slope = (v1 - v2) / (r1 - r2)
        estimate = float(v2 - slope * r2)
    else:
        estimate = float(vals[-1])
    limit = None
    if H < 0.25:
        prof = kernel_profile(H, mollifier)
        T = 1e4
        limit = 2 * (prof.kb1_squared_integral(T) + prof.kb1_squared_tail(T))
    return ConstantEstimate(estimate, rows, limit, monotone, diags)


def c_candidates(H: float, mollifier: str = "bump") -> dict[str, float]:
    """Two closed candidates for c at H < 1/4, each by direct quadrature.

    'rho_F'        int (rho * F_H)^2
    'rho_rho_F/4'  1/4 int (rho * rho~ * F_H)^2, i.e. 2 int_0^inf kb1^2 with
                   kb1 evaluated by the independent quadrature route
    """
    rho = get_mollifier(mollifier)
    T1 = 40.0

    def tail(T, lead):
        return lead ** 2 * T ** (4 * H - 1) / (1 - 4 * H)

    f = lambda t: rho_conv_F_quad(H, rho, t) ** 2
    body = sum(integrate.quad(f, a, b, limit=200)[0] for a, b in [(0, 1), (1, 2), (2, 8), (8, T1)])
    cand_a = 2 * (body + tail(T1, 2 * H))
    g = lambda t: kbar1_quad(H, rho, t) ** 2
    body = sum(integrate.quad(g, a, b, limit=200)[0] for a, b in [(0, 1), (1, 2), (2, 8), (8, T1)])
    cand_b = 2 * (body + tail(T1, H))
    return {"rho_F": cand_a, "rho_rho_F/4": cand_b}


@dataclass
class BoundsReport:
    eps: list[float]
    envelope_constant: list[float]
    abs_integral: list[float]
    alpha: float
    delta_envelope: list[float]


def verify_kbar_bounds(H: float, eps_list: Sequence[float], mollifier: str = "bump",
                       alpha: float = 0.6, n_t: int = 400) -> BoundsReport:
    env, absint, dlt = [], [], []
    for e in eps_list:
        m = KernelModel(H, e, mollifier)
        t = np.logspace(math.log10(e / 10), 0, n_t)
        kb = np.abs(m.Kbar(t))
        env.append(float(np.max(kb * t ** 0.5)))
        dlt.append(float(np.max(kb * t ** alpha)))
        absint.append(m.kbar_abs_integral(1.0))
    return BoundsReport(list(eps_list), env, absint, alpha, dlt)
