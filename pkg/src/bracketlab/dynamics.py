"""Driven ODEs, the limiting bracket diffusion, and law comparison.

Vector fields are sympy expressions in x1..xd; Jacobians, higher
derivatives and Lie brackets are derived symbolically and lambdified for
batched numpy evaluation (states have shape (samples, d)).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import sympy as sp
from scipy import stats

from .fbm_path import Driver

DISPLAYED = "displayed"   # dx = sigma/2 sum_{i<j} [V_i,V_j] o dW_ij
RDE = "rde"               # dx = 1/2 sum_{i,j} [V_i,V_j] dB_ij with B = sigma W, i.e. sigma sum_{i<j}


def _lambdify_vec(xs, exprs):
    f = sp.lambdify(xs, list(exprs), "numpy")

    def call(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        vals = f(*X.T)
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), X.shape[:1]) for v in vals], axis=-1)
    return call


@dataclass
class VectorFieldSystem:
    name: str
    fields: list[sp.Matrix]
    symbols: tuple[sp.Symbol, ...]

    @property
    def d(self) -> int:
        return len(self.symbols)

    @property
    def m(self) -> int:
        return len(self.fields)

    def jacobian(self, i: int) -> sp.Matrix:
        return self.fields[i].jacobian(sp.Matrix(self.symbols))

    def bracket_expr(self, i: int, j: int) -> sp.Matrix:
        """[V_i, V_j] = DV_j V_i - DV_i V_j."""
        if i == j:
            return sp.zeros(self.d, 1)
        return sp.simplify(self.jacobian(j) * self.fields[i] - self.jacobian(i) * self.fields[j])

    @cached_property
    def _fields_num(self):
        return _lambdify_vec(self.symbols, [e for v in self.fields for e in v])

    def evaluate(self, X) -> np.ndarray:
        """(samples, m, d) array of V_i(X)."""
        out = self._fields_num(X)
        return out.reshape(out.shape[0], self.m, self.d)

    @cached_property
    def _brackets_num(self):
        pairs = list(itertools.combinations(range(self.m), 2))
        exprs = [e for i, j in pairs for e in self.bracket_expr(i, j)]
        return pairs, _lambdify_vec(self.symbols, exprs) if exprs else None

    def brackets(self, X) -> np.ndarray:
        """(samples, m(m-1)/2, d) array of [V_i, V_j](X) for i < j."""
        pairs, f = self._brackets_num
        X = np.atleast_2d(X)
        if f is None:
            return np.zeros((X.shape[0], 0, self.d))
        return f(X).reshape(X.shape[0], len(pairs), self.d)

    def pairs(self) -> list[tuple[int, int]]:
        return self._brackets_num[0]


def system_from_strings(name, exprs):
    xs = sp.symbols("x1:4")
    x, y, z = xs
    env = {"x": x, "y": y, "z": z}
    return VectorFieldSystem(name, [sp.Matrix([sp.sympify(c, locals=env) for c in v]) for v in exprs], xs)


def builtin_system(name: str) -> VectorFieldSystem:
    if name == "heisenberg":
        return system_from_strings(name, [("1", "0", "-y/2"), ("0", "1", "x/2")])
    if name == "commuting":
        return system_from_strings(name, [("1", "0", "0"), ("0", "1", "0")])
    if name == "so3":
        # V_i(x) = e_i x x, the rotation generators
        return system_from_strings(name, [("0", "-z", "y"), ("z", "0", "-x"), ("-y", "x", "0")])
    raise ValueError(f"unknown system {name!r}; known: heisenberg, commuting, so3")


SYSTEMS = ("heisenberg", "commuting", "so3")


def lie_bracket(sys_: VectorFieldSystem, i: int, j: int) -> Callable[[np.ndarray], np.ndarray]:
    f = _lambdify_vec(sys_.symbols, list(sys_.bracket_expr(i, j)))
    return lambda X: f(X)


def lie_bracket_fd(sys_: VectorFieldSystem, i: int, j: int, X, h: float = 1e-5) -> np.ndarray:
    """Central-difference bracket DV_j V_i - DV_i V_j at the points X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))

    def directional(k, direction):
        plus = sys_.evaluate(X + h * direction)[:, k]
        minus = sys_.evaluate(X - h * direction)[:, k]
        return (plus - minus) / (2 * h)

    V = sys_.evaluate(X)
    return directional(j, V[:, i]) - directional(i, V[:, j])


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray      # (samples, len(times), d)
    exited: np.ndarray      # (samples,) guard flag
    exit_time: np.ndarray   # inf when never exited

    @property
    def final(self) -> np.ndarray:
        return self.states[:, -1]


def _batch(arr, ndim):
    arr = np.asarray(arr)
    return arr[None] if arr.ndim == ndim else arr


class _Recorder:
    def __init__(self, times, record, X):
        self.record = np.asarray(record if record is not None else [times[-1]], dtype=float)
        self.slots = {int(np.argmin(np.abs(times - r))): k for k, r in enumerate(self.record)}
        self.states = np.full((X.shape[0], self.record.size, X.shape[1]), np.nan)
        self.put(0, X)

    def put(self, n, X):
        if n in self.slots:
            self.states[:, self.slots[n]] = X


def _guarded_step(X, new, frozen, exit_time, t, guard):
    new = np.where(frozen[:, None], X, new)
    bad = ~frozen & ~np.all(np.isfinite(new), axis=1)
    new[bad] = X[bad]
    hit = ~frozen & (bad | (np.linalg.norm(new, axis=1) > guard))
    exit_time[hit] = t
    return new, frozen | hit


def solve_driven_ode(sys_: VectorFieldSystem, driver: Driver, x0, horizon: tuple[float, float] = (0.0, 1.0),
                     mode: str = "pointwise", substeps: int = 1, guard: float = 1e3,
                     record: Sequence[float] | None = None) -> Trajectory:
    """RK4 for dx = sum_i V_i(x) xi_i(t) dt.

    mode="pointwise": step 2*grid step, xi sampled at the grid points (the
    RK4 midpoint lands on a grid point).  mode="piecewise": step = grid
    step / substeps with xi constant on each cell, equal to the exact B_eps
    increment over the cell; this is the ODE whose solution is the
    piecewise-linear signature development.
    """
    g = driver.grid
    s, t = horizon
    i0, i1 = g.index(s), g.index(t)
    xi = _batch(driver.xi, 2)
    inc = _batch(driver.increments, 2)
    X = np.broadcast_to(np.asarray(x0, dtype=float), (xi.shape[0], sys_.d)).copy()
    frozen = np.zeros(X.shape[0], dtype=bool)
    exit_time = np.full(X.shape[0], np.inf)

    def F(X, u):
        return np.einsum("smd,sm->sd", sys_.evaluate(X), u)

    if mode == "pointwise":
        if (i1 - i0) % 2:
            raise ValueError("pointwise mode needs an even number of grid steps")
        if np.isnan(xi[..., i0:i1 + 1]).any():
            raise ValueError("horizon leaves the valid range of the driver")
        h = 2 * g.step
        idx = np.arange(i0, i1 + 1, 2)
        times = g.t0 + g.step * idx
        rec = _Recorder(times, record, X)
        for n, k in enumerate(idx[:-1]):
            u0, um, u1 = xi[..., k], xi[..., k + 1], xi[..., k + 2]
            k1 = F(X, u0)
            k2 = F(X + 0.5 * h * k1, um)
            k3 = F(X + 0.5 * h * k2, um)
            k4 = F(X + h * k3, u1)
            X, frozen = _guarded_step(X, X + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4), frozen, exit_time,
                                      times[n + 1], guard)
            rec.put(n + 1, X)
    elif mode == "piecewise":
        D = inc[..., i0:i1]
        if np.isnan(D).any():
            raise ValueError("horizon leaves the valid range of the driver")
        times = g.t0 + g.step * np.arange(i0, i1 + 1)
        rec = _Recorder(times, record, X)
        h = 1.0 / substeps
        for n in range(i1 - i0):
            u = D[..., n]
            for _ in range(substeps):
                k1 = F(X, u)
                k2 = F(X + 0.5 * h * k1, u)
                k3 = F(X + 0.5 * h * k2, u)
                k4 = F(X + h * k3, u)
                X, frozen = _guarded_step(X, X + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4), frozen, exit_time,
                                          times[n + 1], guard)
            rec.put(n + 1, X)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return Trajectory(rec.record, rec.states, frozen, exit_time)


def solve_limit_sde(sys_: VectorFieldSystem, sigma: float, x0, step: float = 1e-3, seed: int = 0,
                    horizon: float = 1.0, samples: int = 1, convention: str = DISPLAYED,
                    guard: float = 1e3, record: Sequence[float] | None = None) -> Trajectory:
    """Stratonovich-Heun scheme for dx = a sigma sum_{i<j} [V_i,V_j](x) o dW_ij.

    a = 1/2 for the displayed convention and a = 1 for the convention
    obtained from the reduced rough equation.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    scale = {DISPLAYED: 0.5, RDE: 1.0}[convention] * sigma
    n = int(round(horizon / step))
    times = step * np.arange(n + 1)
    X = np.broadcast_to(np.asarray(x0, dtype=float), (samples, sys_.d)).copy()
    frozen = np.zeros(samples, dtype=bool)
    exit_time = np.full(samples, np.inf)
    rec = _Recorder(times, record, X)
    npairs = len(sys_.pairs())
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    for k in range(n):
        dW = rng.standard_normal((samples, npairs)) * math.sqrt(step)
        if npairs == 0 or scale == 0:
            rec.put(k + 1, X)
            continue
        b0 = np.einsum("spd,sp->sd", sys_.brackets(X), dW) * scale
        Xp = X + b0
        b1 = np.einsum("spd,sp->sd", sys_.brackets(Xp), dW) * scale
        X, frozen = _guarded_step(X, X + 0.5 * (b0 + b1), frozen, exit_time, times[k + 1], guard)
        rec.put(k + 1, X)
    return Trajectory(rec.record, rec.states, frozen, exit_time)


@dataclass
class LawReport:
    moments_eps: list[dict]
    moments_limit: list[dict]
    ks_statistic: list[float]
    ks_pvalue: list[float]
    counts: tuple[int, int]
    excluded: tuple[int, int] = (0, 0)


def _moments(X):
    return [{"mean": float(np.mean(c)), "variance": float(np.var(c, ddof=1)) if c.size > 1 else 0.0,
             "skew": float(stats.skew(c)) if c.size > 2 else 0.0,
             "kurtosis": float(stats.kurtosis(c)) if c.size > 3 else 0.0,
             "mean_stderr": float(np.std(c, ddof=1) / math.sqrt(c.size)) if c.size > 1 else 0.0,
             "variance_stderr": _var_stderr(c)} for c in X.T]


def _var_stderr(c):
    if c.size < 4:
        return 0.0
    d = (c - c.mean()) ** 2
    return float(np.std(d, ddof=1) / math.sqrt(c.size))


def compare_laws(samples_eps, samples_limit, exited_eps=None, exited_limit=None) -> LawReport:
    """Moment tables and per-coordinate two-sample KS statistics.

    Samples flagged by the guard are excluded and counted.
    """
    a = np.atleast_2d(np.asarray(samples_eps, dtype=float))
    b = np.atleast_2d(np.asarray(samples_limit, dtype=float))
    if a.shape[0] == 1 and a.ndim == 2 and np.asarray(samples_eps).ndim == 1:
        a, b = a.T, np.atleast_2d(np.asarray(samples_limit, dtype=float)).T
    ex = [0, 0]
    if exited_eps is not None:
        ex[0] = int(np.sum(exited_eps))
        a = a[~np.asarray(exited_eps)]
    if exited_limit is not None:
        ex[1] = int(np.sum(exited_limit))
        b = b[~np.asarray(exited_limit)]
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("empty samples")
    ks = [stats.ks_2samp(a[:, k], b[:, k]) for k in range(a.shape[1])]
    return LawReport(_moments(a), _moments(b), [float(r.statistic) for r in ks], [float(r.pvalue) for r in ks],
                     (a.shape[0], b.shape[0]), tuple(ex))


# The one-step reduction of the level-4 equation to the bracket equation.


@dataclass
class ReductionReport:
    terms: dict[str, np.ndarray]
    level2_match: float
    level4_match: float
    vanishing: dict[str, float]

    @property
    def ok(self) -> bool:
        return max(self.level2_match, self.level4_match, *self.vanishing.values()) < 1e-10


def antisymmetric_lift(m: int, rng: np.random.Generator, steps: int = 2000):
    """(B1, B2) from a piecewise-linear Wiener path W_ij = -W_ji, i<j.

    B1_{ij} = delta W_ij, B2_{ijkl} = int delta W_ij dW_kl; the pair is a
    geometric lift over m x m indices satisfying the antisymmetry relations.
    """
    pairs = list(itertools.combinations(range(m), 2))
    dW = rng.standard_normal((steps, len(pairs))) / math.sqrt(steps)
    W = np.concatenate([np.zeros((1, len(pairs))), np.cumsum(dW, axis=0)])
    # signature of a piecewise-linear path: level 2 exactly
    area = np.einsum("np,nq->pq", W[:-1], dW) + 0.5 * np.einsum("np,nq->pq", dW, dW)
    B1 = np.zeros((m, m))
    B2 = np.zeros((m, m, m, m))
    for a, (i, j) in enumerate(pairs):
        B1[i, j], B1[j, i] = W[-1, a], -W[-1, a]
        for b, (k, l) in enumerate(pairs):
            v = area[a, b]
            B2[i, j, k, l] = v
            B2[j, i, k, l] = -v
            B2[i, j, l, k] = -v
            B2[j, i, l, k] = v
    return B1, B2


def _derivative_tensors(sys_: VectorFieldSystem, x):
    xs = sp.Matrix(sys_.symbols)
    sub = dict(zip(sys_.symbols, x))
    V, D1, D2, D3 = [], [], [], []
    for f in sys_.fields:
        V.append(np.array(f.subs(sub), dtype=float).ravel())
        J = f.jacobian(xs)
        D1.append(np.array(J.subs(sub), dtype=float))
        h2 = [[[sp.diff(f[a], xb, xc) for xc in sys_.symbols] for xb in sys_.symbols] for a in range(sys_.d)]
        D2.append(np.array(sp.Array(h2).subs(sub), dtype=float))
        h3 = [[[[sp.diff(f[a], xb, xc, xe) for xe in sys_.symbols] for xc in sys_.symbols]
                for xb in sys_.symbols] for a in range(sys_.d)]
        D3.append(np.array(sp.Array(h3).subs(sub), dtype=float))
    return np.array(V), np.array(D1), np.array(D2), np.array(D3)


def _bracket_derivative(sys_: VectorFieldSystem, x):
    """[V_i,V_j](x) and its Jacobian, for all i, j."""
    xs = sp.Matrix(sys_.symbols)
    sub = dict(zip(sys_.symbols, x))
    m, d = sys_.m, sys_.d
    br = np.zeros((m, m, d))
    dbr = np.zeros((m, m, d, d))
    for i in range(m):
        for j in range(m):
            e = sys_.bracket_expr(i, j)
            br[i, j] = np.array(e.subs(sub), dtype=float).ravel()
            dbr[i, j] = np.array(e.jacobian(xs).subs(sub), dtype=float)
    return br, dbr


def reduction_terms(sys_: VectorFieldSystem, x, B1, B2) -> dict[str, np.ndarray]:
    """One step of the level-4 expansion with X = (0, B1, 0, B2), term by term,
    and the corresponding step of the bracket equation."""
    V, D1, D2, D3 = _derivative_tensors(sys_, x)
    X2 = B1
    X4 = B2
    DV = lambda i, u: D1[i] @ u
    out = {}
    out["level2"] = sum(DV(i, V[j]) * X2[j, i] for i in range(sys_.m) for j in range(sys_.m))
    idx = list(itertools.product(range(sys_.m), repeat=4))
    t_a = np.zeros(sys_.d)
    t_b = np.zeros(sys_.d)
    t_c = np.zeros(sys_.d)
    t_d = np.zeros(sys_.d)
    for i, j, k, l in idx:
        w = X4[l, k, j, i]
        if w:
            t_a += np.einsum("abcd,b,c,d->a", D3[i], V[j], V[k], V[l]) * w
            t_b += DV(i, DV(j, DV(k, V[l]))) * w
            t_c += DV(i, np.einsum("abc,b,c->a", D2[j], V[k], V[l])) * w
        w3 = X4[j, l, k, i] + X4[l, j, k, i] + X4[l, k, j, i]
        if w3:
            t_d += np.einsum("abc,b,c->a", D2[i], V[j], DV(k, V[l])) * w3
    out["level4_third_derivative"] = t_a
    out["level4_nested_first"] = t_b
    out["level4_second_inside"] = t_c
    out["level4_second_outside"] = t_d
    br, dbr = _bracket_derivative(sys_, x)
    out["bracket_level2"] = 0.5 * np.einsum("ija,ij->a", br, B1)
    out["bracket_level4"] = 0.25 * np.einsum("ijab,klb,klij->a", dbr, br, B2)
    return out


def verify_rde_reduction(sys_: VectorFieldSystem, seed: int = 0, points: int = 3) -> ReductionReport:
    """Compare the unpacked level-4 step with the bracket step at random
    states and random antisymmetric lifts."""
    rng = np.random.default_rng(seed)
    worst2 = worst4 = 0.0
    van = {"level4_third_derivative": 0.0, "level4_second_inside": 0.0}
    last = {}
    for _ in range(points):
        x = rng.standard_normal(sys_.d)
        B1, B2 = antisymmetric_lift(sys_.m, rng)
        t = reduction_terms(sys_, x, B1, B2)
        scale2 = max(1.0, np.abs(t["bracket_level2"]).max())
        scale4 = max(1.0, np.abs(t["bracket_level4"]).max())
        worst2 = max(worst2, np.abs(t["level2"] - t["bracket_level2"]).max() / scale2)
        worst4 = max(worst4, np.abs(t["level4_nested_first"] + t["level4_second_outside"]
                                    - t["bracket_level4"]).max() / scale4)
        for k in van:
            van[k] = max(van[k], float(np.abs(t[k]).max()) / scale4)
        last = t
    return ReductionReport(last, float(worst2), float(worst4), van)
