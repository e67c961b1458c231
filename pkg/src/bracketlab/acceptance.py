"""The thirteen acceptance gates, one summary row each.

Each gate builds a table of sub-checks; its summary row counts the failing
sub-checks (prediction 0, exact).  Monte Carlo samples are shared through
an AcceptanceContext so the level-2, level-4, tightness and ODE gates draw
on one set of paths per eps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
import sympy as sp

from .harness import ResultTable, Row

HURST = 0.1
LADDER = (1e-1, 1e-2, 1e-3)
KPZ_LADDER = (2.0 ** -4, 2.0 ** -5, 2.0 ** -6)


@dataclass
class AcceptanceContext:
    """Shared parameters and lazily computed Monte Carlo samples."""
    hurst: float = HURST
    ladder: tuple = LADDER
    samples: int = 2000
    ladder_samples: int = 1000
    grid_log2: int = 15
    seed: int = 0
    workers: int = 1
    kpz_ladder: tuple = KPZ_LADDER
    kpz_samples: tuple = (60, 100, 200)
    kpz_nx: int = 1024
    kpz_lam: float = 0.125
    profile: str = "default"
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def fine_eps(self) -> float:
        return self.ladder[-1]

    @property
    def c(self) -> float:
        if "c" not in self._cache:
            from .experiments import limit_constant

            self._cache["c"] = limit_constant(self.hurst)
        return self._cache["c"]

    def mc(self, eps: float) -> dict[str, np.ndarray]:
        key = ("mc", eps)
        if key not in self._cache:
            from .experiments import TIGHTNESS_TIMES, PathStatistics, level_words
            from .fbm_path import MCConfig, mc_collect

            n = self.samples if eps == self.fine_eps else self.ladder_samples
            cfg = MCConfig(self.hurst, eps, m=3, grid_log2=self.grid_log2, t0=-0.125, t1=1.125, samples=n,
                           seed=self.seed, chunk=25, workers=self.workers)
            words = set(level_words(1) + level_words(3) + ["12", "21", "13", "11", "22", "1212", "1122"])
            fn = PathStatistics(words=sorted(words), tightness=TIGHTNESS_TIMES if eps == self.fine_eps else (),
                                systems=("heisenberg", "commuting"))
            self._cache[key] = mc_collect(cfg, (0.0, 1.0), fn)
        return self._cache[key]

    def kpz(self, eps: float):
        key = ("kpz", eps)
        if key not in self._cache:
            from .kpz_noise import decorrelation_and_cumulants

            n = dict(zip(self.kpz_ladder, self.kpz_samples))[eps]
            self._cache[key] = decorrelation_and_cumulants(eps, n, seed=self.seed, nx=self.kpz_nx, lam=self.kpz_lam)
        return self._cache[key]


@dataclass
class GateResult:
    gate: str
    title: str
    checks: ResultTable
    summary: Row

    @property
    def passed(self) -> bool:
        return bool(self.summary.passed)

    def line(self) -> str:
        bad = [r.quantity for r in self.checks.gated if not r.passed]
        tail = f" (failing: {'; '.join(bad)})" if bad else ""
        return f"{self.gate} {'PASS' if self.passed else 'FAIL'}: {self.title}{tail}"


def _gate(gate: str, title: str, provenance: str, rows: list[Row], profile: str) -> GateResult:
    checks = ResultTable(rows, profile=profile)
    failed = sum(1 for r in checks.gated if not r.passed)
    detail = "; ".join(f"{r.quantity}={'PASS' if r.passed else 'FAIL'}" for r in checks.gated)
    summary = ResultTable(profile=profile).add(Row(gate, {"title": title}, failed, None, 0, provenance, "exact", detail))
    return GateResult(gate, title, checks, summary)


def _trend(values) -> float:
    """Largest successive ratio v[k+1]/v[k]; below 1 means strictly decreasing."""
    return max(b / a for a, b in zip(values, values[1:]))


# ---------------------------------------------------------------- gates

def gate_constant_quarter(ctx: AcceptanceContext) -> GateResult:
    from .kernel_lab import constant_c

    eps_list = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    a = constant_c(0.25, "bump", eps_list)
    b = constant_c(0.25, "poly_bump", eps_list)
    va, vb = a.per_eps[-1]["value"], b.per_eps[-1]["value"]
    rows = [Row("two mollifiers at eps=1e-6", {"bump": va, "poly_bump": vb}, vb, None, va, "PAPER", "rel10pct"),
            Row("extrapolated c at H=1/4 (bump)", {}, a.estimate, None, 0.25, "PAPER", "rel10pct"),
            Row("extrapolated c at H=1/4 (poly_bump)", {}, b.estimate, None, 0.25, "PAPER", "rel10pct")]
    return _gate("AC1", "constant c at H=1/4 equals 4H^2 for two mollifiers", "PAPER", rows, ctx.profile)


def gate_ibp(ctx: AcceptanceContext) -> GateResult:
    from .graph_calculus import QuadSpec, evaluate_J_numeric, random_diagram, reduce_I_infinity
    from .kernel_lab import KernelModel
    from .poset_core import BoundaryValues

    rng = np.random.default_rng(ctx.seed)
    m = KernelModel(ctx.hurst, 0.5)
    rows = []
    for k in range(5):
        d = random_diagram(rng, max_interior=4, min_interior=2 + 2 * (k % 2))
        b = BoundaryValues.constant(d.poset, 0.0, 1.0)
        q = QuadSpec(nodes=32)
        lhs = evaluate_J_numeric(d, m, b, q).value
        rhs = evaluate_J_numeric(reduce_I_infinity(d), m, b, q).value
        rows.append(Row(f"J(g) vs J(I^inf g), diagram {k + 1}", {"diagram": d.describe(), "eps": 0.5}, rhs, None, lhs,
                        "PAPER", "rel1e-6"))
    return _gate("AC2", "integration by parts is exact on random diagrams", "PAPER", rows, ctx.profile)


def gate_covariance_table(ctx: AcceptanceContext) -> GateResult:
    from .experiments import C_SYMBOL as c
    from .moment_engine import MomentSpec, limit_moment

    rows = []
    for a, b, want in (("12", "12", c), ("12", "21", -c), ("12", "13", sp.Integer(0))):
        v = sp.simplify(limit_moment(MomentSpec.of(a, b, m=3), c).value)
        rows.append(Row(f"lim E X{a} X{b}", {}, str(v), None, str(want), "PAPER", "exact"))
    spec = MomentSpec.of(((1, 2), (0, 1)), ((1, 2), (Fraction(1, 2), 2)))
    v = sp.simplify(limit_moment(spec, c).value)
    rows.append(Row("lim E X12[0,1] X12[1/2,2]", {}, str(v), None, str(c / 2), "PAPER", "exact"))
    return _gate("AC3", "symbolic level-2 covariance table", "PAPER", rows, ctx.profile)


def gate_levy_mc(ctx: AcceptanceContext) -> GateResult:
    from .fbm_path import batch_means

    v = ctx.mc(ctx.fine_eps)
    p = {"H": ctx.hurst, "eps": ctx.fine_eps, "samples": ctx.samples}
    e1 = batch_means(v["12"] ** 2)
    e2 = batch_means(v["12"] * v["21"])
    e3 = batch_means(v["12"] * v["13"])
    sym = batch_means((0.5 * (v["12"] + v["21"])) ** 2)
    rows = [Row("E X12^2", p, e1.estimate, e1.stderr, ctx.c, "PAPER", "mc10"),
            Row("E X12 X21", p, e2.estimate, e2.stderr, -ctx.c, "PAPER", "mc10"),
            Row("E X12 X13", p, e3.estimate, e3.stderr, 0.0, "PAPER", "z3"),
            Row("E (symmetric part of X12)^2", p, sym.estimate, sym.stderr, detail="finite-eps bias, vanishes as eps->0")]
    return _gate("AC4", "Levy-area covariances by Monte Carlo", "PAPER", rows, ctx.profile)


def gate_odd_levels(ctx: AcceptanceContext) -> GateResult:
    from .experiments import norm_squared

    rows = []
    for level in (1, 3):
        vals = [float(np.mean(norm_squared(ctx.mc(e), level))) for e in ctx.ladder]
        stat = max(_trend(vals), 2 * vals[-1] / vals[0])
        rows.append(Row(f"E|X^({level})|^2 along eps", {"eps": list(ctx.ladder), "values": vals}, stat, None, 1.0,
                        "PAPER", "below", "max of successive ratios and 2*final/initial"))
    return _gate("AC5", "odd levels vanish", "PAPER", rows, ctx.profile)


def gate_level4(ctx: AcceptanceContext) -> GateResult:
    from .fbm_path import batch_means

    v = ctx.mc(ctx.fine_eps)
    e = batch_means(v["1212"])
    res = v["12"] ** 2 - 2 * v["1212"] - 4 * v["1122"]
    scale = v["12"] ** 2 + 2 * np.abs(v["1212"]) + 4 * np.abs(v["1122"])
    rel = float(np.max(np.abs(res) / np.maximum(scale, 1e-300)))
    rows = [Row("E X1212", {"eps": ctx.fine_eps, "samples": ctx.samples}, e.estimate, e.stderr, ctx.c / 2, "PAPER",
                "mc15"),
            Row("shuffle residual X12^2 - 2 X1212 - 4 X1122 (max relative)", {}, rel, None, 1e-6, "PAPER", "below")]
    return _gate("AC6", "level-4 limit and shuffle identity", "PAPER", rows, ctx.profile)


def gate_fourth_cumulant(ctx: AcceptanceContext) -> GateResult:
    from .moment_engine import limit_cumulant

    c = sp.Symbol("c", positive=True)
    rows = [Row(f"limit cumulant of {' '.join(f)}", {}, str(limit_cumulant(f, c)), None, "0", "PAPER", "exact")
            for f in (("12", "12", "12", "12"), ("12", "21", "12", "21"))]
    return _gate("AC7", "fourth cumulant of level-2 factors vanishes", "PAPER", rows, ctx.profile)


def gate_cutoff_cancellation(ctx: AcceptanceContext) -> GateResult:
    from .experiments import builtin_diagrams, full_class_counts
    from .graph_calculus import CHI_LINKED, FULL_ORDERED, FULL_UNORDERED, DiagramSum, reduce_J_infinity

    g = builtin_diagrams()
    full = (FULL_ORDERED, FULL_UNORDERED, CHI_LINKED)
    rest = full_class_counts(reduce_J_infinity(DiagramSum.of(g["cutoff-second"]) + DiagramSum.of(g["cutoff-third"])))
    first = full_class_counts(reduce_J_infinity(g["cutoff-first"]))
    rows = [Row("full diagrams from the combined last two graphs", {"classes": rest},
                sum(rest.get(k, 0) for k in full), None, 0, "PAPER", "exact"),
            Row("full diagrams from the first graph", {"classes": first},
                ",".join(sorted(k for k in first for _ in range(first[k]) if k in full)), None, CHI_LINKED, "PAPER",
                "exact")]
    return _gate("AC8", "cutoff integration by parts cancels full graphs", "PAPER", rows, ctx.profile)


def gate_bracket_diffusion(ctx: AcceptanceContext) -> GateResult:
    from .fbm_path import batch_means

    v = ctx.mc(ctx.fine_eps)
    z = v["heisenberg:2"]
    zc = (z - z.mean()) ** 2 * z.size / (z.size - 1)
    e = batch_means(zc)
    rows = [Row("Var z(1), Heisenberg", {"eps": ctx.fine_eps, "samples": z.size}, e.estimate, e.stderr, ctx.c / 4,
                "PAPER", "mc15"),
            Row("Var z(1) / c (diagnostic)", {}, e.estimate / ctx.c, e.stderr / ctx.c,
                detail="ratio to c; the bracket equation derived from the rough equation gives c")]
    for k, name in ((0, "x"), (1, "y")):
        vals = [float(np.var(ctx.mc(eps)[f"heisenberg:{k}"], ddof=1)) for eps in ctx.ladder]
        rows.append(Row(f"Var {name}(1) along eps", {"values": vals}, _trend(vals), None, 1.0, "PAPER", "below"))
    disp = []
    for eps in ctx.ladder:
        w = ctx.mc(eps)
        disp.append(float(sum(np.var(w[f"commuting:{k}"], ddof=1) for k in range(3))))
    rows.append(Row("commuting system dispersion along eps", {"values": disp}, _trend(disp), None, 1.0, "PAPER",
                    "below"))
    return _gate("AC9", "bracket diffusion of the Heisenberg system", "PAPER", rows, ctx.profile)


def gate_tightness(ctx: AcceptanceContext) -> GateResult:
    from .experiments import TIGHTNESS_TIMES

    v = ctx.mc(ctx.fine_eps)
    means = [float(np.mean(v[f"tight:{t!r}"])) for t in TIGHTNESS_TIMES]
    slope = float(np.polyfit(np.log(TIGHTNESS_TIMES), np.log(means), 1)[0])
    rows = [Row("slope of log E|X^(2)(0,tau)|^2 vs log tau", {"tau": list(TIGHTNESS_TIMES), "means": means}, slope,
                None, 1.0, "PAPER", "slope")]
    return _gate("AC10", "tightness exponent of level 2", "PAPER", rows, ctx.profile)


def gate_kpz_noise(ctx: AcceptanceContext) -> GateResult:
    reps = [ctx.kpz(e) for e in ctx.kpz_ladder]
    fine = reps[-1]
    rows = [Row("Var <phi, xi_eps> at finest eps", {"eps": fine.eps, "samples": fine.samples}, fine.var_xi[0],
                fine.var_xi[1], fine.var_prediction, "PAPER", "mc10")]
    for r in reps:
        rows.append(Row("corr(<phi, xi>, <psi, eta>)", {"eps": r.eps}, r.correlation[0], r.correlation[1], 0.0,
                        "PAPER", "z3"))
    k4 = [r.kappa4_xi[0] for r in reps]
    rows.append(Row("fourth cumulant of <phi, xi_eps> along eps", {"values": k4,
                                                                   "stderr": [r.kappa4_xi[1] for r in reps]},
                    max(b - a for a, b in zip(k4, k4[1:])), None, 0.0, "PAPER", "below",
                    "largest successive increase"))
    for a, b in zip(reps, reps[1:]):
        rows.append(Row("Var chi ratio per eps halving", {"eps": [a.eps, b.eps]}, a.var_chi[0] / b.var_chi[0], None,
                        2 ** -1.5, "PAPER", "rel10pct"))
    return _gate("AC11", "KPZ noise statistics", "PAPER", rows, ctx.profile)


def gate_change_of_variables(ctx: AcceptanceContext) -> GateResult:
    from .kpz_noise import change_of_variables_gap

    gaps = change_of_variables_gap(2 ** -3, nx=128, strides=(8, 4, 2, 1), seed=ctx.seed)
    ratios = [a / b for a, b in zip(gaps, gaps[1:])]
    rows = [Row("sup-gap ratio per time-step halving (smallest)", {"gaps": gaps}, min(ratios), None, 1.5, "TRIVIAL",
                "at_least")]
    return _gate("AC12", "KPZ change of variables", "TRIVIAL", rows, ctx.profile)


def gate_oracles(ctx: AcceptanceContext) -> GateResult:
    from .oracles import run_oracles

    t = run_oracles(ctx, profile=ctx.profile)
    return _gate("AC13", "every derived reference value matches its oracle", "DERIVED", t.rows, ctx.profile)


GATES: dict[str, Callable[[AcceptanceContext], GateResult]] = {
    "AC1": gate_constant_quarter, "AC2": gate_ibp, "AC3": gate_covariance_table, "AC4": gate_levy_mc,
    "AC5": gate_odd_levels, "AC6": gate_level4, "AC7": gate_fourth_cumulant, "AC8": gate_cutoff_cancellation,
    "AC9": gate_bracket_diffusion, "AC10": gate_tightness, "AC11": gate_kpz_noise,
    "AC12": gate_change_of_variables, "AC13": gate_oracles,
}


def run_acceptance(ctx: AcceptanceContext | None = None, gates=None) -> tuple[ResultTable, dict[str, GateResult]]:
    ctx = ctx or AcceptanceContext()
    results = {g: GATES[g](ctx) for g in (gates or GATES)}
    summary = ResultTable([Row(**{**r.summary.__dict__, "passed": None}) for r in results.values()],
                          profile=ctx.profile)
    return summary, results
