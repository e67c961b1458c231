"""Experiment kinds behind the command line.

Each runner maps an ExperimentConfig to a ResultTable; run_experiment also
writes the CSV/JSON/markdown artifacts.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np
import sympy as sp

from .fbm_path import MCConfig, WordSeries, batch_means, mc_collect, words_of_level
from .harness import ExperimentConfig, ResultTable, Row, write_table

C_SYMBOL = sp.Symbol("c", positive=True)
TIGHTNESS_TIMES = tuple(2.0 ** -k for k in range(6, 1, -1))


def _mc_config(cfg: ExperimentConfig, eps: float, m: int, samples: int | None = None) -> MCConfig:
    o = cfg.options
    return MCConfig(hurst=cfg.hurst, eps=eps, mollifier=cfg.mollifiers[0], m=m,
                    grid_log2=int(o.get("grid_log2", 15)), t0=float(o.get("t0", -0.125)),
                    t1=float(o.get("t1", 1.125)), samples=samples or cfg.samples, seed=cfg.seed,
                    chunk=cfg.batch, workers=cfg.workers)


def limit_constant(H: float, mollifier: str = "bump") -> float:
    """The constant c used as the covariance prediction: 4H^2 at H = 1/4,
    the kernel-tail limit below."""
    from .kernel_lab import constant_c

    if H == 0.25:
        return 0.25
    return float(constant_c(H, mollifier, eps_list=(1e-6,)).limit_from_tail)


# ---------------------------------------------------------------- Monte Carlo statistics

class PathStatistics:
    """Per-sample statistics of one batch of drivers on [0, 1].

    words: signature words evaluated at time 1 (keys like "12", "1212");
    tightness: |X^(2)(0, tau)|^2 over components 1..2 at the given taus;
    systems: final states of driven ODEs (builtin system names).
    """

    def __init__(self, words=(), tightness=(), systems=(), ode_mode: str = "pointwise"):
        self.words = tuple(words)
        self.tightness = tuple(tightness)
        self.systems = tuple(systems)
        self.ode_mode = ode_mode

    def __call__(self, driver) -> dict[str, np.ndarray]:
        from .dynamics import builtin_system, solve_driven_ode

        out = {}
        ws = WordSeries(driver.window(0.0, 1.0))
        for w in self.words:
            out[w] = ws.at(tuple(int(ch) for ch in w))
        if self.tightness:
            g = driver.grid
            idx = [g.index(t) - g.index(0.0) for t in self.tightness]
            sq = sum(ws(w)[..., idx] ** 2 for w in words_of_level(2, 2))
            for t, col in zip(self.tightness, np.moveaxis(sq, -1, 0)):
                out[f"tight:{t!r}"] = col
        for name in self.systems:
            sys_ = builtin_system(name)
            traj = solve_driven_ode(sys_, _first_components(driver, sys_.m), np.zeros(sys_.d), (0.0, 1.0),
                                    mode=self.ode_mode)
            for k in range(sys_.d):
                out[f"{name}:{k}"] = traj.final[:, k]
            out[f"{name}:exited"] = traj.exited.astype(float)
        return out


def _first_components(driver, m):
    if driver.m == m:
        return driver
    from .fbm_path import Driver

    return Driver(driver.grid, driver.xi[..., :m, :], driver.increments[..., :m, :], driver.eps, driver.c_eps,
                  driver.valid)


def norm_squared(values: dict, level: int, m: int = 2) -> np.ndarray:
    return sum(values["".join(map(str, w))] ** 2 for w in words_of_level(m, level))


def level_words(level: int, m: int = 2) -> list[str]:
    return ["".join(map(str, w)) for w in words_of_level(m, level)]


# ---------------------------------------------------------------- runners

def _constant_c(cfg: ExperimentConfig) -> ResultTable:
    from .kernel_lab import c_candidates, constant_c

    t = ResultTable(profile=cfg.tolerance_profile)
    delta = float(cfg.options.get("delta", 1.0))
    for mol in cfg.mollifiers:
        est = constant_c(cfg.hurst, mol, cfg.eps_ladder, delta)
        for r in est.per_eps:
            t.add(Row("int Kbar_eps^2", {"H": cfg.hurst, "mollifier": mol, "eps": r["eps"], "delta": delta},
                      r["value"]))
        params = {"H": cfg.hurst, "mollifier": mol, "delta": delta}
        if cfg.hurst == 0.25:
            t.add(Row("c extrapolated", params, est.estimate, None, 0.25, "PAPER", "rel10pct",
                      "c = 4H^2 at H = 1/4; " + "; ".join(est.diagnostics)))
        else:
            cand = c_candidates(cfg.hurst, mol)
            t.add(Row("c extrapolated", params, est.estimate, None, est.limit_from_tail, "DERIVED", "rel2pct",
                      "against the kernel-tail limit"))
            t.add(Row("c vs 1/4 int (rho*rho~*F_H)^2", params, est.limit_from_tail, None, cand["rho_rho_F/4"],
                      "DERIVED", "rel2pct", f"int (rho*F_H)^2 = {cand['rho_F']:.6g}"))
    return t


def _levy_area(cfg: ExperimentConfig) -> ResultTable:
    from .moment_engine import MomentSpec, limit_moment

    t = ResultTable(profile=cfg.tolerance_profile)
    c = limit_constant(cfg.hurst, cfg.mollifiers[0])
    patterns = [("12", "12", C_SYMBOL), ("12", "21", -C_SYMBOL), ("12", "13", sp.Integer(0))]
    for a, b, want in patterns:
        v = limit_moment(MomentSpec.of(a, b, m=3), C_SYMBOL).value
        t.add(Row(f"lim E X{a} X{b} (symbolic)", {"H": cfg.hurst}, str(sp.simplify(v)), None, str(want),
                  "PAPER", "exact"))
    if cfg.options.get("symbolic_only"):
        return t
    fn = PathStatistics(words=("12", "21", "13"))
    for eps in cfg.eps_ladder:
        vals = mc_collect(_mc_config(cfg, eps, 3), (0.0, 1.0), fn)
        for (a, b, want), rule in zip(patterns, ("mc10", "mc10", "z3")):
            e = batch_means(vals[a] * vals[b], 20)
            t.add(Row(f"E X{a} X{b}", {"H": cfg.hurst, "eps": eps, "samples": cfg.samples}, e.estimate, e.stderr,
                      float(want.subs(C_SYMBOL, c)), "PAPER", rule))
    return t


def _kernels(cfg: ExperimentConfig) -> ResultTable:
    from .kernel_lab import KernelModel

    t = ResultTable(profile=cfg.tolerance_profile)
    ts = cfg.options.get("t")
    for mol in cfg.mollifiers:
        for eps in cfg.eps_ladder:
            m = KernelModel(cfg.hurst, eps, mol)
            grid = np.asarray(ts if ts is not None else np.concatenate([[0.0], np.logspace(math.log10(eps / 10), 0, 41)]))
            for x, k, kb in zip(grid, m.K(grid), m.Kbar(grid)):
                p = {"H": cfg.hurst, "eps": eps, "mollifier": mol, "t": float(x)}
                t.add(Row("K", p, float(k)))
                t.add(Row("Kbar", p, float(kb)))
    return t


def builtin_diagrams() -> dict:
    """Named diagrams for the `reduce` experiment: the three graphs of the
    level-4 cutoff expansion over two 4-chains."""
    from .graph_calculus import Diagram
    from .poset_core import build_chain, disjoint_sum

    p = disjoint_sum([build_chain(4), build_chain(4)])
    gk = [(1, 7), (2, 8), (3, 9), (4, 10)]
    return {
        "cutoff-first": Diagram.make(p, gk=gk, gchi=[(2, 4), (8, 10)]),
        "cutoff-second": Diagram.make(p, gk=gk, gchi=[(3, 4), (9, 10)]),
        "cutoff-third": Diagram.make(p, gk=[(1, 8), (2, 7), (3, 9), (4, 10)], gchi=[(3, 4), (9, 10)]),
    }


def full_class_counts(diagram_sum) -> dict[str, int]:
    from .graph_calculus import classify_limit_order

    counts: dict[str, int] = {}
    for d, _ in diagram_sum:
        k = classify_limit_order(d)
        counts[k] = counts.get(k, 0) + 1
    return counts


def _reduce(cfg: ExperimentConfig) -> ResultTable:
    from .graph_calculus import Diagram, DiagramSum, reduce_I_infinity, reduce_J_infinity

    t = ResultTable(profile=cfg.tolerance_profile)
    names = cfg.options.get("diagrams", ["cutoff-first", "cutoff-second+cutoff-third"])
    known = builtin_diagrams()
    op = cfg.options.get("operator", "J")
    for name in names:
        s = DiagramSum()
        if isinstance(name, dict):
            s.add(Diagram.from_json(name))
            label = "custom"
        else:
            for part in name.split("+"):
                s.add(known[part])
            label = name
        red = (reduce_J_infinity if op == "J" else reduce_I_infinity)(s)
        t.add(Row(f"reduce {op}^inf terms", {"diagram": label}, len(red)))
        if op == "J" or all(not d.gk for d, _ in red):
            for k, v in sorted(full_class_counts(red).items()):
                t.add(Row(f"class {k}", {"diagram": label}, v))
    return t


def _limit_moment(cfg: ExperimentConfig) -> ResultTable:
    from .moment_engine import MomentSpec, enumerate_pairings, limit_moment

    t = ResultTable(profile=cfg.tolerance_profile)
    factors = cfg.options.get("factors", ["12", "12"])
    spec = MomentSpec.of(*factors, m=cfg.options.get("m"))
    c = C_SYMBOL if cfg.options.get("symbolic", True) else limit_constant(cfg.hurst)
    pred = limit_moment(spec, c, cfg.options.get("method", "parallel"), cfg.workers)
    p = {"factors": list(factors)}
    t.add(Row("index-matching pairings", p, len(enumerate_pairings(spec))))
    t.add(Row("contributing pairings", p, len(pred.pairing_terms)))
    t.add(Row("limit moment", p, str(sp.simplify(pred.value)) if c is C_SYMBOL else float(pred.value)))
    return t


def _mc_moments(cfg: ExperimentConfig) -> ResultTable:
    from .fbm_path import mc_moment
    from .moment_engine import MomentSpec, limit_moment

    t = ResultTable(profile=cfg.tolerance_profile)
    factors = cfg.options.get("factors", ["12", "12"])
    spec = MomentSpec.of(*factors, m=cfg.options.get("m"))
    c = limit_constant(cfg.hurst, cfg.mollifiers[0])
    pred = float(limit_moment(spec, c).value)
    for eps in cfg.eps_ladder:
        e = mc_moment(spec, _mc_config(cfg, eps, max(spec.component_count, 2)))
        rule = "z3" if pred == 0 else "mc10"
        t.add(Row("E " + " ".join("X" + "".join(map(str, f.index)) for f in spec.factors),
                  {"H": cfg.hurst, "eps": eps, "samples": cfg.samples}, e.estimate, e.stderr, pred, "DERIVED", rule))
    return t


def _rde(cfg: ExperimentConfig) -> ResultTable:
    from .dynamics import DISPLAYED, builtin_system, solve_limit_sde, verify_rde_reduction

    t = ResultTable(profile=cfg.tolerance_profile)
    name = cfg.options.get("system", "heisenberg")
    sys_ = builtin_system(name)
    rep = verify_rde_reduction(sys_, seed=cfg.seed)
    resid = max(rep.level2_match, rep.level4_match, *rep.vanishing.values())
    t.add(Row("rough-equation reduction residual", {"system": name}, float(resid), None, 0.0, "DERIVED", "abs1e-6"))
    c = limit_constant(cfg.hurst, cfg.mollifiers[0])
    conv = cfg.options.get("convention", DISPLAYED)
    lim = solve_limit_sde(sys_, math.sqrt(c), np.zeros(sys_.d), samples=cfg.samples, seed=cfg.seed,
                          convention=conv)
    fn = PathStatistics(systems=(name,), ode_mode=cfg.options.get("ode_mode", "pointwise"))
    for eps in cfg.eps_ladder:
        vals = mc_collect(_mc_config(cfg, eps, sys_.m), (0.0, 1.0), fn)
        for k in range(sys_.d):
            x = vals[f"{name}:{k}"]
            e = batch_means((x - x.mean()) ** 2 * len(x) / (len(x) - 1), 20)
            ref = float(np.var(lim.final[:, k], ddof=1))
            t.add(Row(f"Var x{k + 1}(1)", {"system": name, "eps": eps, "samples": cfg.samples}, e.estimate,
                      e.stderr))
            t.add(Row(f"Var x{k + 1}(1) limit SDE", {"system": name, "convention": conv}, ref))
    return t


def _kpz_noise(cfg: ExperimentConfig) -> ResultTable:
    from .kpz_noise import decorrelation_and_cumulants

    t = ResultTable(profile=cfg.tolerance_profile)
    o = cfg.options
    for eps in cfg.eps_ladder:
        r = decorrelation_and_cumulants(eps, cfg.samples, seed=cfg.seed, nx=int(o.get("nx", 1024)),
                                        lam=float(o.get("lam", 0.125)), resolution=float(o.get("resolution", 10)))
        p = {"eps": eps, "samples": cfg.samples, "nx": int(o.get("nx", 1024))}
        t.add(Row("Var <phi, xi_eps>", p, r.var_xi[0], r.var_xi[1], r.var_prediction, "PAPER", "mc10"))
        t.add(Row("corr(<phi, xi_eps>, <psi, eta_eps>)", p, r.correlation[0], r.correlation[1], 0.0, "PAPER", "z3"))
        t.add(Row("kappa4 <phi, xi_eps>", p, r.kappa4_xi[0], r.kappa4_xi[1]))
        t.add(Row("kappa4 <psi, eta_eps>", p, r.kappa4_eta[0], r.kappa4_eta[1], 0.0, "TRIVIAL", "z3"))
        t.add(Row("Var chi_eps", p, r.var_chi[0], r.var_chi[1], r.c_eps, "DERIVED", "z3"))
    return t


def _kpz_solve(cfg: ExperimentConfig) -> ResultTable:
    from .kpz_noise import COLE_HOPF_REF, H_FORM, U_FORM, SpaceTimeGrid, build_chi_xi, change_of_variables_gap, \
        kpz_constants, solve_kpz

    t = ResultTable(profile=cfg.tolerance_profile)
    o = cfg.options
    variant = {"u": U_FORM, "h": H_FORM, "ch": COLE_HOPF_REF}.get(o.get("variant", "u"), o.get("variant"))
    nx = int(o.get("nx", 128))
    for eps in cfg.eps_ladder:
        p = {"eps": eps, "nx": nx, "variant": variant}
        if o.get("gap", True) and variant in (U_FORM, H_FORM):
            strides = tuple(o.get("strides", (8, 4, 2, 1)))
            gaps = change_of_variables_gap(eps, nx=nx, strides=strides, seed=cfg.seed)
            for g, s in zip(gaps, strides):
                t.add(Row("sup |U_FORM - H_FORM|", {**p, "stride": s}, g))
            ratio = min(a / b for a, b in zip(gaps, gaps[1:]))
            t.add(Row("gap ratio per halving", p, ratio, None, 1.5, "TRIVIAL", "at_least"))
            continue
        grid = SpaceTimeGrid.for_eps(eps, nx)
        steps = min(grid.nt - 1, int(float(o.get("horizon", 0.01)) / grid.dt))
        h0 = np.zeros(nx)
        if variant == COLE_HOPF_REF:
            sigma = math.sqrt(kpz_constants(None, eps, nx)[1])
            sol = solve_kpz(None, h0, variant, steps, dt=grid.dt, sigma=sigma, seed=cfg.seed)
        else:
            f = build_chi_xi(grid, eps, seed=cfg.seed, extras=True)
            sol = solve_kpz(f, h0, variant, steps)
        t.add(Row("final mean h", p, float(np.mean(sol.h[-1]))))
        t.add(Row("final sd h", p, float(np.std(sol.h[-1]))))
        t.add(Row("flags", p, len(sol.flags), detail="; ".join(sol.flags[:3])))
    return t


RUNNERS: dict[str, Callable[[ExperimentConfig], ResultTable]] = {
    "constant-c": _constant_c, "levy-area": _levy_area, "kernels": _kernels, "reduce": _reduce,
    "limit-moment": _limit_moment, "mc-moments": _mc_moments, "rde": _rde, "kpz-noise": _kpz_noise,
    "kpz-solve": _kpz_solve,
}


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ResultTable:
    """Run one experiment; deterministic given (config, seed) and
    independent of the worker count."""
    table = RUNNERS[cfg.kind](cfg)
    if write:
        write_table(table, cfg.out_dir, cfg.stem or cfg.kind)
    return table
