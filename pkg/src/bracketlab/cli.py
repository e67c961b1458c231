"""Command line entry point: `bracketlab <subcommand> ...`.

Every subcommand writes CSV/JSON/markdown under --out-dir and exits 0 iff
all gated rows pass.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

from .harness import PROFILES, ConfigError, ExperimentConfig, ResultTable, emit_report, write_table

log = logging.getLogger("bracketlab")


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default="results")
    p.add_argument("--profile", choices=sorted(PROFILES), default="default")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="bracketlab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernels", parents=[common], help="tabulate K_eps and Kbar_eps")
    p.add_argument("--H", type=float, default=0.1)
    p.add_argument("--eps", type=_floats, default=[1e-2])
    p.add_argument("--mollifier", default="bump")
    p.add_argument("--out", help="CSV with columns t,K,Kbar")

    p = sub.add_parser("constant-c", parents=[common], help="int Kbar_eps^2 along eps and its limit")
    p.add_argument("--H", type=float, default=0.1)
    p.add_argument("--mollifier", action="append")
    p.add_argument("--eps-list", type=_floats, default=[1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
    p.add_argument("--delta", type=float, default=1.0)

    p = sub.add_parser("reduce", parents=[common], help="integration by parts to the fixed point")
    p.add_argument("--diagram", action="append",
                   help="builtin name (cutoff-first, cutoff-second, cutoff-third; join with +) or a JSON file")
    p.add_argument("--operator", choices=("I", "J"), default="J")

    p = sub.add_parser("limit-moment", parents=[common], help="exact limit of a moment of signature entries")
    p.add_argument("factors", nargs="+", help="index words such as 12 21")
    p.add_argument("--m", type=int)
    p.add_argument("--method", choices=("parallel", "exhaustive"), default="parallel")

    p = sub.add_parser("mc-moments", parents=[common], help="Monte Carlo moment against its limit")
    p.add_argument("factors", nargs="+")
    p.add_argument("--m", type=int)
    p.add_argument("--H", type=float, default=0.1)
    p.add_argument("--eps-list", type=_floats, default=[1e-3])
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--grid-log2", type=int, default=15)

    p = sub.add_parser("levy-area", parents=[common], help="level-2 covariance table, symbolic and Monte Carlo")
    p.add_argument("--H", type=float, default=0.1)
    p.add_argument("--eps-list", type=_floats, default=[1e-3])
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--symbolic-only", action="store_true")
    p.add_argument("--grid-log2", type=int, default=15)

    p = sub.add_parser("rde", parents=[common], help="driven ODE against the bracket diffusion")
    p.add_argument("--system", default="heisenberg")
    p.add_argument("--H", type=float, default=0.1)
    p.add_argument("--eps-list", type=_floats, default=[1e-2, 1e-3])
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--convention", choices=("displayed", "rde"), default="displayed")
    p.add_argument("--ode-mode", choices=("pointwise", "piecewise"), default="pointwise")
    p.add_argument("--grid-log2", type=int, default=15)

    p = sub.add_parser("kpz-noise", parents=[common], help="statistics of the KPZ noise fields")
    p.add_argument("--eps", type=_floats, default=[2 ** -4])
    p.add_argument("--nx", type=int, default=1024)
    p.add_argument("--dt", type=float, help="time step; default (eps/10)^2")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--lam", type=float, default=0.125)
    p.add_argument("--out", help="CSV with columns quantity,eps,estimate,stderr,prediction,z")

    p = sub.add_parser("kpz-solve", parents=[common], help="KPZ solvers and the change-of-variables check")
    p.add_argument("--variant", choices=("u", "h", "ch"), default="u")
    p.add_argument("--eps", type=_floats, default=[2 ** -3])
    p.add_argument("--nx", type=int, default=128)
    p.add_argument("--horizon", type=float, default=0.01)
    p.add_argument("--no-gap", action="store_true", help="solve only, skip the change-of-variables check")

    p = sub.add_parser("oracles", parents=[common], help="run the brute-force oracle suite")
    p.add_argument("--no-mc", action="store_true", help="skip the Monte Carlo oracles")

    p = sub.add_parser("report", parents=[common], help="run the acceptance gates")
    p.add_argument("--gates", help="comma-separated subset such as AC1,AC3")
    p.add_argument("--quick", action="store_true", help="small sample sizes (smoke run, not the acceptance scale)")

    p = sub.add_parser("run", parents=[common], help="run an experiment from a JSON config")
    p.add_argument("config")
    return ap


def _config(args, kind: str, **kw) -> ExperimentConfig:
    return ExperimentConfig(kind=kind, seed=args.seed, workers=args.workers, out_dir=args.out_dir,
                            tolerance_profile=args.profile, **kw)


def _finish(table: ResultTable, out_dir: str, stem: str) -> int:
    write_table(table, out_dir, stem)
    for line in table.summary_lines():
        print(line)
    if not table.gated:
        print(f"{len(table.rows)} rows written to {Path(out_dir) / stem}.csv")
    return 0 if table.all_pass else 1


def _cmd_kernels(args):
    from .experiments import run_experiment

    cfg = _config(args, "kernels", hurst=args.H, eps_ladder=sorted(args.eps, reverse=True),
                  mollifiers=[args.mollifier])
    t = run_experiment(cfg)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps", "t", "K", "Kbar"])
            ks = [r for r in t.rows if r.quantity == "K"]
            kb = [r for r in t.rows if r.quantity == "Kbar"]
            for a, b in zip(ks, kb):
                w.writerow([a.params["eps"], repr(a.params["t"]), repr(a.estimate), repr(b.estimate)])
    return _finish(t, args.out_dir, "kernels")


def _cmd_experiment(kind, **kw):
    def run(args):
        from .experiments import run_experiment

        cfg = _config(args, kind, **{k: v(args) if callable(v) else v for k, v in kw.items()})
        return _finish(run_experiment(cfg, write=False), args.out_dir, kind)
    return run


def _cmd_kpz_noise(args):
    from .experiments import run_experiment

    eps = sorted(args.eps, reverse=True)
    res = 10.0 if args.dt is None else min(e / math.sqrt(args.dt) for e in eps)
    cfg = _config(args, "kpz-noise", eps_ladder=eps, samples=args.samples,
                  options={"nx": args.nx, "lam": args.lam, "resolution": res})
    t = run_experiment(cfg, write=False)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["quantity", "eps", "estimate", "stderr", "prediction", "z"])
            for r in t.rows:
                z = ""
                if r.prediction is not None and r.stderr:
                    z = repr((float(r.estimate) - float(r.prediction)) / r.stderr)
                w.writerow([r.quantity, r.params["eps"], repr(r.estimate), repr(r.stderr),
                            "" if r.prediction is None else repr(r.prediction), z])
    return _finish(t, args.out_dir, "kpz-noise")


def _cmd_oracles(args):
    from .acceptance import AcceptanceContext
    from .oracles import run_oracles

    ctx = AcceptanceContext(seed=args.seed, workers=args.workers, profile=args.profile)
    t = run_oracles(ctx, profile=args.profile, include_mc=not args.no_mc)
    return _finish(t, args.out_dir, "oracles")


def _cmd_report(args):
    from .acceptance import AcceptanceContext, run_acceptance

    kw = dict(seed=args.seed, workers=args.workers, profile=args.profile)
    if args.quick:
        kw.update(samples=200, ladder_samples=200, grid_log2=14, kpz_samples=(4, 4, 4), kpz_nx=512)
        kw["kpz_ladder"] = (2.0 ** -3, 2.0 ** -4, 2.0 ** -5)
    ctx = AcceptanceContext(**kw)
    gates = args.gates.split(",") if args.gates else None
    summary, results = run_acceptance(ctx, gates)
    tables = {"acceptance": summary}
    for name, r in results.items():
        tables[f"{name} {r.title}"] = r.checks
        print(r.line())
    return emit_report(tables, args.out_dir, "report")


def _cmd_run(args):
    from .experiments import run_experiment

    cfg = ExperimentConfig.from_json(Path(args.config).read_text())
    t = run_experiment(cfg, write=False)
    return _finish(t, cfg.out_dir, cfg.stem or cfg.kind)


COMMANDS = {
    "kernels": _cmd_kernels,
    "constant-c": _cmd_experiment("constant-c", hurst=lambda a: a.H, eps_ladder=lambda a: sorted(a.eps_list, reverse=True),
                                  mollifiers=lambda a: a.mollifier or ["bump"], options=lambda a: {"delta": a.delta}),
    "reduce": _cmd_experiment("reduce", options=lambda a: {
        "operator": a.operator,
        "diagrams": [json.loads(Path(d).read_text()) if d.endswith(".json") else d for d in a.diagram]
        if a.diagram else ["cutoff-first", "cutoff-second+cutoff-third"]}),
    "limit-moment": _cmd_experiment("limit-moment", options=lambda a: {"factors": a.factors, "m": a.m,
                                                                        "method": a.method}),
    "mc-moments": _cmd_experiment("mc-moments", hurst=lambda a: a.H,
                                  eps_ladder=lambda a: sorted(a.eps_list, reverse=True), samples=lambda a: a.samples,
                                  options=lambda a: {"factors": a.factors, "m": a.m, "grid_log2": a.grid_log2}),
    "levy-area": _cmd_experiment("levy-area", hurst=lambda a: a.H,
                                 eps_ladder=lambda a: sorted(a.eps_list, reverse=True), samples=lambda a: a.samples,
                                 options=lambda a: {"symbolic_only": a.symbolic_only, "grid_log2": a.grid_log2}),
    "rde": _cmd_experiment("rde", hurst=lambda a: a.H, eps_ladder=lambda a: sorted(a.eps_list, reverse=True),
                           samples=lambda a: a.samples,
                           options=lambda a: {"system": a.system, "convention": a.convention,
                                              "ode_mode": a.ode_mode, "grid_log2": a.grid_log2}),
    "kpz-noise": _cmd_kpz_noise,
    "kpz-solve": _cmd_experiment("kpz-solve", eps_ladder=lambda a: sorted(a.eps, reverse=True),
                                 options=lambda a: {"variant": a.variant, "nx": a.nx, "horizon": a.horizon,
                                                    "gap": not a.no_gap}),
    "oracles": _cmd_oracles,
    "report": _cmd_report,
    "run": _cmd_run,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
