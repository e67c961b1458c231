"""Experiment plumbing: configs, result tables, tolerance profiles, reports.

Pass/fail of a row is decided only here, from the row's rule name and the
active tolerance profile.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

SCHEMA_VERSION = 1
PROVENANCE = ("PAPER", "TRIVIAL", "DERIVED")
KINDS = ("constant-c", "levy-area", "kernels", "reduce", "limit-moment", "mc-moments", "rde",
         "kpz-noise", "kpz-solve")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class Tolerance:
    """How an estimate is compared with its prediction.

    close     |est - pred| <= max(abs, rel |pred|, sigmas * stderr)
    exact     est == pred
    below     est < pred          (pred is a threshold)
    at_least  est >= pred
    within    |est - pred| <= abs (a band)
    """
    mode: str
    rel: float = 0.0
    abs: float = 0.0
    sigmas: float = 0.0

    def check(self, est, pred, stderr) -> bool:
        if self.mode == "exact":
            return est == pred
        try:
            est, pred = float(est), float(pred)
        except (TypeError, ValueError):
            return False
        if not (math.isfinite(est) and math.isfinite(pred)):
            return False
        if self.mode == "below":
            return est < pred
        if self.mode == "at_least":
            return est >= pred
        if self.mode == "within":
            return abs(est - pred) <= self.abs
        if self.mode == "close":
            se = float(stderr) if stderr is not None and math.isfinite(float(stderr)) else 0.0
            return abs(est - pred) <= max(self.abs, self.rel * abs(pred), self.sigmas * se)
        raise ValueError(f"unknown tolerance mode {self.mode!r}")


PROFILES: dict[str, dict[str, Tolerance]] = {
    "default": {
        "exact": Tolerance("exact"),
        "rel1e-8": Tolerance("close", rel=1e-8),
        "rel1e-6": Tolerance("close", rel=1e-6),
        "rel1e-5": Tolerance("close", rel=1e-5),
        "rel1e-3": Tolerance("close", rel=1e-3),
        "rel1pct": Tolerance("close", rel=0.01),
        "rel2pct": Tolerance("close", rel=0.02),
        "rel10pct": Tolerance("close", rel=0.10),
        "abs1e-6": Tolerance("close", abs=1e-6),
        "abs1e-3": Tolerance("close", abs=1e-3),
        "mc10": Tolerance("close", rel=0.10, sigmas=3),
        "mc15": Tolerance("close", rel=0.15, sigmas=3),
        "z3": Tolerance("close", sigmas=3),
        "below": Tolerance("below"),
        "at_least": Tolerance("at_least"),
        "slope": Tolerance("within", abs=0.15),
    },
}
PROFILES["strict"] = {
    **PROFILES["default"],
    "rel10pct": Tolerance("close", rel=0.05),
    "mc10": Tolerance("close", rel=0.05, sigmas=3),
    "mc15": Tolerance("close", rel=0.10, sigmas=3),
    "z3": Tolerance("close", sigmas=2),
    "slope": Tolerance("within", abs=0.10),
}


@dataclass
class Row:
    quantity: str
    params: dict = field(default_factory=dict)
    estimate: Any = None
    stderr: float | None = None
    prediction: Any = None
    provenance: str | None = None
    rule: str | None = None
    detail: str = ""
    passed: bool | None = None

    def __post_init__(self):
        if self.prediction is not None and self.provenance not in PROVENANCE:
            raise ValueError(f"row {self.quantity!r}: a prediction needs a provenance tag in {PROVENANCE}")
        if self.prediction is not None and self.rule is None:
            raise ValueError(f"row {self.quantity!r}: a prediction needs a tolerance rule")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


class ResultTable:
    COLUMNS = ("quantity", "params", "estimate", "stderr", "prediction", "provenance", "rule", "passed",
               "detail")

    def __init__(self, rows: Iterable[Row] = (), profile: str = "default"):
        self.rows: list[Row] = []
        self.profile = profile
        for r in rows:
            self.add(r)

    def add(self, row: Row) -> Row:
        rules = PROFILES[self.profile]
        if row.prediction is not None:
            if row.rule not in rules:
                raise ValueError(f"unknown tolerance rule {row.rule!r}")
            row.passed = bool(rules[row.rule].check(row.estimate, row.prediction, row.stderr))
        self.rows.append(row)
        return row

    def extend(self, other: "ResultTable"):
        for r in other.rows:
            self.add(Row(**{**asdict(r), "passed": None}))

    @property
    def gated(self) -> list[Row]:
        return [r for r in self.rows if r.passed is not None]

    @property
    def all_pass(self) -> bool:
        return all(r.passed for r in self.gated)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow([r.quantity, json.dumps(r.params, sort_keys=True, default=str), _fmt(r.estimate),
                        _fmt(r.stderr), _fmt(r.prediction), r.provenance or "", r.rule or "",
                        "" if r.passed is None else ("PASS" if r.passed else "FAIL"), r.detail])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "profile": self.profile,
                "rows": [{**asdict(r), "estimate": _jsonable(r.estimate), "prediction": _jsonable(r.prediction)}
                         for r in self.rows]}

    def to_markdown(self) -> str:
        lines = ["| quantity | estimate | stderr | prediction | provenance | result |",
                 "|---|---|---|---|---|---|"]
        for r in self.rows:
            res = "" if r.passed is None else ("PASS" if r.passed else "FAIL")
            lines.append(f"| {r.quantity} | {_short(r.estimate)} | {_short(r.stderr)} | {_short(r.prediction)} "
                         f"| {r.provenance or ''} | {res} |")
        return "\n".join(lines) + "\n"

    def summary_lines(self) -> list[str]:
        return [f"{r.quantity}: {'PASS' if r.passed else 'FAIL'}  est={_short(r.estimate)} "
                f"pred={_short(r.prediction)} se={_short(r.stderr)}  {r.detail}".rstrip() for r in self.gated]


def _jsonable(v):
    if v is None or isinstance(v, (bool, int, float, str)):
        return v
    try:
        return float(v)
    except (TypeError, ValueError):
        return str(v)


def _short(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


# ---------------------------------------------------------------- configs

@dataclass
class ExperimentConfig:
    kind: str
    hurst: float = 0.1
    eps_ladder: list[float] = field(default_factory=lambda: [1e-2, 1e-3])
    mollifiers: list[str] = field(default_factory=lambda: ["bump"])
    samples: int = 1000
    seed: int = 0
    workers: int = 1
    batch: int = 50
    out_dir: str = "results"
    stem: str | None = None
    tolerance_profile: str = "default"
    options: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self):
        from .kernel_lab import MOLLIFIERS

        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got {self.schema_version}")
        if self.kind not in KINDS:
            raise ConfigError("kind", f"unknown experiment kind {self.kind!r}; known: {list(KINDS)}")
        if not 0 < self.hurst <= 0.25:
            raise ConfigError("model.hurst", "must lie in (0, 1/4]")
        if not self.eps_ladder:
            raise ConfigError("model.eps_ladder", "must not be empty")
        for i, e in enumerate(self.eps_ladder):
            if not e > 0:
                raise ConfigError(f"model.eps_ladder[{i}]", "must be positive")
        if any(a <= b for a, b in zip(self.eps_ladder, self.eps_ladder[1:])):
            raise ConfigError("model.eps_ladder", "must be sorted strictly decreasing")
        for i, m in enumerate(self.mollifiers):
            if m not in MOLLIFIERS:
                raise ConfigError(f"model.mollifiers[{i}]", f"unknown mollifier {m!r}; known: {sorted(MOLLIFIERS)}")
        if self.samples < 100:
            raise ConfigError("mc.samples", "must be at least 100")
        if self.workers < 1:
            raise ConfigError("mc.workers", "must be at least 1")
        if self.batch < 1:
            raise ConfigError("mc.batch", "must be at least 1")
        if self.tolerance_profile not in PROFILES:
            raise ConfigError("tolerance_profile", f"unknown profile; known: {sorted(PROFILES)}")

    @classmethod
    def from_json(cls, data: Mapping | str) -> "ExperimentConfig":
        if isinstance(data, str):
            data = json.loads(data)
        known = {"schema_version", "kind", "model", "mc", "outputs", "tolerance_profile", "options"}
        for k in data:
            if k not in known:
                raise ConfigError(k, "unknown field")
        if "kind" not in data:
            raise ConfigError("kind", "missing")
        model, mc, out = data.get("model", {}), data.get("mc", {}), data.get("outputs", {})
        kw = {"kind": data["kind"], "schema_version": data.get("schema_version", SCHEMA_VERSION),
              "tolerance_profile": data.get("tolerance_profile", "default"), "options": dict(data.get("options", {}))}
        for src, prefix, names in [(model, "model", ("hurst", "eps_ladder", "mollifiers")),
                                   (mc, "mc", ("samples", "seed", "workers", "batch")),
                                   (out, "outputs", ("out_dir", "stem"))]:
            for k in src:
                if k not in names:
                    raise ConfigError(f"{prefix}.{k}", "unknown field")
            kw.update(src)
        if "eps_ladder" in kw:
            kw["eps_ladder"] = [float(e) for e in kw["eps_ladder"]]
        return cls(**kw)

    def to_json(self) -> dict:
        return {"schema_version": self.schema_version, "kind": self.kind,
                "model": {"hurst": self.hurst, "eps_ladder": list(self.eps_ladder), "mollifiers": list(self.mollifiers)},
                "mc": {"samples": self.samples, "seed": self.seed, "workers": self.workers, "batch": self.batch},
                "outputs": {"out_dir": self.out_dir, "stem": self.stem},
                "tolerance_profile": self.tolerance_profile, "options": dict(self.options)}


# ---------------------------------------------------------------- reports

def write_table(table: ResultTable, out_dir: str | Path, stem: str) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / f"{stem}.csv", "json": out / f"{stem}.json", "md": out / f"{stem}.md"}
    paths["csv"].write_text(table.to_csv())
    paths["json"].write_text(json.dumps(table.to_json(), indent=1, sort_keys=True) + "\n")
    paths["md"].write_text(table.to_markdown())
    return paths


def emit_report(tables: Mapping[str, ResultTable] | ResultTable, out_dir: str | Path,
                stem: str = "report") -> int:
    """Write markdown, CSV and a JSON sidecar; return the process exit code
    (0 iff every gated row passes)."""
    if isinstance(tables, ResultTable):
        tables = {"results": tables}
    merged = ResultTable(profile=next(iter(tables.values())).profile if tables else "default")
    for t in tables.values():
        merged.extend(t)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.csv").write_text(merged.to_csv())
    gated = merged.gated
    failed = [r for r in gated if not r.passed]
    side = {"schema_version": SCHEMA_VERSION, "profile": merged.profile, "all_pass": not failed,
            "passed": len(gated) - len(failed), "failed": len(failed),
            "rows": merged.to_json()["rows"]}
    (out / f"{stem}.json").write_text(json.dumps(side, indent=1, sort_keys=True) + "\n")
    md = [f"# Results ({merged.profile} profile)", ""]
    if gated:
        md.append(f"{len(gated) - len(failed)} of {len(gated)} gates pass.")
        md.append("")
    for name, t in tables.items():
        md += [f"## {name}", "", t.to_markdown()]
    (out / f"{stem}.md").write_text("\n".join(md))
    return 0 if not failed else 1
