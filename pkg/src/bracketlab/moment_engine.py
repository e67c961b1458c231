"""Wick pairings for joint moments of iterated integrals and their limits.

A product of factors X^{(k_i)}_{I_i}(s_i, t_i) is encoded as a disjoint sum
of chains, chain i carrying k_i interior vertices with noise indices I_i and
boundary values (s_i, t_i).  Independent components decorrelate, so only
pairings joining vertices with the same index contribute.
"""
from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

from .graph_calculus import detect_parallel, limit_value
from .poset_core import BoundaryValues, Poset, build_chain, disjoint_sum

MAX_VERTICES = 16


class SpecError(ValueError):
    pass


def _exact(x):
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    return Fraction(str(x))


@dataclass(frozen=True)
class Factor:
    level: int
    index: tuple[int, ...]
    interval: tuple[Fraction, Fraction] = (Fraction(0), Fraction(1))

    def __post_init__(self):
        object.__setattr__(self, "index", tuple(int(i) for i in self.index))
        s, t = self.interval
        object.__setattr__(self, "interval", (_exact(s), _exact(t)))
        if not 1 <= self.level <= 4:
            raise SpecError(f"level {self.level} outside 1..4")
        if len(self.index) != self.level:
            raise SpecError(f"index {self.index} does not have length {self.level}")
        if self.interval[0] > self.interval[1]:
            raise SpecError(f"interval {self.interval} is reversed")


@dataclass(frozen=True)
class MomentSpec:
    factors: tuple[Factor, ...]
    component_count: int

    def __post_init__(self):
        fs = tuple(f if isinstance(f, Factor) else Factor(*f) for f in self.factors)
        object.__setattr__(self, "factors", fs)
        for f in fs:
            if any(not 1 <= i <= self.component_count for i in f.index):
                raise SpecError(f"index {f.index} outside 1..{self.component_count}")

    @classmethod
    def of(cls, *factors, m: int | None = None, interval=(0, 1)) -> "MomentSpec":
        """MomentSpec.of("12", "21") or MomentSpec.of(((1, 2), (0, 1)), ...)."""
        out = []
        for f in factors:
            if isinstance(f, Factor):
                out.append(f)
                continue
            if isinstance(f, str):
                idx, iv = tuple(int(ch) for ch in f), interval
            elif len(f) == 2 and isinstance(f[1], (tuple, list)) and not isinstance(f[0], int):
                idx, iv = tuple(f[0]), tuple(f[1])
            else:
                idx, iv = tuple(f), interval
            out.append(Factor(len(idx), idx, iv))
        if m is None:
            m = max((i for f in out for i in f.index), default=1)
        return cls(tuple(out), m)

    @property
    def size(self) -> int:
        return sum(f.level for f in self.factors)

    def poset(self) -> Poset:
        return disjoint_sum([build_chain(f.level) for f in self.factors])

    def layout(self):
        """(poset, boundary values, vertex -> index, vertex -> factor)."""
        p = self.poset()
        lower, upper, color, group = {}, {}, {}, {}
        offset = 0
        for i, f in enumerate(self.factors):
            lower[offset] = f.interval[0]
            upper[offset + f.level + 1] = f.interval[1]
            for j, ix in enumerate(f.index):
                color[offset + 1 + j] = ix
                group[offset + 1 + j] = i
            offset += f.level + 2
        return p, BoundaryValues(lower, upper), color, group

    def relabel(self, perm: dict[int, int]) -> "MomentSpec":
        return MomentSpec(tuple(Factor(f.level, tuple(perm[i] for i in f.index), f.interval)
                                for f in self.factors), self.component_count)

    def shift(self, h) -> "MomentSpec":
        h = _exact(h)
        return MomentSpec(tuple(Factor(f.level, f.index, (f.interval[0] + h, f.interval[1] + h))
                                for f in self.factors), self.component_count)

    def to_json(self) -> dict:
        return {"m": self.component_count,
                "factors": [{"level": f.level, "index": list(f.index),
                             "interval": [str(f.interval[0]), str(f.interval[1])]} for f in self.factors]}

    @classmethod
    def from_json(cls, data) -> "MomentSpec":
        if isinstance(data, str):
            data = json.loads(data)
        fs = []
        for f in data["factors"]:
            iv = f.get("interval", [0, 1])
            fs.append(Factor(int(f["level"]), tuple(f["index"]), (Fraction(str(iv[0])), Fraction(str(iv[1])))))
        return cls(tuple(fs), int(data["m"]))


@dataclass
class LimitPrediction:
    value: object
    pairing_terms: list[tuple[tuple[tuple[int, int], ...], object]] = field(default_factory=list)
    c_used: object = 1
    sigma: object = 1

    @classmethod
    def build(cls, terms, c):
        value = sum((v for _, v in terms), Fraction(0))
        if isinstance(c, (int, Fraction)) and c >= 0:
            sigma = math.sqrt(c)
        else:
            try:
                import sympy
                sigma = sympy.sqrt(c)
            except (TypeError, ValueError):
                sigma = math.sqrt(float(c))
        return cls(value, list(terms), c, sigma)


def _matchings(vertices: list[int], color: dict[int, int]) -> Iterator[list[tuple[int, int]]]:
    if not vertices:
        yield []
        return
    v, rest = vertices[0], vertices[1:]
    for i, w in enumerate(rest):
        if color[w] != color[v]:
            continue
        for m in _matchings(rest[:i] + rest[i + 1:], color):
            yield [(v, w)] + m


def _check_size(spec: MomentSpec):
    if spec.size > MAX_VERTICES:
        raise SpecError(f"total interior size {spec.size} exceeds {MAX_VERTICES}")


def enumerate_pairings(spec: MomentSpec, first: int | None = None) -> list[tuple[tuple[int, int], ...]]:
    """All index-matching perfect pairings of the interior vertices.

    `first` restricts to pairings whose lowest vertex is paired with `first`;
    the union over all admissible `first` is the full list.
    """
    _check_size(spec)
    if spec.size % 2:
        return []
    p, _, color, _ = spec.layout()
    verts = sorted(color)
    out = []
    for m in _matchings(verts, color):
        if first is None or m[0][1] == first:
            out.append(tuple(m))
    return out


def _parallel_pairings(p: Poset, color: dict[int, int]) -> Iterator[list[tuple[int, int]]]:
    """Exactly the index-matching pairings accepted by detect_parallel.

    Mirrors its greedy: the minimal free vertex v is paired with some e2,
    up(v) with a free neighbour f2 of e2.  Every other pairing has limit 0.
    """
    rank = {v: i for i, v in enumerate(p.total_order)}
    interior = sorted(color, key=rank.__getitem__)

    def rec(free: frozenset, acc):
        if not free:
            yield list(acc)
            return
        minimal = [v for v in free if not any(w != v and p.leq(w, v) for w in free)]
        v = min(minimal, key=rank.__getitem__)
        f1 = p.up(v)
        if f1 not in free:
            return
        for e2 in interior:
            if e2 not in free or e2 in (v, f1) or color[e2] != color[v]:
                continue
            nbrs = set(p.immediate_successors(e2)) | set(p.immediate_predecessors(e2))
            for f2 in sorted(nbrs, key=rank.__getitem__):
                if f2 not in free or f2 in (v, f1, e2) or color[f2] != color[f1]:
                    continue
                yield from rec(free - {v, e2, f1, f2}, acc + [(v, e2), (f1, f2)])

    yield from rec(frozenset(interior), [])


def _canon(pairing) -> tuple[tuple[int, int], ...]:
    return tuple(sorted(tuple(sorted(e)) for e in pairing))


def _connected(pairing, group: dict[int, int], n_groups: int) -> bool:
    parent = list(range(n_groups))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in pairing:
        parent[find(group[a])] = find(group[b])
    return len({find(i) for i in range(n_groups)}) == 1


def _terms(spec: MomentSpec, c, method: str, connected_only: bool = False):
    _check_size(spec)
    if spec.size % 2:
        return []
    p, b, color, group = spec.layout()
    if method == "parallel":
        pairings = (_canon(g) for g in _parallel_pairings(p, color))
    elif method == "exhaustive":
        pairings = iter(enumerate_pairings(spec))
    else:
        raise ValueError(f"unknown method {method!r}")
    terms = []
    for g in pairings:
        if connected_only and not _connected(g, group, len(spec.factors)):
            continue
        v = limit_value(p, g, b, c)
        if method == "parallel" or v != 0:
            terms.append((g, v))
    return terms


def _terms_for_first(args):
    spec, c, first = args
    p, b, _, _ = spec.layout()
    return [(g, limit_value(p, g, b, c)) for g in enumerate_pairings(spec, first)]


def limit_moment(spec: MomentSpec, c=1, method: str = "parallel", workers: int = 1) -> LimitPrediction:
    """lim E prod X_eps[i] as an exact sum over pairings.

    method="parallel" visits only pairings the parallel test accepts;
    method="exhaustive" walks every index-matching pairing (the oracle).
    With workers > 1 the exhaustive walk is split by the partner of the
    lowest vertex and the results merged in a fixed order.
    """
    if workers > 1 and method == "exhaustive" and spec.size % 2 == 0 and spec.size:
        _check_size(spec)
        _, _, color, _ = spec.layout()
        v0 = min(color)
        firsts = [w for w in sorted(color) if w != v0 and color[w] == color[v0]]
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_terms_for_first, [(spec, c, f) for f in firsts]))
        terms = [t for part in parts for t in part if t[1] != 0]
        return LimitPrediction.build(terms, c)
    return LimitPrediction.build(_terms(spec, c, method), c)


def limit_cumulant(specs: Sequence[Factor] | MomentSpec, c=1, method: str = "parallel"):
    """Joint limit cumulant of the factors: the sum over pairings whose edges
    connect all factor groups."""
    spec = specs if isinstance(specs, MomentSpec) else MomentSpec.of(*specs)
    return sum((v for _, v in _terms(spec, c, method, connected_only=True)), Fraction(0))


def _set_partitions(items: list) -> Iterator[list[list]]:
    if not items:
        yield []
        return
    head, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[head] + part[i]] + part[i + 1:]
        yield [[head]] + part


def cumulant_by_moments(spec: MomentSpec, c=1):
    """Joint cumulant from limit moments via the partition Moebius formula."""
    n = len(spec.factors)
    total = Fraction(0)
    for part in _set_partitions(list(range(n))):
        k = len(part)
        prod = Fraction((-1) ** (k - 1) * math.factorial(k - 1))
        for block in part:
            sub = MomentSpec(tuple(spec.factors[i] for i in block), spec.component_count)
            prod = prod * limit_moment(sub, c).value
        total += prod
    return total


@dataclass
class IdentityReport:
    rows: list[dict]

    @property
    def all_hold(self) -> bool:
        return all(r["holds"] for r in self.rows)

    def __str__(self):
        return "\n".join(f"{r['name']}: {r['value']} (expected {r['expected']}) "
                         f"{'ok' if r['holds'] else 'FAIL'}" for r in self.rows)


def predict_special_identities(c=1) -> IdentityReport:
    rows = []

    def row(name, value, expected, terms):
        rows.append({"name": name, "value": value, "expected": expected, "holds": value == expected,
                     "terms": terms})

    def m(*f):
        return limit_moment(MomentSpec.of(*f, m=4), c)

    for idx in ("1123", "2311"):
        pred = m(idx, idx)
        row(f"E X4[{idx}]^2", pred.value, 0, pred.pairing_terms)
    a, b = "1234", "2134"
    parts = [m(a, a), m(a, b), m(b, b)]
    row("E (X4[1234] + X4[2134])^2", parts[0].value + 2 * parts[1].value + parts[2].value, 0,
        [t for pr in parts for t in pr.pairing_terms])
    x1212, x1122, x12sq = m("1212"), m("1122"), m("12", "12")
    row("2 E X4[1212] + 4 E X4[1122] - E X2[12]^2", 2 * x1212.value + 4 * x1122.value - x12sq.value, 0,
        x1212.pairing_terms + x1122.pairing_terms + x12sq.pairing_terms)
    row("E X4[1212]", x1212.value, c / 2 if not isinstance(c, int) else Fraction(c, 2), x1212.pairing_terms)
    row("E X4[1122]", x1122.value, 0, x1122.pairing_terms)
    diag = m("11")
    row("E X2[11]", diag.value, 0, diag.pairing_terms)
    return IdentityReport(rows)
