"""Finite posets, monotone-assignment domains and order-polytope volumes.

Elements are dense integer ids.  A poset is stored through its cover
relation; the transitive closure is computed once at construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

UNORDERED = "UNORDERED"
MAX_EXTENSION_SIZE = 12


class PosetError(ValueError):
    pass


@dataclass(frozen=True)
class Poset:
    elements: tuple[int, ...]
    covers: frozenset[tuple[int, int]]
    bottom: frozenset[int]
    top: frozenset[int]

    def __post_init__(self):
        elems = set(self.elements)
        if len(elems) != len(self.elements):
            raise PosetError("duplicate element ids")
        for lo, hi in self.covers:
            if lo not in elems or hi not in elems:
                raise PosetError(f"cover ({lo}, {hi}) references unknown element")
            if lo == hi:
                raise PosetError(f"self cover on {lo}")
        # touching the closure validates acyclicity
        for v in self.bottom:
            if self.below(v) - {v}:
                raise PosetError(f"bottom element {v} is not minimal")
        for v in self.top:
            if self.above(v) - {v}:
                raise PosetError(f"top element {v} is not maximal")

    @classmethod
    def make(cls, elements: Iterable[int], covers: Iterable[Sequence[int]],
             bottom: Iterable[int], top: Iterable[int]) -> "Poset":
        return cls(tuple(sorted(elements)), frozenset((int(a), int(b)) for a, b in covers),
                   frozenset(bottom), frozenset(top))

    @cached_property
    def _up_sets(self) -> dict[int, frozenset[int]]:
        succ: dict[int, list[int]] = {v: [] for v in self.elements}
        indeg = {v: 0 for v in self.elements}
        for lo, hi in self.covers:
            succ[lo].append(hi)
            indeg[hi] += 1
        order = []
        ready = sorted(v for v in self.elements if indeg[v] == 0)
        while ready:
            v = ready.pop(0)
            order.append(v)
            for w in succ[v]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    ready.append(w)
            ready.sort()
        if len(order) != len(self.elements):
            raise PosetError("cover relation has a cycle")
        ups: dict[int, frozenset[int]] = {}
        for v in reversed(order):
            acc = {v}
            for w in succ[v]:
                acc |= ups[w]
            ups[v] = frozenset(acc)
        return ups

    @cached_property
    def _down_sets(self) -> dict[int, frozenset[int]]:
        downs: dict[int, set[int]] = {v: set() for v in self.elements}
        for v, ups in self._up_sets.items():
            for w in ups:
                downs[w].add(v)
        return {v: frozenset(s) for v, s in downs.items()}

    def leq(self, a: int, b: int) -> bool:
        return b in self._up_sets[a]

    def comparable(self, a: int, b: int) -> bool:
        return self.leq(a, b) or self.leq(b, a)

    def above(self, v: int) -> frozenset[int]:
        return self._up_sets[v]

    def below(self, v: int) -> frozenset[int]:
        return self._down_sets[v]

    @cached_property
    def interior(self) -> tuple[int, ...]:
        return tuple(v for v in self.elements if v not in self.top and v not in self.bottom)

    @cached_property
    def total_order(self) -> tuple[int, ...]:
        """Topological order, ties broken by smallest id."""
        remaining = set(self.elements)
        order = []
        while remaining:
            v = min(w for w in remaining if not (self._down_sets[w] - {w}) & remaining)
            order.append(v)
            remaining.discard(v)
        return tuple(order)

    @cached_property
    def rank(self) -> dict[int, int]:
        return {v: i for i, v in enumerate(self.total_order)}

    def immediate_successors(self, v: int) -> list[int]:
        return sorted(hi for lo, hi in self.covers if lo == v)

    def immediate_predecessors(self, v: int) -> list[int]:
        return sorted(lo for lo, hi in self.covers if hi == v)

    @cached_property
    def is_linear(self) -> bool:
        return all(len(self.immediate_successors(v)) == 1 and len(self.immediate_predecessors(v)) == 1
                   for v in self.interior)

    def up(self, v: int) -> int:
        s = self.immediate_successors(v)
        if len(s) != 1:
            raise PosetError(f"{v} has no unique successor")
        return s[0]

    def down(self, v: int) -> int:
        s = self.immediate_predecessors(v)
        if len(s) != 1:
            raise PosetError(f"{v} has no unique predecessor")
        return s[0]

    def restrict(self, keep: Iterable[int]) -> "Poset":
        """Induced sub-poset on `keep`; covers recomputed from the closure."""
        keep = sorted(set(keep))
        ks = set(keep)
        covers = set()
        for a in keep:
            strictly = [b for b in self._up_sets[a] if b in ks and b != a]
            for b in strictly:
                if not any(c != b and c in ks and self.leq(c, b) for c in strictly):
                    covers.add((a, b))
        return Poset(tuple(keep), frozenset(covers), frozenset(self.bottom & ks), frozenset(self.top & ks))

    def chains(self) -> list[list[int]]:
        """For a linear poset made of disjoint chains: each chain bottom-to-top."""
        out = []
        for b in sorted(self.bottom):
            chain = [b]
            v = b
            while v not in self.top:
                v = self.up(v)
                chain.append(v)
            out.append(chain)
        return out

    def to_json(self) -> dict:
        return {"elements": list(self.elements), "covers": sorted([list(c) for c in self.covers]),
                "bottom": sorted(self.bottom), "top": sorted(self.top)}

    @classmethod
    def from_json(cls, data: Mapping) -> "Poset":
        return cls.make(data["elements"], data["covers"], data["bottom"], data["top"])


@dataclass(frozen=True)
class BoundaryValues:
    lower: Mapping[int, float]
    upper: Mapping[int, float]

    def check(self, p: Poset) -> None:
        if set(self.lower) != set(p.bottom) or set(self.upper) != set(p.top):
            raise PosetError("boundary values must cover exactly the bottom and top elements")
        for b, sv in self.lower.items():
            for t, tv in self.upper.items():
                if p.leq(b, t) and sv > tv:
                    raise PosetError(f"lower value at {b} exceeds upper value at {t}")

    def bounds(self, p: Poset, v: int) -> tuple[float, float]:
        lo = max((s for b, s in self.lower.items() if p.leq(b, v)), default=-math.inf)
        hi = min((t for b, t in self.upper.items() if p.leq(v, b)), default=math.inf)
        return lo, hi

    def constant_pair(self) -> tuple[float, float] | None:
        lows, highs = set(self.lower.values()), set(self.upper.values())
        if len(lows) == 1 and len(highs) == 1:
            return lows.pop(), highs.pop()
        return None

    def to_json(self) -> dict:
        return {"lower": {str(k): v for k, v in self.lower.items()},
                "upper": {str(k): v for k, v in self.upper.items()}}

    @classmethod
    def from_json(cls, data: Mapping) -> "BoundaryValues":
        return cls({int(k): float(v) for k, v in data["lower"].items()},
                   {int(k): float(v) for k, v in data["upper"].items()})

    @classmethod
    def constant(cls, p: Poset, s: float, t: float) -> "BoundaryValues":
        return cls({b: s for b in p.bottom}, {v: t for v in p.top})


@dataclass(frozen=True)
class QuotientResult:
    classes: tuple[tuple[int, ...], ...]
    quotient_poset: Poset | str
    e_le_count: int
    class_of: Mapping[int, int] = field(default_factory=dict)

    @property
    def ordered(self) -> bool:
        return self.quotient_poset != UNORDERED


def build_chain(k: int) -> Poset:
    if k < 0:
        raise PosetError("chain length must be non-negative")
    n = k + 2
    return Poset(tuple(range(n)), frozenset((i, i + 1) for i in range(n - 1)),
                 frozenset({0}), frozenset({n - 1}))


def disjoint_sum(parts: Sequence[Poset]) -> Poset:
    if not parts:
        raise PosetError("disjoint sum of nothing")
    elements, covers, bottom, top = [], set(), set(), set()
    offset = 0
    for p in parts:
        relabel = {v: offset + i for i, v in enumerate(p.elements)}
        elements += relabel.values()
        covers |= {(relabel[a], relabel[b]) for a, b in p.covers}
        bottom |= {relabel[v] for v in p.bottom}
        top |= {relabel[v] for v in p.top}
        offset += len(p.elements)
    return Poset(tuple(elements), frozenset(covers), frozenset(bottom), frozenset(top))


def quotient_by_pairs(p: Poset, merges: Sequence[Sequence[int]]) -> QuotientResult:
    """Quotient by the finest equivalence with a ~ b for every merged pair.

    Each merged pair stands for a directed two-cycle, so it contributes one
    element to E^<= exactly when its endpoints are comparable.
    """
    parent = {v: v for v in p.elements}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    k = 0
    for a, b in merges:
        if a not in p.interior or b not in p.interior:
            raise PosetError(f"merge ({a}, {b}) touches a non-interior element")
        if p.comparable(a, b):
            k += 1
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for v in p.elements:
        groups.setdefault(find(v), []).append(v)
    classes = tuple(tuple(sorted(g)) for _, g in sorted(groups.items()))
    class_of = {v: i for i, g in enumerate(classes) for v in g}
    n = len(classes)
    reach = np.zeros((n, n), dtype=bool)
    for i, g in enumerate(classes):
        for v in g:
            for w in p.above(v):
                reach[i, class_of[w]] = True
    for m in range(n):  # Warshall closure on classes
        reach |= reach[:, [m]] & reach[[m], :]
    if np.any(reach & reach.T & ~np.eye(n, dtype=bool)):
        return QuotientResult(classes, UNORDERED, k, class_of)
    covers = set()
    for i in range(n):
        for j in range(n):
            if i != j and reach[i, j] and not any(
                    m not in (i, j) and reach[i, m] and reach[m, j] for m in range(n)):
                covers.add((i, j))
    bottom = {class_of[v] for v in p.bottom}
    top = {class_of[v] for v in p.top}
    q = Poset(tuple(range(n)), frozenset(covers), frozenset(bottom), frozenset(top))
    return QuotientResult(classes, q, k, class_of)


def linear_extensions_count(p: Poset, subset: Iterable[int] | None = None) -> int:
    """Number of linear extensions of the interior (or of `subset`), by DP over down-sets."""
    items = list(p.interior if subset is None else subset)
    n = len(items)
    if n > MAX_EXTENSION_SIZE:
        raise PosetError(f"linear extension count capped at {MAX_EXTENSION_SIZE} elements, got {n}")
    idx = {v: i for i, v in enumerate(items)}
    pred_mask = [0] * n
    for v in items:
        for w in p.below(v):
            if w != v and w in idx:
                pred_mask[idx[v]] |= 1 << idx[w]
    ways = [0] * (1 << n)
    ways[0] = 1
    for mask in range(1 << n):
        if not ways[mask]:
            continue
        for i in range(n):
            if not mask >> i & 1 and pred_mask[i] & mask == pred_mask[i]:
                ways[mask | 1 << i] += ways[mask]
    return ways[(1 << n) - 1]


def _quotient_bounds(q: QuotientResult, p: Poset, b: BoundaryValues) -> tuple[Poset, BoundaryValues]:
    """Boundary values transported to the quotient; a class may carry several."""
    qp = q.quotient_poset
    lower = {}
    upper = {}
    for v, val in b.lower.items():
        c = q.class_of[v]
        lower[c] = max(lower.get(c, -math.inf), val)
    for v, val in b.upper.items():
        c = q.class_of[v]
        upper[c] = min(upper.get(c, math.inf), val)
    return qp, BoundaryValues(lower, upper)


def polytope_volume(p: Poset | QuotientResult, b: BoundaryValues, samples: int = 100_000,
                    rng: np.random.Generator | None = None, source: Poset | None = None,
                    method: str = "auto", return_error: bool = False):
    """Lebesgue volume of [s,t]_P.

    Accepts a poset or a quotient (pass the pre-quotient poset as `source`
    so that boundary values can be transported).  Constant boundaries use
    T^n e(P)/n!.  Other boundaries use an exact cell decomposition for small
    interiors (method "auto"/"exact") or Monte Carlo with standard error
    (method "mc").
    """
    if isinstance(p, QuotientResult):
        if not p.ordered:
            return (0.0, 0.0) if return_error else 0.0
        if source is None:
            raise PosetError("quotient volume needs the source poset")
        p, b = _quotient_bounds(p, source, b)
    n = len(p.interior)
    const = b.constant_pair()
    if method != "mc" and const is not None and _all_interior_bounded(p):
        s, t = const
        if t <= s:
            vol = 0 if n else 1
        else:
            vol = (t - s) ** n * Fraction(linear_extensions_count(p), math.factorial(n))
        return (vol, 0.0) if return_error else vol
    if method == "exact" or (method == "auto" and n <= 8):
        vol = _cell_volume(p, b)
        return (vol, 0.0) if return_error else vol
    vol, err = _mc_volume(p, b, samples, rng or np.random.default_rng(0))
    return (vol, err) if return_error else vol


def _cell_volume(p: Poset, b: BoundaryValues) -> float:
    """Exact volume with arbitrary boundary values.

    The line is cut at every boundary value.  Each monotone point assigns
    interior elements to cells weakly increasingly along the order; inside a
    cell only the relative order matters, giving len^k e(cell)/k! per cell.
    """
    items = list(p.interior)
    if not items:
        return 1
    _box(p, b)
    lo, hi = zip(*(b.bounds(p, v) for v in items))
    if any(h < l for l, h in zip(lo, hi)):
        return 0
    cuts = sorted(set(b.lower.values()) | set(b.upper.values()))
    cells = [(cuts[j], cuts[j + 1]) for j in range(len(cuts) - 1)]
    allowed = [[j for j, (a, c) in enumerate(cells) if a >= lo[i] and c <= hi[i]] for i in range(len(items))]
    order = sorted(range(len(items)), key=lambda i: p.rank[items[i]])
    preds = {i: [j for j in range(len(items)) if j != i and p.leq(items[j], items[i])] for i in range(len(items))}
    assign = {}
    total = 0

    def recurse(pos):
        nonlocal total
        if pos == len(order):
            term = 1
            for j, (a, c) in enumerate(cells):
                members = [items[i] for i in assign if assign[i] == j]
                if members:
                    k = len(members)
                    term *= (c - a) ** k * Fraction(linear_extensions_count(p, members), math.factorial(k))
            total += term
            return
        i = order[pos]
        floor = max((assign[j] for j in preds[i]), default=0)
        for j in allowed[i]:
            if j >= floor:
                assign[i] = j
                recurse(pos + 1)
                del assign[i]

    recurse(0)
    return total


def _all_interior_bounded(p: Poset) -> bool:
    return all((p.below(v) & p.bottom) and (p.above(v) & p.top) for v in p.interior)


def _box(p: Poset, b: BoundaryValues):
    lo = np.empty(len(p.interior))
    hi = np.empty(len(p.interior))
    for i, v in enumerate(p.interior):
        lo[i], hi[i] = b.bounds(p, v)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise PosetError("unbounded domain")
    return lo, hi


def _monotone_mask(p: Poset, b: BoundaryValues, pts: np.ndarray) -> np.ndarray:
    ok = np.ones(len(pts), dtype=bool)
    col = {v: i for i, v in enumerate(p.interior)}
    for lo, hi in p.covers:
        if lo in col and hi in col:
            ok &= pts[:, col[lo]] <= pts[:, col[hi]]
    return ok


def _mc_volume(p: Poset, b: BoundaryValues, samples: int, rng: np.random.Generator):
    n = len(p.interior)
    if n == 0:
        return 1.0, 0.0
    lo, hi = _box(p, b)
    if np.any(hi < lo):
        return 0.0, 0.0
    box = float(np.prod(hi - lo))
    pts = lo + (hi - lo) * rng.random((samples, n))
    hit = _monotone_mask(p, b, pts).astype(float)
    return box * hit.mean(), box * hit.std(ddof=1) / math.sqrt(samples)


def sample_monotone(p: Poset, b: BoundaryValues, rng: np.random.Generator,
                    size: int | None = None, max_tries: int = 10_000) -> dict[int, float] | np.ndarray:
    """Uniform point(s) of [s,t]_P.

    Chains with constant ends use sorted uniforms.  Otherwise rejection from
    the bounding box in batches.  With `size` an array (size, |P°|) is
    returned, columns ordered as `p.interior`.
    """
    n = len(p.interior)
    count = 1 if size is None else size
    if n == 0:
        return {} if size is None else np.zeros((count, 0))
    out = _sample_chains(p, b, rng, count)
    if out is None:
        lo, hi = _box(p, b)
        if np.any(hi < lo):
            raise PosetError("empty domain")
        got = []
        have = 0
        for _ in range(max_tries):
            batch = max(64, 2 * (count - have))
            pts = lo + (hi - lo) * rng.random((batch, n))
            pts = pts[_monotone_mask(p, b, pts)]
            got.append(pts)
            have += len(pts)
            if have >= count:
                break
        else:
            raise PosetError("rejection sampler failed; domain is empty or tiny")
        out = np.concatenate(got)[:count]
    if size is None:
        return {v: float(out[0, i]) for i, v in enumerate(p.interior)}
    return out


def disjoint_chains(p: Poset) -> list[list[int]] | None:
    """Chains bottom-to-top if P is a disjoint union of chains, else None."""
    if not p.is_linear:
        return None
    try:
        chains = p.chains()
    except PosetError:
        return None
    seen = [v for c in chains for v in c]
    if len(seen) != len(set(seen)) or set(seen) != set(p.elements):
        return None
    return chains


def _sample_chains(p: Poset, b: BoundaryValues, rng, count):
    """Exact sampler when P is a disjoint union of chains: sorted uniforms per chain."""
    chains = disjoint_chains(p)
    if chains is None:
        return None
    col = {v: i for i, v in enumerate(p.interior)}
    out = np.empty((count, len(p.interior)))
    for chain in chains:
        s, t = b.lower[chain[0]], b.upper[chain[-1]]
        if t < s:
            raise PosetError("empty domain")
        inner = chain[1:-1]
        u = np.sort(rng.random((count, len(inner))), axis=1)
        for j, v in enumerate(inner):
            out[:, col[v]] = s + (t - s) * u[:, j]
    return out
