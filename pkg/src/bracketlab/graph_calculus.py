"""Diagram algebra over linear posets: typing, integration by parts, limits.

A diagram is (P-hat, G_K, G_chi, E_K, E_chi) over an ambient poset P.
Undirected edges are stored as sorted pairs, directed edges as (source,
target); a directed edge (e, f) carries Kbar(r_f - r_e).
"""
from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .poset_core import (BoundaryValues, Poset, QuotientResult, build_chain, disjoint_chains, disjoint_sum,
                         polytope_volume, quotient_by_pairs, sample_monotone)

TREE = "TREE"
CYCLE_WITH_TREES = "CYCLE_WITH_TREES"
LINE_TREE = "LINE_TREE"
FULL_ORDERED = "FULL_ORDERED"
FULL_UNORDERED = "FULL_UNORDERED"
NOT_FULL = "NOT_FULL"
CHI_LINKED = "CHI_LINKED"


class DiagramError(ValueError):
    pass


class TypeViolation(DiagramError):
    def __init__(self, vertex, reason=""):
        super().__init__(f"vertex {vertex} has no admissible local type {reason}".strip())
        self.vertex = vertex


class MultipleType3(DiagramError):
    pass


def _pair(a, b):
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class Diagram:
    poset: Poset
    active: frozenset[int]
    gk: frozenset[tuple[int, int]] = frozenset()
    gchi: frozenset[tuple[int, int]] = frozenset()
    ek: frozenset[tuple[int, int]] = frozenset()
    echi: frozenset[tuple[int, int]] = frozenset()

    @classmethod
    def make(cls, poset: Poset, active: Iterable[int] | None = None, gk=(), gchi=(), ek=(), echi=()):
        """Build a diagram; returns None when a directed self-edge makes it vanish."""
        act = frozenset(poset.elements if active is None else active)
        if not (poset.top | poset.bottom) <= act:
            raise DiagramError("active set must contain every top and bottom element")
        ek = frozenset((int(a), int(b)) for a, b in ek)
        echi = frozenset((int(a), int(b)) for a, b in echi)
        if any(a == b for a, b in ek | echi):
            return None
        gk = frozenset(_pair(int(a), int(b)) for a, b in gk)
        gchi = frozenset(_pair(int(a), int(b)) for a, b in gchi if a != b)
        for a, b in itertools.chain(gk, gchi, ek, echi):
            if a not in act or b not in act:
                raise DiagramError(f"edge ({a}, {b}) leaves the active set")
        if any(a == b for a, b in gk):
            raise DiagramError("undirected kernel self-edge")
        return cls(poset, act, gk, gchi, ek, echi)

    def replace(self, **kw):
        data = dict(active=self.active, gk=self.gk, gchi=self.gchi, ek=self.ek, echi=self.echi)
        data.update(kw)
        return Diagram.make(self.poset, **data)

    @cached_property
    def sub(self) -> Poset:
        return self.poset.restrict(self.active)

    @property
    def interior(self) -> tuple[int, ...]:
        return self.sub.interior

    @property
    def has_chi(self) -> bool:
        return bool(self.gchi or self.echi)

    def up(self, v):
        return self.sub.up(v)

    def down(self, v):
        return self.sub.down(v)

    @cached_property
    def canonical_key(self):
        order = self.sub.total_order
        rank = {v: i for i, v in enumerate(order)}
        rel_pair = lambda es: tuple(sorted(_pair(rank[a], rank[b]) for a, b in es))
        rel_dir = lambda es: tuple(sorted((rank[a], rank[b]) for a, b in es))
        boundary = tuple(sorted((rank[v], v) for v in self.sub.bottom | self.sub.top))
        covers = tuple(sorted((rank[a], rank[b]) for a, b in self.sub.covers))
        return (len(order), covers, boundary, rel_pair(self.gk), rel_pair(self.gchi),
                rel_dir(self.ek), rel_dir(self.echi))

    def to_json(self) -> dict:
        return {"poset": self.poset.to_json(), "active": sorted(self.active),
                "gk": sorted(map(list, self.gk)), "gchi": sorted(map(list, self.gchi)),
                "ek": sorted(map(list, self.ek)), "echi": sorted(map(list, self.echi))}

    @classmethod
    def from_json(cls, data: Mapping, poset: Poset | None = None) -> "Diagram":
        p = poset or Poset.from_json(data["poset"])
        d = cls.make(p, data.get("active"), data.get("gk", ()), data.get("gchi", ()),
                     data.get("ek", ()), data.get("echi", ()))
        if d is None:
            raise DiagramError("diagram contains a directed self-edge")
        return d

    def describe(self) -> str:
        missing = sorted(set(self.poset.elements) - self.active)
        parts = [f"drop{missing}" if missing else "full-poset"]
        for name in ("gk", "gchi", "ek", "echi"):
            es = sorted(getattr(self, name))
            if es:
                parts.append(f"{name}={es}")
        return " ".join(parts)


class DiagramSum:
    """Integer combination of diagrams keyed on canonical form."""

    def __init__(self, terms: Iterable[tuple[Diagram | None, int]] = ()):
        self._terms: dict = {}
        for d, c in terms:
            self.add(d, c)

    @classmethod
    def of(cls, d: Diagram, coeff: int = 1) -> "DiagramSum":
        return cls([(d, coeff)])

    def add(self, d: Diagram | None, coeff: int = 1):
        if d is None or coeff == 0:
            return
        key = d.canonical_key
        if key in self._terms:
            rep, c = self._terms[key]
            if tuple(sorted(d.active)) < tuple(sorted(rep.active)):
                rep = d
            c += coeff
            if c == 0:
                del self._terms[key]
            else:
                self._terms[key] = (rep, c)
        else:
            self._terms[key] = (d, coeff)

    def __iter__(self) -> Iterator[tuple[Diagram, int]]:
        for key in sorted(self._terms):
            yield self._terms[key]

    def __len__(self):
        return len(self._terms)

    def __add__(self, other: "DiagramSum") -> "DiagramSum":
        out = DiagramSum(self)
        for d, c in other:
            out.add(d, c)
        return out

    def __sub__(self, other: "DiagramSum") -> "DiagramSum":
        return self + other.scale(-1)

    def scale(self, k: int) -> "DiagramSum":
        return DiagramSum((d, k * c) for d, c in self)

    def __eq__(self, other):
        if not isinstance(other, DiagramSum):
            return NotImplemented
        return {k: c for k, (_, c) in self._terms.items()} == {k: c for k, (_, c) in other._terms.items()}

    def __repr__(self):
        return "DiagramSum(" + ", ".join(f"{c:+d}*[{d.describe()}]" for d, c in self) + ")"


# ---------------------------------------------------------------- typing

def _local_counts(d: Diagram):
    gk_deg, gc_deg = defaultdict(int), defaultdict(int)
    out_k, out_c, in_k, in_c = (defaultdict(int) for _ in range(4))
    for a, b in d.gk:
        gk_deg[a] += 1
        gk_deg[b] += 1
    for a, b in d.gchi:
        gc_deg[a] += 1
        gc_deg[b] += 1
    for a, b in d.ek:
        out_k[a] += 1
        in_k[b] += 1
    for a, b in d.echi:
        out_c[a] += 1
        in_c[b] += 1
    return gk_deg, gc_deg, out_k, out_c, in_k, in_c


def validate_diagram(d: Diagram) -> dict[int, int]:
    """Local type (1, 2 or 3) of each active interior vertex."""
    gk_deg, gc_deg, out_k, out_c, in_k, in_c = _local_counts(d)
    sub = d.sub
    types = {}
    for v in sub.interior:
        n_out = out_k[v] + out_c[v]
        n_in = in_k[v] + in_c[v]
        if gc_deg[v] > 1:
            raise TypeViolation(v, "(two chi edges)")
        if gk_deg[v] == 1 and n_out == 0 and n_in == 0:
            types[v] = 1
        elif n_out == 1 and gk_deg[v] == 0:
            if out_c[v] == 1 and in_k[v] == 0:
                raise TypeViolation(v, "(outgoing chi edge without incoming kernel edge)")
            types[v] = 2
        elif n_in == 1 and n_out == 0 and gk_deg[v] == 1:
            types[v] = 3
        else:
            raise TypeViolation(v)
    for v in sub.bottom | sub.top:
        if out_k[v] or out_c[v] or gk_deg[v]:
            raise TypeViolation(v, "(boundary vertex with outgoing or kernel edge)")
    if sum(1 for t in types.values() if t == 3) > 1:
        raise MultipleType3("more than one vertex of type 3")
    for a, b in d.gchi | d.echi:
        if not sub.comparable(a, b):
            raise DiagramError(f"chi edge ({a}, {b}) joins incomparable vertices")
    gch = [(a, b) if sub.leq(a, b) else (b, a) for a, b in d.gchi]
    for (l1, u1), (l2, u2) in itertools.permutations(gch, 2):
        if sub.leq(u1, u2):
            raise DiagramError("distinct chi cutoff edges are comparable")
    return types


def classify_components(d: Diagram) -> list[str]:
    """Label every connected component of the directed edge set."""
    edges = list(d.ek | d.echi)
    out = {a: b for a, b in edges}
    adj = defaultdict(set)
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen = set()
    labels = []
    interior = set(d.sub.interior)
    for start in sorted(adj):
        if start in seen:
            continue
        comp, stack = set(), [start]
        while stack:
            v = stack.pop()
            if v in comp:
                continue
            comp.add(v)
            stack.extend(adj[v] - comp)
        seen |= comp
        v, visited = min(comp), set()
        while v in out and v not in visited:
            visited.add(v)
            v = out[v]
        if v in visited:
            labels.append(CYCLE_WITH_TREES)
        elif v in interior:
            labels.append(LINE_TREE)
        else:
            labels.append(TREE)
    return labels


# ---------------------------------------------------------------- integration by parts

def select_vertices(d: Diagram) -> tuple[int, int]:
    """(v^*, v_*): the type-3 vertex or the smallest type-1 vertex, and its kernel partner."""
    types = validate_diagram(d)
    rank = d.poset.rank
    t3 = [v for v, t in types.items() if t == 3]
    if t3:
        vstar = t3[0]
    else:
        vstar = min((v for v, t in types.items() if t == 1), key=rank.__getitem__)
    partner = [b if a == vstar else a for a, b in d.gk if vstar in (a, b)]
    return vstar, partner[0]


def _ibp_terms(d: Diagram, with_chi: bool):
    if not d.gk:
        return [(d, 1)]
    vstar, vlow = select_vertices(d)
    up, down = d.up(vlow), d.down(vlow)
    active = d.active - {vlow}
    gk = d.gk - {_pair(vstar, vlow)}
    chi_edge = [e for e in d.gchi if vlow in e]
    if not chi_edge:
        return [(d.replace(active=active, gk=gk, ek=d.ek | {(vstar, up)}), 1),
                (d.replace(active=active, gk=gk, ek=d.ek | {(vstar, down)}), -1)]
    if not with_chi:
        raise DiagramError("cutoff edges present; use apply_J")
    e = chi_edge[0]
    vbar = e[0] if e[1] == vlow else e[1]
    g2 = d.gchi - {e}
    g_up = g2 | ({_pair(up, vbar)} if up != vbar else set())
    g_down = g2 | ({_pair(down, vbar)} if down != vbar else set())
    return [(d.replace(active=active, gk=gk, gchi=g_up, ek=d.ek | {(vstar, up)}), 1),
            (d.replace(active=active, gk=gk, gchi=g_down, ek=d.ek | {(vstar, down)}), -1),
            (d.replace(gk=gk, gchi=g2, ek=d.ek | {(vstar, vlow)}, echi=d.echi | {(vlow, vbar)}), 1)]


def apply_I(s: DiagramSum | Diagram) -> DiagramSum:
    s = DiagramSum.of(s) if isinstance(s, Diagram) else s
    out = DiagramSum()
    for d, c in s:
        if d.has_chi and d.gk:
            raise DiagramError("apply_I takes diagrams without cutoff edges")
        for t, k in _ibp_terms(d, with_chi=False):
            out.add(t, c * k)
    return out


def apply_J(s: DiagramSum | Diagram) -> DiagramSum:
    s = DiagramSum.of(s) if isinstance(s, Diagram) else s
    out = DiagramSum()
    for d, c in s:
        for t, k in _ibp_terms(d, with_chi=True):
            out.add(t, c * k)
    return out


def _reduce(s, op):
    s = DiagramSum.of(s) if isinstance(s, Diagram) else s
    bound = max((len(d.interior) for d, _ in s), default=0) + 1
    for _ in range(bound + 1):
        nxt = op(s)
        if nxt == s:
            return s
        s = nxt
    raise RuntimeError("integration by parts did not stabilise within the iteration bound")


def reduce_I_infinity(s: DiagramSum | Diagram) -> DiagramSum:
    return _reduce(s, apply_I)


def reduce_J_infinity(s: DiagramSum | Diagram) -> DiagramSum:
    return _reduce(s, apply_J)


# ---------------------------------------------------------------- limits

@dataclass
class PairingClassification:
    parallel: bool
    partner_pairing: list[tuple[tuple[int, int], tuple[int, int]]] = field(default_factory=list)
    crossed_count: int = 0
    quotient: QuotientResult | None = None
    full_E: list[tuple[int, int]] = field(default_factory=list)
    e_le_count: int = 0
    merges: list[tuple[int, int]] = field(default_factory=list)


def _check_pairing(p: Poset, pairing) -> list[tuple[int, int]]:
    pairs = [_pair(*e) for e in pairing]
    flat = [v for e in pairs for v in e]
    if sorted(flat) != sorted(p.interior) or len(set(flat)) != len(flat):
        raise DiagramError("not a perfect pairing of the interior")
    return pairs


def detect_parallel(p: Poset, pairing, order: Sequence[int] | None = None) -> PairingClassification:
    """Greedy construction of the partner pairing H.

    `order` overrides the total order used to pick minimal vertices; the
    result does not depend on it when G is parallel.
    """
    if not p.is_linear:
        raise DiagramError("parallel detection needs a linear poset")
    pairs = _check_pairing(p, pairing)
    edge_of = {}
    for e in pairs:
        edge_of[e[0]] = e
        edge_of[e[1]] = e
    rank = {v: i for i, v in enumerate(order or p.total_order)}
    used = set()
    H, crossed = [], 0
    merges = []
    while len(used) < len(pairs):
        free = [v for v in p.interior if edge_of[v] not in used]
        minimal = [v for v in free if not any(w != v and p.leq(w, v) for w in free)]
        v = min(minimal, key=rank.__getitem__)
        e = edge_of[v]
        e1, e2 = v, (e[1] if e[0] == v else e[0])
        f1 = p.up(e1)
        if f1 not in edge_of or edge_of[f1] == e or edge_of[f1] in used:
            return PairingClassification(False)
        f = edge_of[f1]
        f2 = f[1] if f[0] == f1 else f[0]
        nbrs = set(p.immediate_successors(e2)) | set(p.immediate_predecessors(e2))
        if f2 not in nbrs:
            return PairingClassification(False)
        if f2 in p.immediate_predecessors(e2):
            crossed += 1
        used |= {e, f}
        H.append((e, f))
        merges += [(e1, f1), (e2, f2)]
    q = quotient_by_pairs(p, merges)
    full = []
    k = 0
    for i in range(0, len(merges), 2):
        a, b = q.class_of[merges[i][0]], q.class_of[merges[i + 1][0]]
        full += [(a, b), (b, a)]
        if q.ordered and (q.quotient_poset.comparable(a, b)):
            k += 1
    return PairingClassification(True, H, crossed, q, full, k, merges)


def limit_value(p: Poset, pairing, b: BoundaryValues, c):
    """lim J_eps(P, G, empty) for a pairing G of P°.

    Returns (-1)^l 2^-k c^(N/2) |[s,t]_{P-hat_E}| for parallel G and 0
    otherwise.  Exact when c and the boundary values are exact numbers.
    """
    n = len(p.interior)
    if n % 2:
        raise DiagramError("odd interior size")
    cls = detect_parallel(p, pairing)
    if not cls.parallel or not cls.quotient.ordered:
        return 0
    merges = list(cls.merges)
    merges += [(cls.merges[i][0], cls.merges[i + 1][0]) for i in range(0, len(cls.merges), 2)]
    q = quotient_by_pairs(p, merges)
    if not q.ordered:
        return 0
    vol = polytope_volume(q, b, source=p, method="exact")
    return (-1) ** cls.crossed_count * Fraction(1, 2 ** cls.e_le_count) * c ** (len(pairing) // 2) * vol


def classify_limit_order(d: Diagram) -> str:
    if d.gk:
        raise DiagramError("limit classification needs an empty kernel edge set")
    edges = list(d.ek | d.echi)
    interior = set(d.sub.interior)
    out_deg, in_deg = defaultdict(int), defaultdict(int)
    adj = defaultdict(set)
    for a, b in edges:
        out_deg[a] += 1
        in_deg[b] += 1
        adj[a].add(b)
        adj[b].add(a)
    comp_of = {}
    comps = []
    for v in sorted(adj):
        if v in comp_of:
            continue
        comp, stack = set(), [v]
        while stack:
            w = stack.pop()
            if w in comp:
                continue
            comp.add(w)
            stack.extend(adj[w] - comp)
        for w in comp:
            comp_of[w] = len(comps)
        comps.append(comp)
    if any(v not in comp_of for v in interior):
        return NOT_FULL
    for comp in comps:
        if not comp <= interior:
            return NOT_FULL
        if any(out_deg[v] != 1 or in_deg[v] != 1 for v in comp):
            return NOT_FULL
        if sum(1 for a, b in d.ek if a in comp) != 2:
            return NOT_FULL
    for a, b in d.gchi:
        if a in comp_of and b in comp_of and comp_of[a] != comp_of[b]:
            return CHI_LINKED
    q = quotient_by_pairs(d.sub, [(a, b) for a, b in edges])
    return FULL_ORDERED if q.ordered else FULL_UNORDERED


def e_le_count(p: Poset, edges) -> int:
    return sum(1 for a, b in edges if p.leq(a, b))


# ---------------------------------------------------------------- numerical valuation

def chi_step(t):
    """Smooth increasing step with chi(0) = 0 and chi(1) = 1."""
    t = np.asarray(t, dtype=float)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    s = 1.0 - t
    b = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    return a / (a + b)


def chi_step_prime(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 1)
    ti = np.where(inside, t, 0.5)
    a = np.exp(-1.0 / ti)
    b = np.exp(-1.0 / (1 - ti))
    da = a / ti ** 2
    db = -b / (1 - ti) ** 2
    val = (da * (a + b) - a * (da + db)) / (a + b) ** 2
    return np.where(inside, val, 0.0)


def chi_edge_sign(p: Poset, a: int, b: int) -> int:
    """Sign attached to a derivative cutoff edge (a, b).

    Integrating by parts against (1 - chi_delta)(r' - r_vbar) produces
    +chi_delta' when the source lies above the target and -chi_delta'
    otherwise.
    """
    return 1 if p.leq(b, a) else -1


@dataclass
class QuadSpec:
    nodes: int = 24
    check_nodes: int | None = None
    mc_samples: int = 1_000_000
    seed: int = 0
    max_deterministic_dim: int = 6
    chunk: int = 400_000


@dataclass
class NumericResult:
    value: float
    error: float
    method: str


def _integrand_factory(d: Diagram, model, delta, bvals: BoundaryValues):
    sub = d.sub
    const = {}
    for v in sub.bottom:
        const[v] = bvals.lower[v]
    for v in sub.top:
        const[v] = bvals.upper[v]
    col = {v: i for i, v in enumerate(sub.interior)}

    def value(r, v):
        return r[:, col[v]] if v in col else const[v]

    def f(r):
        out = np.ones(r.shape[0])
        for a, b in d.gk:
            out *= model.K(value(r, b) - value(r, a))
        for a, b in d.ek:
            out *= model.Kbar(value(r, b) - value(r, a))
        for a, b in d.gchi:
            lo, hi = (a, b) if sub.leq(a, b) else (b, a)
            out *= 1.0 - chi_step((value(r, hi) - value(r, lo)) / delta)
        for a, b in d.echi:
            lo, hi = (a, b) if sub.leq(a, b) else (b, a)
            out *= chi_edge_sign(sub, a, b) * chi_step_prime((value(r, hi) - value(r, lo)) / delta) / delta
        return out

    return f


def _simplex_rule(n_nodes: int, chains, bvals: BoundaryValues, interior):
    """Tensor Gauss-Legendre over a product of ordered simplices (collapsed coordinates)."""
    x, w = leggauss(n_nodes)
    x = 0.5 * (x + 1)
    w = 0.5 * w
    col = {v: i for i, v in enumerate(interior)}
    dims = sum(len(c) - 2 for c in chains)
    grids = np.stack(np.meshgrid(*([x] * dims), indexing="ij"), -1).reshape(-1, dims) if dims else np.zeros((1, 0))
    weights = np.prod(np.stack(np.meshgrid(*([w] * dims), indexing="ij"), -1).reshape(-1, dims), axis=1) if dims else np.ones(1)
    r = np.empty_like(grids)
    jac = np.ones(len(grids))
    k0 = 0
    for chain in chains:
        inner = chain[1:-1]
        k = len(inner)
        if not k:
            continue
        s, t = bvals.lower[chain[0]], bvals.upper[chain[-1]]
        upper = np.full(len(grids), float(t))
        for j in range(k - 1, -1, -1):
            width = upper - s
            val = s + width * grids[:, k0 + j]
            jac *= width
            r[:, col[inner[j]]] = val
            upper = val
        k0 += k
    return r, weights * jac


def _deterministic(d, f, bvals, n_nodes, chunk):
    chains = disjoint_chains(d.sub)
    if chains is None:
        raise DiagramError("deterministic quadrature needs the active poset to be a union of chains")
    r, w = _simplex_rule(n_nodes, chains, bvals, d.sub.interior)
    total = 0.0
    for i in range(0, len(w), chunk):
        total += float(np.sum(f(r[i:i + chunk]) * w[i:i + chunk]))
    return total


def _evaluate(d: Diagram, model, bvals: BoundaryValues, quad: QuadSpec | None, delta):
    quad = quad or QuadSpec()
    bvals_sub = BoundaryValues({v: bvals.lower[v] for v in d.sub.bottom}, {v: bvals.upper[v] for v in d.sub.top})
    f = _integrand_factory(d, model, delta, bvals_sub)
    dim = len(d.sub.interior)
    if dim == 0:
        return NumericResult(float(f(np.zeros((1, 0)))[0]), 0.0, "exact")
    if dim <= quad.max_deterministic_dim:
        n2 = quad.check_nodes or quad.nodes + max(4, quad.nodes // 3)
        v1 = _deterministic(d, f, bvals_sub, quad.nodes, quad.chunk)
        v2 = _deterministic(d, f, bvals_sub, n2, quad.chunk)
        return NumericResult(v2, abs(v2 - v1), "gauss")
    rng = np.random.default_rng(quad.seed)
    vol = polytope_volume(d.sub, bvals_sub)
    pts = sample_monotone(d.sub, bvals_sub, rng, size=quad.mc_samples)
    vals = f(pts)
    return NumericResult(vol * float(vals.mean()), vol * float(vals.std(ddof=1)) / math.sqrt(len(vals)), "mc")


def evaluate_J_numeric(d: Diagram | DiagramSum, model, b: BoundaryValues, quad: QuadSpec | None = None) -> NumericResult:
    """J_eps(s,t) of a diagram or a sum of diagrams."""
    if isinstance(d, Diagram):
        if d.has_chi:
            raise DiagramError("diagram has cutoff edges; use evaluate_J_eps_delta_numeric")
        return _evaluate(d, model, b, quad, 1.0)
    val, err, methods = 0.0, 0.0, set()
    for t, c in d:
        r = evaluate_J_numeric(t, model, b, quad)
        val += c * r.value
        err += abs(c) * r.error
        methods.add(r.method)
    return NumericResult(val, err, "+".join(sorted(methods)) or "exact")


def evaluate_J_eps_delta_numeric(d: Diagram | DiagramSum, model, delta: float, b: BoundaryValues,
                                 quad: QuadSpec | None = None) -> NumericResult:
    if isinstance(d, Diagram):
        return _evaluate(d, model, b, quad, delta)
    val, err, methods = 0.0, 0.0, set()
    for t, c in d:
        r = _evaluate(t, model, b, quad, delta)
        val += c * r.value
        err += abs(c) * r.error
        methods.add(r.method)
    return NumericResult(val, err, "+".join(sorted(methods)) or "exact")


def random_diagram(rng: np.random.Generator, max_interior: int = 4, min_interior: int = 2,
                   tries: int = 100) -> Diagram:
    """A random valid kernel-edge diagram over a disjoint union of chains.

    The interior size is even and lies in [min_interior, max_interior];
    kernel edges form a perfect matching of the interior (a Gaussian
    pairing).
    """
    for _ in range(tries):
        n = 2 * int(rng.integers(max(min_interior, 2) // 2, max_interior // 2 + 1))
        cuts = sorted(rng.choice(np.arange(1, n), size=int(rng.integers(0, min(2, n - 1) + 1)), replace=False))
        sizes = np.diff([0, *cuts, n])
        p = disjoint_sum([build_chain(int(k)) for k in sizes])
        interior = list(p.interior)
        perm = [int(v) for v in rng.permutation(interior)]
        gk = [(perm[i], perm[i + 1]) for i in range(0, n, 2)]
        d = Diagram.make(p, gk=gk)
        try:
            validate_diagram(d)
        except DiagramError:
            continue
        return d
    raise DiagramError("no valid random diagram found")
