import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bracketlab.poset_core import (UNORDERED, BoundaryValues, Poset, PosetError, build_chain, disjoint_chains,
                                   disjoint_sum, linear_extensions_count, polytope_volume, quotient_by_pairs,
                                   sample_monotone)


def brute_extensions(p, items):
    items = list(items)
    return sum(1 for perm in itertools.permutations(items)
               if all(perm.index(a) < perm.index(b) for a in items for b in items if a != b and p.leq(a, b)))


@st.composite
def small_dags(draw, max_n=6):
    n = draw(st.integers(1, max_n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    covers = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs))) if pairs else []
    return Poset.make(range(n), covers, (), ())


@st.composite
def chain_sums(draw, max_chains=3, max_len=3):
    sizes = draw(st.lists(st.integers(0, max_len), min_size=1, max_size=max_chains))
    return disjoint_sum([build_chain(k) for k in sizes])


def test_chain_layout():
    p = build_chain(3)
    assert p.elements == (0, 1, 2, 3, 4)
    assert p.bottom == {0} and p.top == {4}
    assert p.interior == (1, 2, 3)
    assert p.leq(0, 4) and not p.leq(3, 1)
    assert p.is_linear


def test_n_poset_has_five_extensions():
    p = Poset.make(range(4), [(0, 2), (1, 2), (1, 3)], (), ())
    assert linear_extensions_count(p, range(4)) == 5


def test_cycle_rejected():
    with pytest.raises(PosetError):
        Poset.make(range(3), [(0, 1), (1, 2), (2, 0)], (), ()).leq(0, 1)


def test_unknown_cover_rejected():
    with pytest.raises(PosetError):
        Poset.make(range(2), [(0, 5)], (), ())


def test_non_minimal_bottom_rejected():
    with pytest.raises(PosetError):
        Poset.make(range(3), [(0, 1), (1, 2)], (1,), (2,))


def test_extension_cap():
    p = disjoint_sum([build_chain(0)] * 7)
    with pytest.raises(PosetError):
        linear_extensions_count(p, p.elements)


@given(small_dags())
def test_extension_count_matches_brute_force(p):
    assert linear_extensions_count(p, p.elements) == brute_extensions(p, p.elements)


@given(small_dags())
def test_closure_is_transitive(p):
    for a, b, c in itertools.product(p.elements, repeat=3):
        if p.leq(a, b) and p.leq(b, c):
            assert p.leq(a, c)


@given(chain_sums())
def test_json_roundtrip(p):
    assert Poset.from_json(p.to_json()) == p


@given(chain_sums(), st.fractions(-2, 2), st.fractions(Fraction(1, 10), 3))
def test_constant_volume_closed_form(p, s, width):
    n = len(p.interior)
    b = BoundaryValues.constant(p, s, s + width)
    expected = width ** n * Fraction(linear_extensions_count(p), math.factorial(n))
    assert polytope_volume(p, b) == expected
    # a chain sum splits into independent simplices
    prod = Fraction(1)
    for c in disjoint_chains(p):
        k = len(c) - 2
        prod *= width ** k / math.factorial(k)
    assert expected == prod


@given(chain_sums(max_chains=2, max_len=3),
       st.lists(st.fractions(0, 1), min_size=4, max_size=4))
def test_cell_volume_of_chain_sum_is_product_of_simplices(p, vals):
    chains = disjoint_chains(p)
    lower, upper = {}, {}
    expected = Fraction(1)
    for c, (a, b) in zip(chains, [sorted(vals[:2]), sorted(vals[2:])]):
        lower[c[0]], upper[c[-1]] = a, b
        k = len(c) - 2
        expected *= (b - a) ** k / math.factorial(k)
    vol = polytope_volume(p, BoundaryValues(lower, upper), method="exact")
    assert vol == expected


@given(chain_sums(max_chains=2, max_len=3), st.fractions(-1, 1), st.fractions(Fraction(1, 2), 2))
def test_volume_is_translation_invariant_and_homogeneous(p, shift, scale):
    rng = np.random.default_rng(0)
    lower = {b: Fraction(int(rng.integers(0, 3)), 4) for b in p.bottom}
    upper = {t: Fraction(int(rng.integers(4, 8)), 4) for t in p.top}
    base = polytope_volume(p, BoundaryValues(lower, upper), method="exact")
    moved = polytope_volume(p, BoundaryValues({k: scale * v + shift for k, v in lower.items()},
                                              {k: scale * v + shift for k, v in upper.items()}), method="exact")
    assert moved == scale ** len(p.interior) * base


def test_exact_volume_against_mc_on_a_non_chain_poset():
    # two chains joined in the middle: 0 < 1 < 3 < 4 and 2 < 1 ... a V shape with bottoms 0, 5
    p = Poset.make(range(6), [(0, 1), (5, 2), (1, 3), (2, 3), (3, 4)], (0, 5), (4,))
    b = BoundaryValues({0: 0.0, 5: 0.25}, {4: 1.0})
    exact = float(polytope_volume(p, b, method="exact"))
    mc, err = polytope_volume(p, b, samples=400_000, method="mc", rng=np.random.default_rng(1), return_error=True)
    assert abs(exact - mc) < 4 * err


def test_unordered_quotient_has_zero_volume():
    p = disjoint_sum([build_chain(2), build_chain(2)])
    a1, a2, b1, b2 = p.interior
    q = quotient_by_pairs(p, [(a1, b2), (a2, b1)])
    assert q.quotient_poset == UNORDERED
    assert polytope_volume(q, BoundaryValues.constant(p, 0, 1), source=p) == 0


def test_quotient_counts_comparable_merges():
    p = disjoint_sum([build_chain(2), build_chain(2)])
    a1, a2, b1, b2 = p.interior
    q = quotient_by_pairs(p, [(a1, a2), (b1, b2)])
    assert q.ordered and q.e_le_count == 2
    q = quotient_by_pairs(p, [(a1, b1), (a2, b2)])
    assert q.ordered and q.e_le_count == 0
    # merged chains become one chain of length 2 between the shared boundary values
    assert polytope_volume(q, BoundaryValues.constant(p, 0, 1), source=p) == Fraction(1, 2)


def test_quotient_rejects_boundary_merge():
    p = build_chain(2)
    with pytest.raises(PosetError):
        quotient_by_pairs(p, [(0, 1)])


@given(chain_sums(max_chains=3, max_len=3), st.integers(0, 2 ** 32 - 1))
def test_samples_are_monotone_and_in_range(p, seed):
    lower = {b: 0.1 * i for i, b in enumerate(sorted(p.bottom))}
    upper = {t: 1.0 + 0.1 * i for i, t in enumerate(sorted(p.top))}
    b = BoundaryValues(lower, upper)
    pts = sample_monotone(p, b, np.random.default_rng(seed), size=50)
    col = {v: i for i, v in enumerate(p.interior)}
    for lo, hi in p.covers:
        a = pts[:, col[lo]] if lo in col else lower.get(lo, upper.get(lo))
        c = pts[:, col[hi]] if hi in col else upper.get(hi, lower.get(hi))
        assert np.all(a <= c)


def test_rejection_sampler_on_non_chain_poset():
    p = Poset.make(range(6), [(0, 1), (5, 2), (1, 3), (2, 3), (3, 4)], (0, 5), (4,))
    b = BoundaryValues({0: 0.0, 5: 0.25}, {4: 1.0})
    pts = sample_monotone(p, b, np.random.default_rng(0), size=500)
    col = {v: i for i, v in enumerate(p.interior)}
    assert np.all(pts[:, col[1]] <= pts[:, col[3]]) and np.all(pts[:, col[2]] >= 0.25)


def test_boundary_check():
    p = build_chain(1)
    with pytest.raises(PosetError):
        BoundaryValues({0: 1.0}, {2: 0.0}).check(p)
    with pytest.raises(PosetError):
        BoundaryValues({}, {2: 0.0}).check(p)
