import numpy as np
import pytest
from fractions import Fraction
from hypothesis import given, settings, strategies as st

from bracketlab.experiments import builtin_diagrams, full_class_counts
from bracketlab.graph_calculus import (CHI_LINKED, CYCLE_WITH_TREES, FULL_ORDERED, FULL_UNORDERED, LINE_TREE,
                                       NOT_FULL, TREE, Diagram, DiagramError, DiagramSum, MultipleType3, QuadSpec,
                                       TypeViolation, apply_I, apply_J, chi_step, chi_step_prime,
                                       classify_components, classify_limit_order, detect_parallel,
                                       evaluate_J_numeric, limit_value, random_diagram, reduce_I_infinity,
                                       reduce_J_infinity, select_vertices, validate_diagram)
from bracketlab.kernel_lab import KernelModel
from bracketlab.poset_core import BoundaryValues, build_chain, disjoint_sum

seeds = st.integers(0, 2 ** 32 - 1)


def two_chains(a, b):
    return disjoint_sum([build_chain(a), build_chain(b)])


def test_directed_self_edge_vanishes():
    p = build_chain(2)
    assert Diagram.make(p, ek=[(1, 1)]) is None
    assert Diagram.make(p, echi=[(2, 2)]) is None


def test_undirected_self_edge_rejected():
    with pytest.raises(DiagramError):
        Diagram.make(build_chain(2), gk=[(1, 1)])


def test_active_set_must_keep_boundary():
    with pytest.raises(DiagramError):
        Diagram.make(build_chain(2), active=[1, 2, 3])


def test_local_types():
    p = build_chain(3)
    d = Diagram.make(p, gk=[(1, 3)], ek=[(2, 4)])
    assert validate_diagram(d) == {1: 1, 2: 2, 3: 1}
    d = Diagram.make(p, gk=[(1, 3)], ek=[(2, 3)])
    assert validate_diagram(d)[3] == 3


def test_type_violations():
    p = build_chain(3)
    with pytest.raises(TypeViolation):
        validate_diagram(Diagram.make(p, gk=[(1, 2), (2, 3)]))
    with pytest.raises(TypeViolation):
        validate_diagram(Diagram.make(p, gk=[(1, 3)], ek=[(4, 2)]))
    q = two_chains(3, 3)
    with pytest.raises(MultipleType3):
        validate_diagram(Diagram.make(q, gk=[(1, 6), (3, 8)], ek=[(2, 1), (7, 6)]))


def test_chi_on_incomparable_vertices_rejected():
    q = two_chains(1, 1)
    with pytest.raises(DiagramError):
        validate_diagram(Diagram.make(q, gk=[(1, 4)], gchi=[(1, 4)]))


def test_selected_vertices_prefer_type_three():
    p = build_chain(3)
    d = Diagram.make(p, gk=[(1, 3)], ek=[(2, 3)])
    assert select_vertices(d) == (3, 1)
    d = Diagram.make(p, gk=[(1, 2)], ek=[(3, 4)])
    assert select_vertices(d) == (1, 2)


def test_one_step_of_integration_by_parts():
    p = build_chain(2)
    s = apply_I(Diagram.make(p, gk=[(1, 2)]))
    terms = {(tuple(sorted(d.active)), tuple(sorted(d.ek))): c for d, c in s}
    # the lower term has a directed self-edge (Kbar(0) = 0) and drops out
    assert terms == {((0, 1, 3), ((1, 3),)): 1}
    q = two_chains(2, 2)
    s = apply_J(Diagram.make(q, gk=[(1, 5), (2, 6)]))
    terms = {(tuple(sorted(d.active)), tuple(sorted(d.gk)), tuple(sorted(d.ek))): c for d, c in s}
    assert terms == {((0, 1, 2, 3, 4, 6, 7), ((2, 6),), ((1, 6),)): 1,
                     ((0, 1, 2, 3, 4, 6, 7), ((2, 6),), ((1, 4),)): -1}


def test_component_labels():
    q = two_chains(2, 2)
    d = Diagram.make(q, ek=[(1, 5), (5, 1)])
    assert classify_components(d) == [CYCLE_WITH_TREES]
    d = Diagram.make(q, ek=[(1, 5), (5, 2)])
    assert classify_components(d) == [LINE_TREE]
    d = Diagram.make(q, ek=[(1, 5), (5, 3)])
    assert classify_components(d) == [TREE]


def test_sum_algebra():
    d = Diagram.make(build_chain(2), gk=[(1, 2)])
    s = DiagramSum.of(d, 3)
    assert len(s - s) == 0
    assert (s + s) == s.scale(2)
    # canonical keys identify relabelled copies
    q = two_chains(1, 1)
    a = Diagram.make(q, ek=[(1, 4), (4, 1)])
    assert DiagramSum.of(a) + DiagramSum.of(a) == DiagramSum.of(a, 2)


def test_diagram_json_roundtrip():
    d = builtin_diagrams()["cutoff-third"]
    assert Diagram.from_json(d.to_json()).canonical_key == d.canonical_key


def test_apply_I_refuses_cutoff_edges():
    with pytest.raises(DiagramError):
        apply_I(builtin_diagrams()["cutoff-first"])


@given(seeds)
def test_reduction_removes_every_kernel_edge(seed):
    d = random_diagram(np.random.default_rng(seed), max_interior=6)
    red = reduce_I_infinity(d)
    assert len(red) > 0
    for t, c in red:
        assert not t.gk and c != 0
        validate_diagram(t)
        classify_limit_order(t)
    assert apply_I(red) == red


@given(seeds)
@settings(max_examples=10)
def test_reduction_preserves_the_integral(seed):
    d = random_diagram(np.random.default_rng(seed), max_interior=4)
    m = KernelModel(0.1, 0.5)
    b = BoundaryValues.constant(d.poset, 0.0, 1.0)
    q = QuadSpec(nodes=12)
    lhs = evaluate_J_numeric(d, m, b, q)
    rhs = evaluate_J_numeric(reduce_I_infinity(d), m, b, q)
    assert rhs.value == pytest.approx(lhs.value, rel=1e-4, abs=10 * (lhs.error + rhs.error))


def test_cutoff_reduction_of_the_level_four_graphs():
    g = builtin_diagrams()
    rest = reduce_J_infinity(DiagramSum.of(g["cutoff-second"]) + DiagramSum.of(g["cutoff-third"]))
    assert full_class_counts(rest) == {NOT_FULL: 36}
    first = full_class_counts(reduce_J_infinity(g["cutoff-first"]))
    assert first[CHI_LINKED] == 1
    assert all(k in (CHI_LINKED, NOT_FULL) for k in first)
    assert apply_J(reduce_J_infinity(g["cutoff-first"])) == reduce_J_infinity(g["cutoff-first"])


def test_full_classification():
    q = two_chains(1, 1)
    assert classify_limit_order(Diagram.make(q, ek=[(1, 4), (4, 1)])) == FULL_ORDERED
    q = two_chains(2, 2)
    # two 2-cycles that cross: a1 <-> b2, a2 <-> b1 closes an order cycle
    d = Diagram.make(q, ek=[(1, 6), (6, 1), (2, 5), (5, 2)])
    assert classify_limit_order(d) == FULL_UNORDERED
    assert classify_limit_order(Diagram.make(q, ek=[(1, 5), (5, 1)])) == NOT_FULL


def test_parallel_detection_and_limit_values():
    q = two_chains(2, 2)
    a1, a2, b1, b2 = q.interior
    b = BoundaryValues.constant(q, 0, 1)
    straight = detect_parallel(q, [(a1, b1), (a2, b2)])
    assert straight.parallel and straight.crossed_count == 0
    assert limit_value(q, [(a1, b1), (a2, b2)], b, 1) == 1
    crossed = detect_parallel(q, [(a1, b2), (a2, b1)])
    assert crossed.parallel and crossed.crossed_count == 1
    assert limit_value(q, [(a1, b2), (a2, b1)], b, 1) == -1
    # a vertex paired inside its own chain is never parallel
    assert not detect_parallel(build_chain(2), [(1, 2)]).parallel
    assert limit_value(build_chain(2), [(1, 2)], BoundaryValues.constant(build_chain(2), 0, 1), 1) == 0


def test_limit_value_scales_with_time():
    q = two_chains(2, 2)
    a1, a2, b1, b2 = q.interior
    v = limit_value(q, [(a1, b1), (a2, b2)], BoundaryValues.constant(q, 0, Fraction(3)), 1)
    assert v == 3


def test_parallel_detection_needs_a_perfect_pairing():
    q = two_chains(2, 2)
    with pytest.raises(DiagramError):
        detect_parallel(q, [(1, 5)])


@given(st.floats(-0.5, 1.5))
def test_cutoff_step(t):
    v = float(chi_step(t))
    assert 0.0 <= v <= 1.0
    if t <= 0:
        assert v == 0.0
    if t >= 1:
        assert v == 1.0
    assert float(chi_step(1 - t)) == pytest.approx(1 - v, abs=1e-12)


@given(st.floats(0.02, 0.98))
def test_cutoff_step_derivative(t):
    fd = (float(chi_step(t + 1e-6)) - float(chi_step(t - 1e-6))) / 2e-6
    assert float(chi_step_prime(t)) == pytest.approx(fd, rel=1e-5, abs=1e-8)
