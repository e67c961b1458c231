from fractions import Fraction

import pytest
import sympy as sp
from hypothesis import assume, given, settings, strategies as st

from bracketlab.moment_engine import (Factor, MomentSpec, SpecError, cumulant_by_moments, enumerate_pairings,
                                      limit_cumulant, limit_moment, predict_special_identities)

c = sp.Symbol("c", positive=True)

words = st.lists(st.integers(1, 3), min_size=1, max_size=4).map(lambda w: "".join(map(str, w)))
specs = st.lists(words, min_size=1, max_size=3).filter(lambda ws: sum(map(len, ws)) <= 8)


def value(*factors, **kw):
    return sp.simplify(limit_moment(MomentSpec.of(*factors, m=3, **kw), c).value)


def test_level_two_covariances():
    assert value("12", "12") == c
    assert value("12", "21") == -c
    assert value("12", "13") == 0
    assert value("11", "11") == 0
    spec = MomentSpec.of(((1, 2), (0, 1)), ((1, 2), (Fraction(1, 2), 2)))
    assert sp.simplify(limit_moment(spec, c).value - c / 2) == 0


def test_level_four_values():
    assert value("1212") == c / 2
    assert value("1122") == 0
    assert value("1221") == -c / 2
    assert value("2121") == c / 2


def test_level_two_fourth_moment_is_gaussian():
    assert value("12", "12", "12", "12") == 3 * c ** 2
    assert value("12", "21", "12", "21") == 3 * c ** 2


def test_special_identities_hold():
    rep = predict_special_identities()
    assert rep.all_hold, str(rep)
    assert predict_special_identities(c).all_hold


def test_fourth_cumulants_vanish():
    for f in (("12", "12", "12", "12"), ("12", "21", "12", "21"), ("12", "13", "12", "13")):
        assert limit_cumulant(f, c) == 0
        assert cumulant_by_moments(MomentSpec.of(*f), c) == 0


def test_pairing_count():
    assert len(enumerate_pairings(MomentSpec.of("12", "12"))) == 1
    assert len(enumerate_pairings(MomentSpec.of("11", "11"))) == 3


def test_spec_validation():
    with pytest.raises(SpecError):
        Factor(5, (1, 2, 3, 4, 1))
    with pytest.raises(SpecError):
        Factor(2, (1,))
    with pytest.raises(SpecError):
        Factor(2, (1, 2), (1, 0))
    with pytest.raises(SpecError):
        MomentSpec((Factor(2, (1, 3)),), 2)
    with pytest.raises(SpecError):
        limit_moment(MomentSpec.of("1234", "1234", "1234", "1234", "1"))


def test_json_roundtrip():
    s = MomentSpec.of("12", ((2, 1, 2), (0, Fraction(1, 3))), m=3)
    assert MomentSpec.from_json(s.to_json()) == s


@given(specs)
@settings(max_examples=60)
def test_parallel_walk_matches_exhaustive_walk(ws):
    s = MomentSpec.of(*ws, m=3)
    assert limit_moment(s, 1, "parallel").value == limit_moment(s, 1, "exhaustive").value


@given(specs)
def test_odd_total_size_vanishes(ws):
    s = MomentSpec.of(*ws, m=3)
    assume(s.size % 2 == 1)
    assert limit_moment(s, 1).value == 0


@given(specs, st.permutations([1, 2, 3]))
def test_relabelling_indices_is_harmless(ws, perm):
    s = MomentSpec.of(*ws, m=3)
    relabel = dict(zip([1, 2, 3], perm))
    assert limit_moment(s.relabel(relabel), 1).value == limit_moment(s, 1).value


@given(specs, st.fractions(-3, 3))
def test_stationarity(ws, h):
    s = MomentSpec.of(*ws, m=3)
    assert limit_moment(s.shift(h), 1).value == limit_moment(s, 1).value


@given(specs)
def test_time_scaling(ws):
    s1 = MomentSpec.of(*ws, m=3)
    s2 = MomentSpec.of(*ws, m=3, interval=(0, 2))
    v1, v2 = limit_moment(s1, 1).value, limit_moment(s2, 1).value
    if s1.size % 4:
        assert v1 == 0 and v2 == 0
    else:
        assert v2 == 2 ** (s1.size // 4) * v1


@given(st.lists(words, min_size=2, max_size=3).filter(lambda ws: sum(map(len, ws)) <= 8))
@settings(max_examples=30)
def test_connected_sum_matches_moebius_cumulant(ws):
    s = MomentSpec.of(*ws, m=3)
    assert limit_cumulant(s, 1) == cumulant_by_moments(s, 1)


def test_parallel_workers_do_not_change_the_result():
    s = MomentSpec.of("12", "21", "12", "21")
    assert limit_moment(s, 1, "exhaustive", workers=2).value == limit_moment(s, 1, "exhaustive").value
