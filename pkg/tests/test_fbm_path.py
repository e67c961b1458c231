import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bracketlab.fbm_path import (Grid, GridError, MCConfig, WordSeries, _chunk_drivers, batch_means, chen_compose,
                                 constant_driver, driver_from_path, fgn_autocovariance, increment_variance,
                                 iterated_integrals, lift, mc_collect, mc_moment, mollify, sample_fbm,
                                 word_integrals, words_of_level)
from bracketlab.kernel_lab import KernelModel
from bracketlab.moment_engine import MomentSpec

seeds = st.integers(0, 2 ** 32 - 1)


def random_driver(seed, m=2, n=64):
    rng = np.random.default_rng(seed)
    g = Grid(0.0, 1.0, 1.0 / n)
    vals = np.concatenate([np.zeros((m, 1)), np.cumsum(rng.standard_normal((m, n)) / math.sqrt(n), axis=1)], axis=1)
    return driver_from_path(g, vals)


def test_grid_validation():
    with pytest.raises(GridError):
        Grid(0.0, 1.0, 0.3)
    g = Grid.dyadic(-0.125, 1.125, 4)
    assert g.n == 20 and g.index(0.0) == 2
    with pytest.raises(GridError):
        g.index(0.01)
    with pytest.raises(GridError):
        g.index(2.0)


def test_fgn_autocovariance_sums_to_the_fbm_variance():
    H, n, h = 0.1, 64, 1 / 64
    g = fgn_autocovariance(H, n, h)
    cov = np.array([[g[abs(i - j)] for j in range(n)] for i in range(n)])
    assert cov.sum() == pytest.approx((n * h) ** (2 * H), rel=1e-12)


def test_fbm_variance_matches_the_power_law():
    g = Grid.dyadic(0.0, 1.0, 8)
    p = sample_fbm(0.1, g, 1, seed=1, samples=4000)
    v = p.values[:, 0, [g.index(0.25), g.index(1.0)]].var(axis=0, ddof=1)
    se = v * math.sqrt(2 / 3999)
    assert abs(v[0] - 0.25 ** 0.2) < 4 * se[0]
    assert abs(v[1] - 1.0) < 4 * se[1]


def test_samples_do_not_depend_on_their_batch():
    g = Grid.dyadic(-0.125, 1.125, 8)
    many = sample_fbm(0.1, g, 2, seed=4, samples=6)
    one = sample_fbm(0.1, g, 2, seed=4, samples=[3])
    assert np.array_equal(many.values[3], one.values[0])


def test_two_sided_path_is_pinned_at_zero():
    g = Grid.dyadic(-0.125, 1.125, 8)
    p = sample_fbm(0.1, g, 2, seed=0, samples=3)
    assert np.all(p.values[..., g.index(0.0)] == 0)


def test_mollify_refuses_unresolved_eps():
    g = Grid.dyadic(-0.125, 1.125, 8)
    p = sample_fbm(0.1, g, 1, seed=0, samples=2)
    with pytest.raises(GridError):
        mollify(p, 0.01)


def test_driver_window_checks_the_valid_range():
    cfg = MCConfig(0.1, 0.05, m=1, grid_log2=10, t0=-0.125, t1=1.125, samples=2)
    d = _chunk_drivers(cfg, [0, 1], (0.0, 1.0))
    d.window(0.0, 1.0)
    with pytest.raises(GridError):
        d.window(-0.125, 1.0)
    with pytest.raises(GridError):
        d.window(0.5, 0.25)


def test_driver_variance_matches_the_kernel_at_zero():
    cfg = MCConfig(0.1, 0.05, m=1, grid_log2=10, t0=-0.125, t1=1.125, samples=2000, seed=2, chunk=500)
    vals = mc_collect(cfg, (0.0, 1.0), lambda d: {"xi": d.xi[:, 0, d.grid.index(0.5)]})["xi"]
    v = vals.var(ddof=1)
    assert abs(v - float(KernelModel(0.1, 0.05).K(0.0))) < 4 * v * math.sqrt(2 / 1999)


def test_increment_variance_against_monte_carlo():
    cfg = MCConfig(0.1, 0.05, m=1, grid_log2=10, t0=-0.125, t1=1.125, samples=2000, seed=3, chunk=500)
    x = mc_collect(cfg, (0.0, 1.0), lambda d: {"x": WordSeries(d.window(0.0, 1.0)).at((1,))})["x"]
    v = x.var(ddof=1)
    assert abs(v - increment_variance(0.1, 0.05, 1.0)) < 4 * v * math.sqrt(2 / 1999)


def test_straight_line_signature():
    g = Grid(0.0, 1.0, 1 / 32)
    d = constant_driver(g, [1.0, -2.0])
    v = np.array([1.0, -2.0])
    lv = iterated_integrals(d, 0.0, 1.0, 4)
    expect = v
    for k in range(1, 5):
        assert np.allclose(lv[k - 1], expect / math.factorial(k))
        expect = np.multiply.outer(expect, v)


@given(seeds, st.integers(1, 63))
def test_chen_identity(seed, cut):
    d = random_driver(seed)
    t = cut / 64
    comp = chen_compose(iterated_integrals(d, 0.0, t), iterated_integrals(d, t, 1.0))
    for a, b in zip(comp, iterated_integrals(d, 0.0, 1.0)):
        assert np.allclose(a, b, rtol=1e-10, atol=1e-12)


@given(seeds)
def test_shuffle_identities(seed):
    ws = WordSeries(random_driver(seed).window(0.0, 1.0))
    x = {w: ws.at(w) for k in (1, 2, 3, 4) for w in words_of_level(2, k)}
    assert x[(1,)] * x[(2,)] == pytest.approx(x[(1, 2)] + x[(2, 1)])
    assert x[(1, 2)] ** 2 == pytest.approx(2 * x[(1, 2, 1, 2)] + 4 * x[(1, 1, 2, 2)])
    assert x[(1,)] * x[(1, 2)] == pytest.approx(2 * x[(1, 1, 2)] + x[(1, 2, 1)])


@given(seeds)
def test_level_two_antisymmetric_part_is_the_polygon_area(seed):
    d = random_driver(seed)
    ws = WordSeries(d.window(0.0, 1.0))
    area = 0.5 * (ws.at((1, 2)) - ws.at((2, 1)))
    inc = d.increments
    x = np.concatenate([[0.0], np.cumsum(inc[0])])
    y = np.concatenate([[0.0], np.cumsum(inc[1])])
    shoelace = 0.5 * np.sum(x[:-1] * inc[1] - y[:-1] * inc[0])
    assert area == pytest.approx(shoelace, rel=1e-10, abs=1e-14)


def test_word_integrals_along_times():
    d = random_driver(0)
    out = word_integrals(d, 0.0, 1.0, [(1, 2)], times=[0.5, 1.0])
    direct = word_integrals(d, 0.0, 0.5, [(1, 2)])
    assert out[(1, 2)][0] == pytest.approx(direct[(1, 2)])


def test_lift_holds_every_interval():
    d = random_driver(1)
    r = lift(d, [(0.0, 0.5), (0.5, 1.0)], max_level=2)
    assert set(r.levels) == {(0.0, 0.5), (0.5, 1.0)}
    assert r.levels[(0.0, 0.5)][1].shape == (2, 2)


def test_results_do_not_depend_on_chunking_or_workers():
    spec = MomentSpec.of("12", "12")
    base = MCConfig(0.1, 0.05, m=2, grid_log2=9, t0=-0.125, t1=1.125, samples=60, seed=9, chunk=60)
    a = mc_moment(spec, base)
    b = mc_moment(spec, MCConfig(**{**base.__dict__, "chunk": 7}))
    c = mc_moment(spec, MCConfig(**{**base.__dict__, "chunk": 20, "workers": 2}))
    assert a.estimate == b.estimate == c.estimate


def test_batch_means():
    e = batch_means(np.arange(100.0), 10)
    assert e.estimate == pytest.approx(49.5)
    assert len(e.batch_table) == 10 and e.batch_table[0]["mean"] == pytest.approx(4.5)
    assert e.stderr == pytest.approx(np.std(np.arange(4.5, 100, 10), ddof=1) / math.sqrt(10))
