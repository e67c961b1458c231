import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bracketlab.dynamics import (DISPLAYED, RDE, builtin_system, compare_laws, lie_bracket, lie_bracket_fd,
                                 solve_driven_ode, solve_limit_sde, system_from_strings, verify_rde_reduction)
from bracketlab.fbm_path import Grid, WordSeries, constant_driver, driver_from_path

points = st.lists(st.floats(-3, 3), min_size=3, max_size=3).map(np.array)


@pytest.mark.parametrize("name", ["heisenberg", "commuting", "so3"])
@given(x=points)
@settings(max_examples=15)
def test_symbolic_bracket_matches_finite_differences(name, x):
    sys_ = builtin_system(name)
    for i, j in sys_.pairs():
        exact = lie_bracket(sys_, i, j)(x)[0]
        assert np.allclose(exact, lie_bracket_fd(sys_, i, j, x)[0], atol=1e-6)


def test_known_brackets():
    h = builtin_system("heisenberg")
    assert np.allclose(h.brackets(np.zeros(3)), [[[0, 0, 1]]])
    assert np.allclose(builtin_system("commuting").brackets(np.ones(3)), 0)
    so3 = builtin_system("so3")
    x = np.array([0.3, -1.2, 0.7])
    # [V1, V2] = -V3 for the rotation generators V_i(x) = e_i x x
    assert np.allclose(so3.brackets(x)[0, 0], -so3.evaluate(x)[0, 2])


def test_unknown_system():
    with pytest.raises(ValueError, match="unknown system"):
        builtin_system("lorenz")


@pytest.mark.parametrize("mode", ["pointwise", "piecewise"])
def test_straight_driver_encloses_no_area(mode):
    g = Grid(0.0, 1.0, 1 / 64)
    tr = solve_driven_ode(builtin_system("heisenberg"), constant_driver(g, [1.5, -0.5]), np.zeros(3), mode=mode)
    assert np.allclose(tr.final, [[1.5, -0.5, 0.0]], atol=1e-12)


def test_piecewise_mode_develops_the_polygon():
    rng = np.random.default_rng(0)
    g = Grid(0.0, 1.0, 1 / 128)
    vals = np.concatenate([np.zeros((3, 2, 1)), np.cumsum(rng.standard_normal((3, 2, 128)) * 0.1, axis=2)], axis=2)
    d = driver_from_path(g, vals)
    tr = solve_driven_ode(builtin_system("heisenberg"), d, np.zeros(3), mode="piecewise")
    ws = WordSeries(d.increments)
    area = 0.5 * (ws.at((1, 2)) - ws.at((2, 1)))
    assert np.allclose(tr.final[:, 2], area, atol=1e-12)
    assert np.allclose(tr.final[:, 0], vals[:, 0, -1])


def test_pointwise_mode_needs_even_steps():
    g = Grid(0.0, 1.0, 1 / 63)
    with pytest.raises(ValueError):
        solve_driven_ode(builtin_system("heisenberg"), constant_driver(g, [1.0, 1.0]), np.zeros(3))


def test_guard_freezes_blown_up_samples():
    sys_ = system_from_strings("riccati", [("x*x", "0", "0")])
    g = Grid(0.0, 1.0, 1 / 256)
    d = constant_driver(g, [5.0])
    tr = solve_driven_ode(sys_, d, np.array([1.0, 0.0, 0.0]), guard=1e3)
    assert tr.exited[0] and 0.15 < tr.exit_time[0] < 0.25
    assert np.all(np.isfinite(tr.final))


def test_record_times():
    g = Grid(0.0, 1.0, 1 / 64)
    tr = solve_driven_ode(builtin_system("heisenberg"), constant_driver(g, [1.0, 0.0]), np.zeros(3),
                          record=[0.0, 0.5, 1.0])
    assert np.allclose(tr.states[0, :, 0], [0.0, 0.5, 1.0])


@pytest.mark.parametrize("convention, factor", [(DISPLAYED, 0.25), (RDE, 1.0)])
def test_limit_sde_variance(convention, factor):
    sigma2 = 0.2
    tr = solve_limit_sde(builtin_system("heisenberg"), math.sqrt(sigma2), np.zeros(3), step=1e-2, samples=4000,
                         seed=1, convention=convention)
    z = tr.final[:, 2]
    v = z.var(ddof=1)
    assert abs(v - factor * sigma2) < 4 * v * math.sqrt(2 / 3999)
    assert np.allclose(tr.final[:, :2], 0)


def test_limit_sde_of_commuting_fields_does_not_move():
    tr = solve_limit_sde(builtin_system("commuting"), 1.0, np.ones(3), samples=5)
    assert np.allclose(tr.final, 1.0)


def test_compare_laws():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((500, 2))
    rep = compare_laws(a, a.copy())
    assert rep.ks_statistic == [0.0, 0.0]
    flags = np.zeros(500, dtype=bool)
    flags[:10] = True
    rep = compare_laws(a, rng.standard_normal((400, 2)) + 3, exited_eps=flags)
    assert rep.excluded == (10, 0) and rep.counts == (490, 400)
    assert min(rep.ks_pvalue) < 1e-6
    with pytest.raises(ValueError):
        compare_laws(a[:0], a)


@pytest.mark.parametrize("name", ["heisenberg", "so3"])
def test_rough_step_reduces_to_the_bracket_step(name):
    rep = verify_rde_reduction(builtin_system(name), seed=3)
    assert rep.ok
