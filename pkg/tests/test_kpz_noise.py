import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bracketlab.kpz_noise import (COLE_HOPF_REF, H_FORM, U_FORM, ResolutionError, SpaceTimeGrid,
                                  build_chi_xi, bump_ft, change_of_variables_gap, decorrelation_and_cumulants,
                                  exact_pairing_variance, grid_covariance, kpz_constants, local_weights, pair_field,
                                  pair_many, solve_kpz)
from bracketlab.kpz_noise import TestFunction as Phi


@pytest.fixture(scope="module")
def coarse():
    grid = SpaceTimeGrid.for_eps(1 / 8, 128)
    return grid, build_chi_xi(grid, 1 / 8, seed=0, extras=True)


@given(st.floats(-50, 50))
def test_bump_transform_is_even_and_bounded(nu):
    assert float(bump_ft(nu)) == pytest.approx(float(bump_ft(-nu)))
    assert abs(float(bump_ft(nu))) <= 1 + 1e-12


def test_bump_transform_at_zero_is_the_mass():
    assert float(bump_ft(0.0)) == pytest.approx(1.0, abs=1e-12)


def test_grid_resolution():
    g = SpaceTimeGrid.for_eps(1 / 8, 128)
    assert g.dt == pytest.approx((1 / 80) ** 2)
    assert g.period >= (10 / 8) ** 2
    with pytest.raises(ResolutionError):
        SpaceTimeGrid.for_eps(1 / 16, 128).check(1 / 16)


def test_renormalisation_constant_scaling():
    # C_eps grows like eps^{-3/2}; sigma^2 does not depend on eps
    c = [kpz_constants(None, e)[0] for e in (1 / 8, 1 / 16, 1 / 32)]
    for a, b in zip(c, c[1:]):
        assert a / b == pytest.approx(2 ** -1.5, rel=1e-3)
    s = [kpz_constants(None, e)[1] for e in (1 / 8, 1 / 16, 1 / 32)]
    assert max(s) == pytest.approx(min(s), rel=1e-6)


def test_truncated_constant_matches_the_grid_covariance():
    g = SpaceTimeGrid.for_eps(1 / 8, 128)
    c0 = grid_covariance(g, 1 / 8, "chi")[0, 0]
    assert c0 == pytest.approx(kpz_constants(None, 1 / 8, 128)[0], rel=1e-5)


def test_fields_are_reproducible_and_renormalised(coarse):
    grid, f = coarse
    again = build_chi_xi(grid, 1 / 8, seed=0)
    assert np.array_equal(f.chi, again.chi)
    assert np.allclose(f.xi, f.chi ** 2 - f.c_eps)
    # one realisation already averages over ~1e6 cells
    assert abs(np.mean(f.chi ** 2) / f.c_eps - 1) < 0.02
    assert not np.array_equal(f.chi, build_chi_xi(grid, 1 / 8, seed=1).chi)


def test_test_function_has_unit_mass(coarse):
    grid, _ = coarse
    w = Phi().rescaled(0.25, (grid.period / 2, 0.5), grid)
    assert w.sum() * grid.dt * grid.dx == pytest.approx(1.0, rel=1e-3)


def test_local_weights_match_full_pairing(coarse):
    grid, f = coarse
    phi = Phi()
    z = (grid.period / 2, 0.3)
    full = pair_field(f.xi, grid, phi, 0.25, z)
    local = pair_many(f.xi, [local_weights(phi, 0.25, z, grid)], grid)[0]
    assert local == pytest.approx(full, rel=1e-12)


def test_pairing_refuses_the_time_seam(coarse):
    grid, f = coarse
    with pytest.raises(ValueError):
        pair_field(f.xi, grid, Phi(), 0.25, (0.0, 0.5))


def test_pairing_variance_against_the_exact_discrete_value():
    eps, lam = 1 / 8, 0.25
    r = decorrelation_and_cumulants(eps, 8, seed=2, nx=128, lam=lam)
    grid = SpaceTimeGrid.for_eps(eps, 128, min_period=3 * lam ** 2 / 4)
    exact = exact_pairing_variance(grid, eps, Phi(), lam)
    assert abs(r.var_xi[0] - exact) < 4 * r.var_xi[1]
    assert abs(r.correlation[0]) < 4 * r.correlation[1] + 1e-12
    assert abs(r.var_chi[0] - r.c_eps) < 4 * r.var_chi[1]


def test_noiseless_forms_agree():
    g = SpaceTimeGrid.for_eps(1 / 8, 128)
    h0 = 0.3 * np.sin(2 * np.pi * g.xs)
    u = solve_kpz(None, h0, U_FORM, 200, dt=g.dt).h[-1]
    h = solve_kpz(None, h0, H_FORM, 200, dt=g.dt).h[-1]
    assert np.array_equal(u, h)


def test_cole_hopf_reference_converges_to_the_noiseless_flow():
    g = SpaceTimeGrid.for_eps(1 / 8, 128)
    h0 = 0.3 * np.sin(2 * np.pi * g.xs)
    gaps = []
    for k in (1, 2, 4):
        u = solve_kpz(None, h0, U_FORM, 200 * k, dt=g.dt / k).h[-1]
        z = solve_kpz(None, h0, COLE_HOPF_REF, 200 * k, dt=g.dt / k).h[-1]
        gaps.append(np.abs(u - z).max())
    assert gaps[0] / gaps[1] == pytest.approx(2, rel=0.1)
    assert gaps[1] / gaps[2] == pytest.approx(2, rel=0.1)


def test_change_of_variables_gap_is_first_order():
    gaps = change_of_variables_gap(1 / 8, nx=128, strides=(4, 2, 1))
    assert all(a / b > 1.5 for a, b in zip(gaps, gaps[1:]))


def test_solver_argument_checks(coarse):
    grid, f = coarse
    h0 = np.zeros(grid.nx)
    with pytest.raises(ValueError):
        solve_kpz(None, h0, U_FORM, 10)
    with pytest.raises(ValueError):
        solve_kpz(f, np.zeros(64), H_FORM, 10)
    with pytest.raises(ValueError):
        solve_kpz(f, h0, H_FORM, grid.nt)
    with pytest.raises(ValueError):
        solve_kpz(f, h0, "V_FORM", 10)
    plain = build_chi_xi(grid, 1 / 8, seed=0)
    with pytest.raises(ValueError):
        solve_kpz(plain, h0, U_FORM, 10)


def test_guard_flags_runaway_solutions(coarse):
    grid, f = coarse
    sol = solve_kpz(f, 0.1 * np.sin(2 * np.pi * grid.xs), H_FORM, 50, guard=1e-3)
    assert sol.flags and np.isnan(sol.h[-1]).all()
