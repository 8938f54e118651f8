import numpy as np
import pytest

from fracchemostat.bangbang import BangBangControl, mean_adjust, reconstruct
from fracchemostat.errors import NonConvergenceError
from fracchemostat.fractional import direct_cfds
from fracchemostat.grid import PeriodicGrid, Profile, evaluate
from fracchemostat.model import BASELINE, biomass_from_substrate, reduced_rhs
from fracchemostat.solver import (
    collocation_residual,
    integral_balance_check,
    residuals_2d,
    solve_periodic_state,
)

P = BASELINE


def sine_control(grid, eps=0.4, k=1):
    return Profile(grid, P.D_bar + eps * np.sin(2 * np.pi * k * grid.nodes / P.T))


def test_equilibrium_is_exact():
    g = PeriodicGrid(P.T, 32)
    res = solve_periodic_state(P, Profile(g, np.full(32, P.D_bar)), Profile(g, np.full(32, 5.0)))
    assert res.converged and res.iterations == 0
    assert np.all(res.state.values == 5.0)


def test_constant_control_rigidity():
    g = PeriodicGrid(P.T, 64)
    guess = Profile(g, 4.0 + np.cos(2 * np.pi * g.nodes / P.T))
    res = solve_periodic_state(P, Profile(g, np.full(64, P.D_bar)), guess)
    assert np.ptp(res.state.values) <= 1e-8
    assert res.state.mean() == pytest.approx(5.0, abs=1e-9)


def test_sine_control_solution_and_oracle_residual():
    g = PeriodicGrid(P.T, 64)
    D = sine_control(g)
    res = solve_periodic_state(P, D)
    assert res.converged and res.residual_norm <= 1e-10
    s = res.state
    assert np.all((s.values > 0) & (s.values < P.s_in))
    assert np.max(np.abs(collocation_residual(P, s.values, D.values))) <= 1e-10
    # residual with the operator evaluated by quadrature
    for j in (0, 17, 40):
        lhs = direct_cfds(lambda t: float(evaluate(s, t, derivative=1)),
                          g.nodes[j], P.alpha, P.L)
        rhs = reduced_rhs(0, s.values[j], D.values[j], P)
        assert abs(lhs - rhs) <= 1e-6
    assert integral_balance_check(P, s.values, D.values) <= 1e-8


def test_reconstructed_two_level_control():
    g = PeriodicGrid(P.T, 400)
    bb = mean_adjust(BangBangControl(P.D_min, P.D_max, P.T, (3.131, 14.41),
                                     initial_high=True, resolution=g.spacing), P)
    res = solve_periodic_state(P, reconstruct(bb, g))
    assert 3.45 <= res.state.mean() <= 3.80


def test_trivial_branch_rejected():
    g = PeriodicGrid(P.T, 16)
    guess = Profile(g, np.full(16, P.s_in - 1e-12))
    with pytest.raises(NonConvergenceError) as err:
        solve_periodic_state(P, Profile(g, np.full(16, 1.9)), guess, maxiter=1)
    assert "iterations" in err.value.diagnostics


def test_residuals_2d():
    g = PeriodicGrid(P.T, 32)
    rs, rx = residuals_2d(P, np.full(32, 5.0), np.full(32, 3.0), np.full(32, 0.5))
    assert np.max(np.abs(rs)) <= 1e-12 and np.max(np.abs(rx)) <= 1e-12

    D = sine_control(g)
    s = solve_periodic_state(P, D).state.values
    x = biomass_from_substrate(s, P)
    rs, rx = residuals_2d(P, s, x, D.values)
    assert max(np.max(np.abs(rs)), np.max(np.abs(rx))) <= 1e-6
    _, rx_bad = residuals_2d(P, s, x + 0.1, D.values)
    assert np.max(np.abs(rx_bad)) > 1e-3


def test_integral_balance_detects_non_solutions():
    assert integral_balance_check(P, np.full(8, 5.0), np.full(8, 0.5)) <= 1e-14
    rng = np.random.default_rng(1)
    s = rng.uniform(1, 7, 32)
    D = rng.uniform(0.02, 1.95, 32)
    assert integral_balance_check(P, s, D) > 1e-3
