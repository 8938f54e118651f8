import numpy as np
import pytest

from fracchemostat.grid import PeriodicGrid
from fracchemostat.model import BASELINE
from fracchemostat.opc import (
    SolveOptions,
    kkt_residual,
    multistart,
    phase_align,
    project_control,
    sine_start,
    solve_nlp,
    transcribe,
)
from fracchemostat.solver import solve_periodic_state

P = BASELINE
G = PeriodicGrid(P.T, 64)


def test_transcription_shape_and_steady_state():
    nlp = transcribe(P, G)
    assert nlp.n_constraints == 65
    assert transcribe(P, G, pin=True).n_constraints == 66
    z = nlp.join(np.full(64, 5.0), np.full(64, 0.5))
    assert np.max(np.abs(nlp.constraints(z))) < 1e-14
    lo, hi = nlp.bounds()
    assert np.all(lo[:64] == 0) and np.all(hi[:64] == P.s_in)
    assert np.all(lo[64:] == P.D_min) and np.all(hi[64:] == P.D_max)


def test_jacobian_matches_finite_differences():
    nlp = transcribe(P, PeriodicGrid(P.T, 16), pin=True)
    rng = np.random.default_rng(4)
    z = nlp.join(rng.uniform(2, 7, 16), rng.uniform(0.1, 1.8, 16))
    J = nlp.jacobian(z)
    h = 1e-6
    fd = np.empty_like(J)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        fd[:, i] = (nlp.constraints(z + e) - nlp.constraints(z - e)) / (2 * h)
    assert np.max(np.abs(J - fd)) <= 1e-6 * max(1.0, np.max(np.abs(J)))


def test_steady_state_is_stationary():
    nlp = transcribe(P, G)
    z = nlp.join(np.full(64, 5.0), np.full(64, 0.5))
    assert kkt_residual(nlp, z) <= 1e-12
    res = multistart(P, G, perturbations=0)
    assert res.report.objective == 5.0 and res.report.improvement_pct == 0.0
    assert res.report.iterations == 0 and res.report.converged


def test_projection():
    rng = np.random.default_rng(0)
    D = project_control(rng.uniform(-1, 3, 50), P)
    assert np.all((D >= P.D_min) & (D <= P.D_max))
    assert abs(D.mean() - P.D_bar) <= 1e-12


def test_sine_starts_are_feasible():
    for k in (1, 2, 3):
        D = sine_start(G, P, k)
        assert abs(D.mean() - P.D_bar) < 1e-14
        assert D.min() >= P.D_min and D.max() <= P.D_max


@pytest.fixture(scope="module")
def coarse_optimum():
    return multistart(P, PeriodicGrid(P.T, 100), perturbations=2, coarse_N=None)


def test_solve_improves_and_is_stationary(coarse_optimum):
    rep = coarse_optimum.report
    assert rep.converged
    assert rep.kkt_residual <= 1e-6 and rep.infeasibility <= 1e-8
    assert rep.improvement_pct > 20
    assert rep.improvement_pct == pytest.approx(100 * (5 - rep.objective) / 5)
    D = coarse_optimum.control.values
    assert abs(D.mean() - P.D_bar) <= 1e-10
    assert D.min() >= P.D_min and D.max() <= P.D_max
    # mostly at one of the two levels
    gap = 0.05 * (P.D_max - P.D_min)
    mid = (np.abs(D - P.D_min) > gap) & (np.abs(D - P.D_max) > gap)
    assert mid.mean() <= 0.1
    # pinned at the equilibrium value, crossing upward
    s = coarse_optimum.state.values
    assert s[0] == pytest.approx(5.0, abs=1e-8) and s[1] > s[-1]


def test_pin_costs_little(coarse_optimum):
    # the unpinned optimum is visited first; imposing s(0) = s_bar costs O(h)
    assert coarse_optimum.report.objective - min(coarse_optimum.history) < 0.01


def test_deterministic(coarse_optimum):
    again = multistart(P, PeriodicGrid(P.T, 100), perturbations=2, coarse_N=None)
    assert np.array_equal(again.control.values, coarse_optimum.control.values)
    assert again.report.objective == coarse_optimum.report.objective


def test_phase_align_puts_crossing_at_origin(coarse_optimum):
    s, D = phase_align(coarse_optimum, P)
    assert abs(s[0] - 5.0) < 0.2


@pytest.mark.parametrize("k", [1, 2, 3])
def test_KY_one_classical_mean_is_invariant(k):
    # with the first-order derivative, mean(nu(s)) = D_bar forces s_av = s_bar
    # for every periodic control, so no control improves on the steady state
    p = P.replace(K=1.0, alpha=1.0)
    g = PeriodicGrid(p.T, 128)
    for eps in (0.3, 0.9):
        D = p.D_bar + eps * (p.D_bar - p.D_min) * np.sin(2 * np.pi * k * g.nodes / p.T)
        s = solve_periodic_state(p, D).state.values
        assert abs(s.mean() - 2.0) <= 1e-9
        assert solve_periodic_state(p.replace(alpha=0.85), D).state.mean() < 2.0 - 1e-3


def test_KY_one_fractional_does_improve():
    # the chain-rule argument fails for the fractional derivative
    p = P.replace(K=1.0)
    res = multistart(p, PeriodicGrid(p.T, 64), perturbations=2, coarse_N=None)
    assert res.report.improvement_pct > 1.0


def test_solve_from_feasible_start():
    nlp = transcribe(P, G)
    D0 = sine_start(G, P, 1)
    s0 = solve_periodic_state(P, D0).state.values
    res = solve_nlp(nlp, (s0, D0), SolveOptions(maxiter=200))
    assert res.report.objective < np.mean(s0)
    with pytest.raises(ValueError):
        solve_nlp(nlp, (s0, D0 + 5.0))
