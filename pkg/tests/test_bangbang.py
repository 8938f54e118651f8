import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracchemostat.bangbang import (
    BangBangControl,
    correct_state,
    costate_oracle_residual,
    detect_switches,
    duty_cycle_shift,
    mean_adjust,
    pmp_consistency,
    reconstruct,
    refine_switches,
    solve_costate,
    switching_function,
)
from fracchemostat.errors import StructureError
from fracchemostat.grid import PeriodicGrid, Profile
from fracchemostat.model import BASELINE
from fracchemostat.solver import solve_periodic_state

P = BASELINE
TAU = P.T * (P.D_bar - P.D_min) / (P.D_max - P.D_min)


def law(xi, high=True, res=0.05):
    return BangBangControl(P.D_min, P.D_max, P.T, xi, initial_high=high, resolution=res)


def test_duty_cycle_high_time():
    assert TAU == pytest.approx(3.7306, abs=1e-4)
    assert (1.95 * TAU + 0.02 * (15 - TAU)) / 15 == pytest.approx(0.5, abs=1e-15)


def test_law_invariants():
    with pytest.raises(StructureError):
        law((1.0, 2.0, 3.0))
    with pytest.raises(StructureError):
        law((4.0, 2.0))
    with pytest.raises(StructureError):
        law((1.0, 15.0))
    bb = law((3.0, 14.0))
    assert bb(1.0) == P.D_max and bb(5.0) == P.D_min and bb(14.5) == P.D_max
    assert bb.high_time() == pytest.approx(4.0)


def test_detect_square_wave():
    g = PeriodicGrid(P.T, 300)
    sq = law((P.T / 4, 3 * P.T / 4), high=False)
    bb = detect_switches(reconstruct(sq, g), P)
    assert bb.switch_count == 2 and not bb.initial_high
    assert np.allclose(bb.switch_times, sq.switch_times, atol=g.spacing)


def test_detect_wrapping_high_interval():
    g = PeriodicGrid(P.T, 300)
    sq = law((3.131, 14.41))
    bb = detect_switches(reconstruct(sq, g), P)
    assert bb.initial_high
    assert np.allclose(bb.switch_times, sq.switch_times, atol=g.spacing)


def test_detect_constant():
    g = PeriodicGrid(P.T, 64)
    bb = detect_switches(Profile(g, np.full(64, P.D_bar)), P)
    assert bb.constant and bb.switch_count == 0 and bb.mean() == P.D_bar


def test_close_crossings_merged():
    g = PeriodicGrid(P.T, 200)
    D = reconstruct(law((3.0, 12.0)), g).values.copy()
    D[100] = P.D_max  # one-sample spike inside the low interval
    bb = detect_switches(Profile(g, D), P)
    assert bb.switch_count == 2


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.5, 5.0), offset=st.floats(-0.09, 0.09), high=st.booleans())
def test_mean_adjust_exact(a, offset, high):
    if high:
        xi = (a, (a - TAU - offset) % P.T)
        xi = tuple(sorted(xi))
        bb = BangBangControl(P.D_min, P.D_max, P.T, xi,
                             initial_high=xi[0] == a, resolution=0.05)
    else:
        bb = law((a, a + TAU + offset), high=False)
    adj = mean_adjust(bb, P)
    assert adj.switch_count == 2
    assert abs(adj.mean() - P.D_bar) <= 1e-12


def test_mean_adjust_unchanged_and_limit():
    bb = law((2.0, 2.0 + TAU), high=False)
    assert mean_adjust(bb, P).switch_times == pytest.approx(bb.switch_times, abs=1e-14)
    with pytest.raises(StructureError):
        mean_adjust(law((2.0, 2.0 + TAU + 0.5), high=False), P)


def test_reconstruct_levels_and_mean():
    g = PeriodicGrid(P.T, 400)
    bb = mean_adjust(law((3.131, 14.41), res=g.spacing), P)
    D = reconstruct(bb, g)
    assert set(np.unique(D.values)) <= {P.D_min, P.D_max}
    assert abs(D.mean() - P.D_bar) <= (P.D_max - P.D_min) / g.N
    avg = reconstruct(bb, g, mode="average")
    assert avg.mean() == pytest.approx(P.D_bar, abs=1e-12)


def test_correct_state_constant_law():
    g = PeriodicGrid(P.T, 32)
    bb = BangBangControl(P.D_min, P.D_max, P.T, constant=True, level=P.D_bar)
    res = correct_state(P, bb, Profile(g, np.full(32, 4.0)))
    assert np.allclose(res.state.values, 5.0, atol=1e-10)


@pytest.fixture(scope="module")
def two_switch():
    g = PeriodicGrid(P.T, 200)
    bb = mean_adjust(law((3.131, 14.41), res=g.spacing), P)
    D = reconstruct(bb, g)
    s = solve_periodic_state(P, D).state
    return g, bb, s, D


@pytest.mark.parametrize("convention", ["hamiltonian", "adjoint"])
def test_costate(two_switch, convention):
    g, bb, s, D = two_switch
    cs = solve_costate(P, s, D, convention=convention)
    assert cs.residual <= 1e-10
    assert np.max(np.abs(cs.values)) > 0
    assert costate_oracle_residual(P, s, D, cs, nodes=[0, 37, 120]) <= 1e-6
    phi = switching_function(P, s, cs.p)
    assert np.array_equal(np.sign(phi.values), np.sign(cs.values))


def test_consistency_report(two_switch):
    g, bb, s, D = two_switch
    rng = np.random.default_rng(0)
    phi = rng.standard_normal(g.N)
    rep = pmp_consistency(phi, D.values, P, bb.switch_times)
    assert rep.fraction + rep.flipped_fraction == pytest.approx(1.0)
    perfect = np.where(D.values == P.D_max, -1.0, 1.0)
    assert pmp_consistency(perfect, D.values, P, bb.switch_times).fraction == 1.0
    assert pmp_consistency(-perfect, D.values, P).orientation == "flipped"
    eta = duty_cycle_shift(perfect - 5.0, P)
    assert pmp_consistency(perfect - 5.0, D.values, P, eta=eta).fraction == 1.0


def test_refine_keeps_structure(two_switch):
    g, bb, s, D = two_switch
    ref = refine_switches(P, bb, s, tol=1e-2)
    assert ref.switch_count == 2
    assert abs(ref.mean() - P.D_bar) <= 1e-12
