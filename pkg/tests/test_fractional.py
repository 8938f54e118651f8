import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracchemostat.errors import DomainError, ShapeError
from fracchemostat.fractional import (
    LEFT,
    RIGHT,
    SpectralMultiplierTable,
    cfds_apply,
    direct_cfds,
    gamma_factor,
    gauss_jacobi,
    lambda_root,
    left_multiplier,
    psi,
    right_multiplier,
)
from fracchemostat.grid import PeriodicGrid, evaluate
from fracchemostat.verification import oracle_gap, random_profile

W1 = 2 * np.pi / 15


def closed_form_multiplier(omega, alpha, L, dps=30):
    """(i w)^alpha gamma(1 - alpha, i w L) / Gamma(1 - alpha) via mpmath."""
    with mp.workdps(dps):
        iw = mp.mpc(0, omega)
        val = iw ** alpha * mp.gammainc(1 - alpha, 0, iw * L) / mp.gamma(1 - alpha)
    return complex(val)


# {{{ multipliers


def test_zero_frequency_is_exact_zero():
    assert left_multiplier(0.0, 0.85, 5.0) == 0
    assert right_multiplier(0.0, 0.85, 5.0) == 0


def test_classical_limit_branch():
    assert left_multiplier(W1, 1.0, 3.0) == pytest.approx(1j * W1, abs=0)
    assert right_multiplier(W1, 1.0, 3.0) == pytest.approx(-1j * W1, abs=0)


def test_frozen_multiplier_value():
    # reference from the incomplete gamma closed form, 30 digits
    m = left_multiplier(W1, 0.85, 5.0)
    assert abs(m - (0.11964728601610454 + 0.4990902132193154j)) < 1e-13


@pytest.mark.parametrize("alpha", [0.1, 0.3, 0.5, 0.85, 0.99])
@pytest.mark.parametrize("L", [0.5, 5.0, 50.0])
@pytest.mark.parametrize("k", [1, 7, 60])
def test_multiplier_matches_closed_form(alpha, L, k):
    w = k * W1
    ref = closed_form_multiplier(w, alpha, L)
    assert abs(left_multiplier(w, alpha, L) - ref) <= 1e-11 * max(1, abs(ref))


def test_multiplier_matches_quadrature_oracle():
    m = left_multiplier(W1, 0.85, 5.0)
    for t in (0.0, 2.3):
        direct = direct_cfds(lambda u: 1j * W1 * np.exp(1j * W1 * u), t, 0.85, 5.0)
        assert abs(direct - m * np.exp(1j * W1 * t)) < 1e-8


def test_right_is_conjugate_and_classical_sign():
    w = np.linspace(-3, 3, 41)
    assert np.max(np.abs(right_multiplier(w, 0.4, 2.0)
                         - np.conj(left_multiplier(w, 0.4, 2.0)))) == 0
    # real-input closure: m(-w) = conj m(w)
    assert np.allclose(left_multiplier(-w, 0.4, 2.0),
                       np.conj(left_multiplier(w, 0.4, 2.0)), rtol=0, atol=1e-15)
    # the right operator tends to minus the derivative
    assert abs(right_multiplier(W1, 0.999, 5.0) + 1j * W1) < 0.01 * W1


@pytest.mark.parametrize("bad", [np.nan, np.inf])
def test_nonfinite_frequency_rejected(bad):
    with pytest.raises(DomainError):
        left_multiplier(bad, 0.5, 1.0)


@pytest.mark.parametrize("alpha,L", [(0.0, 1.0), (1.2, 1.0), (0.5, 0.0), (0.5, -1.0)])
def test_invalid_order_or_memory(alpha, L):
    with pytest.raises(DomainError):
        left_multiplier(1.0, alpha, L)


def test_gauss_jacobi_moments():
    x, w = gauss_jacobi(20, 0.0, -0.85)
    # exact moments of (1 + x)^b x^k over [-1, 1], expanded in y = 1 + x
    b = mp.mpf(-0.85)
    for k in (0, 1, 5, 12):
        ref = mp.fsum(mp.binomial(k, j) * (-1) ** (k - j) * 2 ** (b + j + 1) / (b + j + 1)
                      for j in range(k + 1))
        assert np.dot(w, x ** k) == pytest.approx(float(ref), rel=1e-12)


# }}}


# {{{ operators on grids


def test_table_invariants():
    tab = SpectralMultiplierTable.build(15.0, 64, 0.85, 5.0)
    assert tab.left[0] == 0 and tab.right[0] == 0
    assert np.array_equal(tab.right, np.conj(tab.left))
    assert not tab.left.flags.writeable
    assert np.allclose(tab.right_matrix, tab.left_matrix.T, atol=1e-15)


def test_constant_profile_maps_to_zero():
    tab = SpectralMultiplierTable.build(15.0, 32, 0.85, 5.0)
    assert np.max(np.abs(cfds_apply(np.full(32, 3.7), tab))) < 1e-14


def test_length_mismatch():
    tab = SpectralMultiplierTable.build(15.0, 32, 0.85, 5.0)
    with pytest.raises(ShapeError):
        cfds_apply(np.zeros(30), tab)


def test_sine_profile_against_oracle():
    grid = PeriodicGrid(15.0, 32)
    tab = SpectralMultiplierTable.build(15.0, 32, 0.85, 5.0)
    prof = grid.sample(lambda t: np.sin(W1 * t))
    spectral = cfds_apply(prof.values, tab, LEFT)
    expect = (left_multiplier(W1, 0.85, 5.0) * np.exp(1j * W1 * grid.nodes)).imag
    assert np.max(np.abs(spectral - expect)) < 1e-13
    assert oracle_gap(prof, tab, LEFT) < 1e-8
    assert oracle_gap(prof, tab, RIGHT) < 1e-8


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1),
       alpha=st.sampled_from([0.2, 0.5, 0.85]), L=st.sampled_from([1.0, 5.0]))
def test_zero_mean_property(seed, alpha, L):
    rng = np.random.default_rng(seed)
    grid = PeriodicGrid(15.0, 48)
    tab = SpectralMultiplierTable.build(15.0, 48, alpha, L)
    out = cfds_apply(random_profile(grid, rng).values, tab, LEFT)
    assert abs(out.mean()) <= 1e-12


def test_right_operator_is_adjoint():
    rng = np.random.default_rng(3)
    grid = PeriodicGrid(15.0, 40)
    tab = SpectralMultiplierTable.build(15.0, 40, 0.6, 2.0)
    f, g = random_profile(grid, rng).values, random_profile(grid, rng).values
    lhs = np.dot(cfds_apply(f, tab, LEFT), g)
    rhs = np.dot(f, cfds_apply(g, tab, RIGHT))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_classical_limit_on_smooth_profile():
    grid = PeriodicGrid(15.0, 64)
    prof = grid.sample(lambda t: np.exp(np.sin(W1 * t)))
    tab = SpectralMultiplierTable.build(15.0, 64, 0.999, 5.0)
    exact = evaluate(prof, grid.nodes, derivative=1)
    approx = cfds_apply(prof.values, tab)
    assert np.linalg.norm(approx - exact) <= 0.01 * np.linalg.norm(exact)


# }}}


# {{{ quadrature oracle and decay rate


def test_direct_cfds_zero_and_linear():
    assert direct_cfds(lambda t: 0.0, 1.0, 0.85, 5.0) == 0
    val = direct_cfds(lambda t: 1.0, 1.0, 0.85, 5.0)
    expect = 5.0 ** 0.15 / (0.15 * gamma_factor(0.85))
    assert val == pytest.approx(expect, rel=1e-13)
    assert direct_cfds(lambda t: 1.0, 1.0, 0.85, 5.0, RIGHT) == pytest.approx(-expect)


def test_gamma_factor_against_mpmath():
    for a in (0.1, 0.5, 0.85, 0.999):
        assert gamma_factor(a) == pytest.approx(float(mp.gamma(1 - a)), rel=1e-14)


@pytest.mark.parametrize("k", [0.01, 0.7, 5.0, 80.0])
@pytest.mark.parametrize("alpha", [0.3, 0.85])
def test_lambda_root_residual(k, alpha):
    lam = lambda_root(k, alpha, 5.0)
    target = k * math.gamma(1 - alpha)
    assert abs(psi(lam, alpha, 5.0) - target) <= 1e-10 * target


def test_lambda_root_solves_linear_equation():
    k, alpha, L = 0.7, 0.85, 5.0
    lam = lambda_root(k, alpha, L)
    for t in (0.0, 1.5, 6.0):
        lhs = direct_cfds(lambda u: -lam * np.exp(-lam * u), t, alpha, L)
        assert abs(lhs + k * np.exp(-lam * t)) <= 1e-6


def test_lambda_root_monotone_and_classical():
    roots = [lambda_root(k, 0.6, 2.0) for k in (0.1, 0.5, 1.0, 4.0)]
    assert all(b > a for a, b in zip(roots, roots[1:]))
    assert lambda_root(0.3, 1.0, 2.0) == 0.3
    lams = np.linspace(0.01, 3, 30)
    vals = [psi(x, 0.6, 2.0) for x in lams]
    assert all(b > a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("k", [0.0, -1.0])
def test_lambda_root_rejects_nonpositive(k):
    with pytest.raises(DomainError):
        lambda_root(k, 0.5, 1.0)


# }}}
