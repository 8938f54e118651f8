"""Self-checks of the operators and model identities.

Each function returns a :class:`Check`; :func:`run_all` runs the suite used by
the ``verify`` subcommand.
"""

from __future__ import annotations

import numpy as np

from .fractional import (
    LEFT,
    RIGHT,
    SpectralMultiplierTable,
    cfds_apply,
    direct_cfds,
    lambda_root,
    left_multiplier,
    psi,
    gamma_factor,
    right_multiplier,
)
from .grid import PeriodicGrid, Profile, evaluate
from .model import ChemostatParams, equilibrium, nu, s_bar
from .solver import integral_balance_check, solve_periodic_state


class Check:
    """Outcome of one check. Informational entries never fail."""

    __slots__ = ("name", "value", "threshold", "passed", "info")

    def __init__(self, name, value, threshold, passed=None, info=False):
        self.name = name
        self.value = float(value)
        self.threshold = float(threshold)
        self.info = bool(info)
        if info:
            passed = True
        self.passed = bool(value <= threshold) if passed is None else bool(passed)

    def __repr__(self):
        flag = "INFO" if self.info else "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: {self.value:.3e} (limit {self.threshold:.1e})"


def random_profile(grid: PeriodicGrid, rng, modes: int = 8) -> Profile:
    """Random real trigonometric polynomial with decaying amplitudes."""
    k = np.arange(1, modes + 1)
    a = rng.standard_normal(modes) / k
    b = rng.standard_normal(modes) / k
    w = 2 * np.pi * np.outer(grid.nodes, k) / grid.T
    return Profile(grid, rng.standard_normal() + np.cos(w) @ a + np.sin(w) @ b)


def oracle_gap(profile: Profile, table: SpectralMultiplierTable, side: str,
               nodes=None, alpha=None, L=None) -> float:
    """Largest gap between the multiplier path and quadrature at some nodes.

    ``alpha`` and ``L`` default to the table's; passing the true values lets
    a corrupted table be detected.
    """
    alpha = table.alpha if alpha is None else alpha
    L = table.L if L is None else L
    spectral = cfds_apply(profile.values, table, side)
    idx = range(profile.grid.N) if nodes is None else nodes

    def fprime(t):
        return float(evaluate(profile, t, derivative=1))

    return max(abs(spectral[j] - direct_cfds(fprime, profile.grid.nodes[j],
                                             alpha, L, side))
               for j in idx)


def equilibrium_check(params: ChemostatParams) -> Check:
    eq = equilibrium(params)
    return Check("equilibrium identity nu(s_bar) = D_bar",
                 abs(nu(eq.s_bar, params) - params.D_bar), 1e-12)


def zero_integral_check(alpha, L, seed=0, count=20, N=64, T=15.0) -> Check:
    rng = np.random.default_rng(seed)
    grid = PeriodicGrid(T, N)
    table = SpectralMultiplierTable.build(T, N, alpha, L)
    worst = max(abs(np.mean(cfds_apply(random_profile(grid, rng).values, table, LEFT)))
                for _ in range(count))
    return Check(f"zero mean of left operator (alpha={alpha}, L={L})", worst, 1e-12)


def conjugacy_check(alpha, L, T=15.0, N=64) -> Check:
    w = 2 * np.pi * np.arange(N // 2 + 1) / T
    gap = np.max(np.abs(right_multiplier(w, alpha, L) - np.conj(left_multiplier(w, alpha, L))))
    return Check("right multiplier is the conjugate", gap, 1e-14)


def multiplier_oracle_check(params: ChemostatParams, seed=0, table=None,
                            N=32, nodes=(0, 5, 11, 23)) -> Check:
    rng = np.random.default_rng(seed)
    grid = PeriodicGrid(params.T, N)
    if table is None:
        table = SpectralMultiplierTable.build(params.T, N, params.alpha, params.L)
    prof = random_profile(grid, rng, modes=6)
    gap = max(oracle_gap(prof, table, side, nodes, params.alpha, params.L)
              for side in (LEFT, RIGHT))
    return Check("multiplier path vs quadrature", gap, 1e-8)


def lambda_root_checks(params: ChemostatParams, k: float = 0.7) -> list[Check]:
    a, L = params.alpha, params.L
    lam = lambda_root(k, a, L)
    target = k * gamma_factor(a) if a < 1 else k
    res = abs(psi(lam, a, L) - target) / target if a < 1 else 0.0

    # D exp(-lam t) + k exp(-lam t) at a few times
    gap = max(abs(direct_cfds(lambda u: -lam * np.exp(-lam * u), t, a, L)
                  + k * np.exp(-lam * t)) for t in (0.0, 1.0, 4.0, 10.0))
    return [Check("decay-rate equation residual", res, 1e-10),
            Check("exponential solves the linear equation", gap, 1e-6)]


def _sine_state(params, eps, N=128, k=1):
    grid = PeriodicGrid(params.T, N)
    D = params.D_bar + eps * np.sin(2 * np.pi * k * grid.nodes / params.T)
    res = solve_periodic_state(params, Profile(grid, D))
    return res.state, D


def integral_balance(params: ChemostatParams) -> Check:
    eps = 0.3 * min(params.D_max - params.D_bar, params.D_bar - params.D_min)
    s, D = _sine_state(params, eps)
    return Check("integral balance of a periodic solution",
                 integral_balance_check(params, s.values, D), 1e-8)


def constant_control_check(params: ChemostatParams) -> Check:
    grid = PeriodicGrid(params.T, 64)
    guess = s_bar(params) + 0.3 * np.sin(2 * np.pi * grid.nodes / params.T)
    res = solve_periodic_state(params, Profile(grid, np.full(64, params.D_bar)),
                               Profile(grid, guess))
    return Check("constant control gives a constant state",
                 float(np.ptp(res.state.values)), 1e-8)


def ky_one_check(params: ChemostatParams, eps: float = 0.01) -> Check:
    p = params.replace(K=1.0 / params.Y)
    s, _ = _sine_state(p, eps)
    return Check("KY = 1: average substrate unchanged by forcing",
                 abs(s.mean() - s_bar(p)), 1e-3)


def perturbation_sign_checks(params: ChemostatParams, eps: float = 0.05) -> list[Check]:
    """Small sinusoidal forcing for KY below and above 1.

    Gated: the average substrate rises above ``s_bar`` when KY < 1 and falls
    below it when KY > 1. The average of ``nu`` minus ``D_bar`` is reported
    alongside for information; it is not sign-definite in KY (it vanishes
    identically for the classical derivative).
    """
    out = []
    for KY, expect_above in ((0.5, True), (5.0, False)):
        p = params.replace(K=KY / params.Y)
        s, _ = _sine_state(p, eps)
        gap = float(s.mean() - s_bar(p))
        ok = gap > 0 if expect_above else gap < 0
        out.append(Check(f"KY = {KY}: sign of s_av - s_bar under forcing",
                         gap, 0.0, passed=ok))
        out.append(Check(f"KY = {KY}: mean(nu) - D_bar under forcing",
                         float(np.mean(nu(s.values, p)) - p.D_bar), 0.0, info=True))
    return out


def run_all(params: ChemostatParams, seed: int = 0) -> list[Check]:
    checks = [equilibrium_check(params)]
    for a in (0.3, params.alpha):
        for L in (1.0, params.L):
            checks.append(zero_integral_check(a, L, seed=seed, T=params.T))
    checks.append(conjugacy_check(params.alpha, params.L, params.T))
    checks.append(multiplier_oracle_check(params, seed))
    checks += lambda_root_checks(params)
    checks.append(integral_balance(params))
    checks.append(constant_control_check(params))
    checks.append(ky_one_check(params))
    checks += perturbation_sign_checks(params)
    return checks
