"""Periodic solutions of the reduced equation for a prescribed control."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NonConvergenceError, ShapeError
from .fractional import LEFT, cfds_apply, multiplier_table
from .grid import PeriodicGrid, Profile
from .model import (
    ChemostatParams,
    biomass_from_substrate,
    full_rhs,
    nu,
    reduced_rhs,
    reduced_rhs_ds,
)

CLAMP = 1e-9
TRIVIAL_GAP = 1e-6


@dataclass(frozen=True)
class PeriodicSolveResult:
    state: Profile
    residual_norm: float
    iterations: int
    converged: bool


def _as_profile(values, grid):
    if isinstance(values, Profile):
        if values.grid != grid:
            raise ShapeError("profiles live on different grids")
        return values
    return Profile(grid, values)


def table_for(params: ChemostatParams, N: int):
    return multiplier_table(params.T, N, params.alpha, params.L)


def collocation_residual(params: ChemostatParams, s, D) -> np.ndarray:
    """``D^alpha s - F(s, D)`` at the nodes."""
    s = np.asarray(s, dtype=float)
    return cfds_apply(s, table_for(params, s.size), LEFT) - reduced_rhs(0.0, s, D, params)


def solve_periodic_state(
    params: ChemostatParams,
    D,
    guess=None,
    tol: float = 1e-10,
    maxiter: int = 100,
    *,
    raise_on_failure: bool = True,
) -> PeriodicSolveResult:
    """Damped Newton iteration on the collocation equations.

    Iterates are clamped into ``[1e-9, s_in - 1e-9]``; the result is rejected
    if any node approaches the trivial branch ``s = s_in``.
    """
    if isinstance(D, Profile):
        grid = D.grid
        Dv = D.values
    else:
        Dv = np.asarray(D, dtype=float)
        grid = PeriodicGrid(params.T, Dv.size)
    if abs(grid.T - params.T) > 1e-12 * params.T:
        raise ShapeError("grid period differs from the model period")

    from .model import s_bar as _s_bar

    if guess is None:
        s = np.full(grid.N, _s_bar(params))
    else:
        s = np.array(_as_profile(guess, grid).values, dtype=float)

    lo, hi = CLAMP, params.s_in - CLAMP
    s = np.clip(s, lo, hi)
    M = table_for(params, grid.N).matrix(LEFT)

    r = collocation_residual(params, s, Dv)
    norm = float(np.max(np.abs(r)))
    it = 0
    history = [norm]
    while norm > tol and it < maxiter:
        it += 1
        jac = M - np.diag(reduced_rhs_ds(s, Dv, params))
        step = scipy.linalg.solve(jac, -r)
        lam = 1.0
        while True:
            trial = np.clip(s + lam * step, lo, hi)
            rt = collocation_residual(params, trial, Dv)
            nt = float(np.max(np.abs(rt)))
            if nt < norm or lam < 1e-4:
                break
            lam *= 0.5
        s, r, norm = trial, rt, nt
        history.append(norm)

    trivial = bool(np.any(s > params.s_in - TRIVIAL_GAP))
    converged = norm <= tol and not trivial
    if not converged and raise_on_failure:
        reason = "trivial branch s = s_in" if trivial else "residual above tolerance"
        raise NonConvergenceError(
            f"periodic state solve failed: {reason}",
            {"iterations": it, "residual": norm, "history": history,
             "s_min": float(s.min()), "s_max": float(s.max())},
        )

    return PeriodicSolveResult(Profile(grid, s), norm, it, converged)


def residuals_2d(params: ChemostatParams, s, x, D):
    """Collocation residuals of both components of the two-state system."""
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    D = np.asarray(D, dtype=float)
    if not (s.shape == x.shape == D.shape):
        raise ShapeError("state and control profiles must share a grid")
    table = table_for(params, s.size)
    ds, dx = full_rhs(0.0, s, x, D, params)
    return cfds_apply(s, table, LEFT) - ds, cfds_apply(x, table, LEFT) - dx


def integral_balance_check(params: ChemostatParams, s, D) -> float:
    """Mismatch of the period-averaged inflow and consumption terms."""
    s = np.asarray(s, dtype=float)
    D = np.asarray(D, dtype=float)
    gap = params.s_in - s
    return float(abs(np.mean(D * gap) - np.mean(nu(s, params) * gap)))


__all__ = [
    "PeriodicSolveResult",
    "biomass_from_substrate",
    "collocation_residual",
    "integral_balance_check",
    "residuals_2d",
    "solve_periodic_state",
    "table_for",
]
