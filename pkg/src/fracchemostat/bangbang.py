"""Two-level control laws: switch detection, reconstruction and optimality checks.

The predicted control from the transcribed problem carries Gibbs ripples near
its jumps. Since the two levels are known, the jumps are located as crossings
of the midpoint level by the trigonometric interpolant and a clean law is
rebuilt from them.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import NumericalError, StructureError
from .fractional import RIGHT, direct_cfds, multiplier_table
from .grid import PeriodicGrid, Profile, evaluate
from .model import ChemostatParams, reduced_rhs_ds
from .solver import PeriodicSolveResult, solve_periodic_state


@dataclass(frozen=True)
class BangBangControl:
    """Piecewise-constant law on ``[0, T)``.

    ``initial_high`` gives the level on ``(0, switch_times[0])``; each switch
    toggles the level. A constant law has no switches and value ``level``.
    """

    D_min: float
    D_max: float
    T: float
    switch_times: tuple[float, ...] = ()
    initial_high: bool = False
    constant: bool = False
    level: float | None = None
    resolution: float = 0.0

    def __post_init__(self):
        xi = tuple(float(x) for x in self.switch_times)
        object.__setattr__(self, "switch_times", xi)
        if len(xi) % 2:
            raise StructureError("a periodic two-level law needs an even switch count",
                                 {"switch_times": xi})
        if any(not (0.0 <= x < self.T) for x in xi) or any(
                b <= a for a, b in zip(xi, xi[1:])):
            raise StructureError("switch times must be increasing within [0, T)",
                                 {"switch_times": xi})
        if self.constant and xi:
            raise StructureError("a constant law has no switches")

    @property
    def switch_count(self) -> int:
        return len(self.switch_times)

    def high_intervals(self) -> list[tuple[float, float]]:
        """High-level intervals, split at ``t = 0`` if they wrap."""
        if self.constant or not self.switch_times:
            return [(0.0, self.T)] if self.initial_high and not self.constant else []
        edges = (0.0, *self.switch_times, self.T)
        out = []
        high = self.initial_high
        for a, b in zip(edges, edges[1:]):
            if high and b > a:
                out.append((a, b))
            high = not high
        return out

    def high_time(self) -> float:
        if self.constant:
            return float("nan")
        return float(sum(b - a for a, b in self.high_intervals()))

    def mean(self) -> float:
        if self.constant:
            return float(self.level)
        H = self.high_time()
        return (self.D_max * H + self.D_min * (self.T - H)) / self.T

    def __call__(self, t):
        t = np.mod(np.asarray(t, dtype=float), self.T)
        if self.constant:
            return np.full(t.shape, self.level)[()]
        count = np.searchsorted(np.asarray(self.switch_times), t, side="right")
        high = (count % 2 == 0) == self.initial_high
        return np.where(high, self.D_max, self.D_min)[()]


def _crossings(D_pred: Profile, mid: float, oversample: int = 8):
    grid = D_pred.grid
    fine = grid.T * np.arange(oversample * grid.N) / (oversample * grid.N)
    g = evaluate(D_pred, fine) - mid

    def f(t):
        return float(evaluate(D_pred, t)) - mid

    roots = []
    for j in np.nonzero(np.sign(g) != np.sign(np.roll(g, -1)))[0]:
        a = fine[j]
        b = fine[j + 1] if j + 1 < fine.size else grid.T
        if g[j] == 0.0:
            roots.append(a)
            continue
        roots.append(scipy.optimize.brentq(f, a, b, xtol=1e-10, rtol=1e-14))
    return np.mod(np.array(roots), grid.T)


def _merge(xi, T, gap):
    """Drop adjacent crossing pairs closer than ``gap`` (circular distance)."""
    xi = sorted(xi)
    while len(xi) >= 2:
        n = len(xi)
        d = [(xi[(i + 1) % n] - xi[i]) % T for i in range(n)]
        i = int(np.argmin(d))
        if d[i] >= gap:
            break
        for k in sorted({i, (i + 1) % n}, reverse=True):
            del xi[k]
    return xi


def detect_switches(D_pred, params: ChemostatParams) -> BangBangControl:
    """Locate level changes of a predicted control."""
    if not isinstance(D_pred, Profile):
        D_pred = Profile(PeriodicGrid(params.T, len(D_pred)), D_pred)
    grid = D_pred.grid
    mid = 0.5 * (params.D_min + params.D_max)

    if np.ptp(D_pred.values) <= 1e-9 * (params.D_max - params.D_min) + 1e-14:
        raw = np.array([])
    else:
        raw = _crossings(D_pred, mid)
    xi = _merge(list(raw), grid.T, 2 * grid.spacing)
    if len(xi) % 2:
        raise StructureError("odd number of level crossings",
                             {"crossings": list(raw), "merged": xi})
    if not xi:
        return BangBangControl(params.D_min, params.D_max, grid.T,
                               constant=True, level=params.D_bar,
                               resolution=grid.spacing)

    # level on the wrap-around interval, sampled away from its edges
    a, b = xi[-1], xi[0] + grid.T
    probe = 0.5 * (a + b) % grid.T
    high_at_probe = float(evaluate(D_pred, probe)) > mid
    return BangBangControl(params.D_min, params.D_max, grid.T, tuple(xi),
                           initial_high=high_at_probe,
                           resolution=grid.spacing)


def mean_adjust(bb: BangBangControl, params: ChemostatParams,
                max_shift: float | None = None) -> BangBangControl:
    """Move the last switch so the law has mean ``D_bar`` exactly."""
    if bb.constant:
        return replace(bb, level=params.D_bar)
    if max_shift is None:
        max_shift = 2 * bb.resolution if bb.resolution > 0 else np.inf

    target = bb.T * (params.D_bar - bb.D_min) / (bb.D_max - bb.D_min)
    deficit = target - bb.high_time()
    if deficit == 0.0:
        return bb

    xi = list(bb.switch_times)
    # moving the last switch later stretches the level in force before it
    before_high = not bb.initial_high
    shift = deficit if before_high else -deficit
    if abs(shift) > max_shift:
        raise StructureError("mean restoration needs too large a switch shift",
                             {"shift": shift, "limit": max_shift})

    new = xi[-1] + shift
    initial_high = bb.initial_high
    if new >= bb.T:
        new -= bb.T
        xi = [new] + xi[:-1]
        initial_high = not initial_high
    elif len(xi) > 1 and new <= xi[-2]:
        raise StructureError("mean restoration would reorder switches",
                             {"switch_times": xi, "shift": shift})
    else:
        xi[-1] = new
    if len(xi) > 1 and xi[0] >= xi[1]:
        raise StructureError("mean restoration would reorder switches",
                             {"switch_times": xi, "shift": shift})
    return replace(bb, switch_times=tuple(xi), initial_high=initial_high)


def reconstruct(bb: BangBangControl, grid: PeriodicGrid, mode: str = "sample") -> Profile:
    """Sample the law on ``grid``.

    ``mode="sample"`` takes point values (two levels only); ``mode="average"``
    takes cell averages over ``[t_j - h/2, t_j + h/2)``, which is continuous
    in the switch times and is used by :func:`refine_switches`.
    """
    t = grid.nodes
    if mode == "sample" or bb.constant:
        return Profile(grid, np.broadcast_to(bb(t), t.shape))
    if mode != "average":
        raise ValueError(f"unknown reconstruction mode {mode!r}")

    h = grid.spacing
    lo, hi = t - h / 2, t + h / 2
    frac = np.zeros_like(t)
    for a, b in bb.high_intervals():
        for off in (-bb.T, 0.0, bb.T):
            frac += np.clip(np.minimum(hi, b + off) - np.maximum(lo, a + off), 0, None)
    frac /= h
    return Profile(grid, bb.D_min + (bb.D_max - bb.D_min) * frac)


def correct_state(params: ChemostatParams, bb: BangBangControl, s_pred,
                  tol: float = 1e-10, mode: str = "sample") -> PeriodicSolveResult:
    """Re-solve the periodic state for the reconstructed law, seeded by ``s_pred``."""
    if not isinstance(s_pred, Profile):
        s_pred = Profile(PeriodicGrid(params.T, len(s_pred)), s_pred)
    D = reconstruct(bb, s_pred.grid, mode)
    return solve_periodic_state(params, D, s_pred, tol=tol)


def refine_switches(params: ChemostatParams, bb: BangBangControl, s_guess: Profile,
                    tol: float = 1e-4, maxiter: int = 200):
    """Coordinate search over the switch times at fixed count.

    The last switch is slaved to the mean constraint; the objective is the
    mean of the periodic state under the cell-averaged law.
    """
    if bb.constant or bb.switch_count == 0:
        return bb
    grid = s_guess.grid
    state = {"s": s_guess}

    def objective(xi_free):
        cand = _with_free(bb, params, xi_free)
        if cand is None:
            return np.inf
        try:
            res = correct_state(params, cand, state["s"], mode="average")
        except NumericalError:
            return np.inf
        state["s"] = res.state
        return res.state.mean()

    x = np.array(bb.switch_times[:-1])
    best = objective(x)
    step = grid.spacing
    it = 0
    while step >= tol and it < maxiter:
        improved = False
        for k in range(x.size):
            for sgn in (1.0, -1.0):
                trial = x.copy()
                trial[k] += sgn * step
                val = objective(trial)
                it += 1
                if val < best:
                    x, best, improved = trial, val, True
                    break
        if not improved:
            step *= 0.5
    return _with_free(bb, params, x)


def _with_free(bb, params, xi_free):
    xi = list(xi_free) + [bb.switch_times[-1]]
    try:
        cand = replace(bb, switch_times=tuple(xi))
        return mean_adjust(cand, params, max_shift=np.inf)
    except StructureError:
        return None


# {{{ optimality conditions


@dataclass(frozen=True)
class CostateProfile:
    """Periodic co-state samples with the residual of their linear system."""

    p: Profile
    residual: float
    convention: str
    condition: float

    @property
    def values(self):
        return self.p.values


def _costate_system(params, s, D, convention):
    s = np.asarray(s, dtype=float)
    D = np.asarray(D, dtype=float)
    n = s.size
    MR = multiplier_table(params.T, n, params.alpha, params.L).matrix(RIGHT)
    c = -reduced_rhs_ds(s, D, params)
    if convention == "hamiltonian":
        return MR - np.diag(c), np.full(n, -1.0 / params.T)
    if convention == "adjoint":
        return MR + np.diag(c), np.full(n, 1.0 / params.T)
    raise ValueError(f"unknown co-state convention {convention!r}")


def solve_costate(params: ChemostatParams, s, D, convention: str = "hamiltonian",
                  tol: float = 1e-10) -> CostateProfile:
    """Solve the periodic co-state equation on the grid of ``s``.

    ``convention="hamiltonian"`` uses the equation from the Hamiltonian
    ``D_R p = -1/T + p (nu'(s)(s_in - s) + D - nu(s)) theta^(1-alpha)``.
    ``convention="adjoint"`` uses the exact adjoint of the linearised
    collocation system, ``D_R p = 1/T + p dF/ds``, whose product with
    ``dF/dD`` is the gradient of the mean substrate with respect to the
    control samples (up to the factor ``T/N``).
    """
    grid = s.grid if isinstance(s, Profile) else PeriodicGrid(params.T, len(s))
    A, b = _costate_system(params, s, D, convention)
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > 1e14:
        raise NumericalError("co-state system is singular", {"condition": cond})
    lu = scipy.linalg.lu_factor(A)
    p = scipy.linalg.lu_solve(lu, b)
    r = b - A @ p
    p = p + scipy.linalg.lu_solve(lu, r)
    residual = float(np.max(np.abs(A @ p - b)))
    if residual > tol:
        raise NumericalError("co-state residual above tolerance",
                             {"residual": residual, "condition": cond})
    return CostateProfile(Profile(grid, p), residual, convention, cond)


def costate_oracle_residual(params: ChemostatParams, s, D, costate: CostateProfile,
                            nodes=None) -> float:
    """Residual of the co-state equation with the operator evaluated by quadrature."""
    p = costate.p
    s = np.asarray(s, dtype=float)
    D = np.asarray(D, dtype=float)
    idx = np.arange(p.grid.N) if nodes is None else np.asarray(nodes)
    c = -reduced_rhs_ds(s, D, params)

    def dp(t):
        return float(evaluate(p, t, derivative=1))

    worst = 0.0
    for j in idx:
        t = p.grid.nodes[j]
        lhs = direct_cfds(dp, t, params.alpha, params.L, side=RIGHT)
        if costate.convention == "hamiltonian":
            rhs = -1.0 / params.T + p.values[j] * c[j]
        else:
            rhs = 1.0 / params.T - p.values[j] * c[j]
        worst = max(worst, abs(lhs - rhs))
    return worst


def switching_function(params: ChemostatParams, s, p) -> Profile:
    """``phi = p theta^(1-alpha) (s_in - s)``, the coefficient of D in the Hamiltonian."""
    pv = p.values if isinstance(p, (Profile, CostateProfile)) else np.asarray(p, float)
    sv = np.asarray(s, dtype=float)
    grid = s.grid if isinstance(s, Profile) else PeriodicGrid(params.T, sv.size)
    return Profile(grid, pv * params.scale * (params.s_in - sv))


@dataclass(frozen=True)
class ConsistencyReport:
    fraction: float
    flipped_fraction: float
    orientation: str
    checked_nodes: int
    eta: float

    @property
    def best(self) -> float:
        return max(self.fraction, self.flipped_fraction)


def duty_cycle_shift(phi, params: ChemostatParams) -> float:
    """Constant added to ``phi`` so that ``phi + eta < 0`` on the high-time fraction.

    This stands in for the multiplier of the mean-dilution constraint, which
    enters the Hamiltonian as a constant times D.
    """
    frac = (params.D_bar - params.D_min) / (params.D_max - params.D_min)
    v = np.sort(np.asarray(phi, dtype=float))
    k = int(np.clip(np.floor(frac * v.size), 1, v.size - 1))
    return -0.5 * float(v[k - 1] + v[k])


def pmp_consistency(phi, D, params: ChemostatParams, switch_times=(),
                    eta: float = 0.0, exclude: float = 2.0) -> ConsistencyReport:
    """Fraction of nodes where the active level minimises ``(phi + eta) D``.

    Nodes within ``exclude`` grid spacings of a switch are skipped. The check
    is reported for both signs of ``phi``; the better one is the orientation.
    """
    phi = np.asarray(phi, dtype=float) + eta
    D = np.asarray(D, dtype=float)
    n = D.size
    h = params.T / n
    t = h * np.arange(n)
    keep = np.ones(n, dtype=bool)
    for xi in switch_times:
        d = np.abs((t - xi + params.T / 2) % params.T - params.T / 2)
        keep &= d > exclude * h

    high = np.abs(D - params.D_max) < np.abs(D - params.D_min)
    ok = np.where(high, phi < 0, phi > 0)
    bad = np.where(high, phi > 0, phi < 0)
    m = int(keep.sum())
    if m == 0:
        return ConsistencyReport(float("nan"), float("nan"), "none", 0, eta)
    f, g = float(ok[keep].mean()), float(bad[keep].mean())
    return ConsistencyReport(f, g, "stated" if f >= g else "flipped", m, eta)


# }}}
