r"""Direct transcription of the periodic control problem.

Decision variables are the state and control samples on an ``N``-point grid.
The transcribed problem is

.. math::

    \min \frac1N \sum_j s_j
    \quad\text{s.t.}\quad
    (M s)_j = F(s_j, D_j),\quad \frac1N \sum_j D_j = \bar D,\quad
    D_{min} \le D_j \le D_{max},\quad 0 \le s_j \le s_{in},

with ``M`` the collocation matrix of the left operator. Optionally the state
is pinned, ``s_0 = \bar s``.

The optimiser works in the reduced space of the control: for each ``D`` the
state is the periodic solution, and the objective gradient follows from one
adjoint solve. Stationarity is then checked on the full problem.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import NonConvergenceError, NumericalError
from .fractional import LEFT, multiplier_table
from .grid import PeriodicGrid, Profile, resample
from .model import (
    ChemostatParams,
    reduced_rhs,
    reduced_rhs_dD,
    reduced_rhs_ds,
    s_bar,
)
from .solver import solve_periodic_state

MAXITER = 500


# {{{ transcription


@dataclass(frozen=True)
class TranscribedNlp:
    params: ChemostatParams
    grid: PeriodicGrid
    pin: bool = False

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def n_constraints(self) -> int:
        return self.N + 1 + int(self.pin)

    @property
    def matrix(self) -> np.ndarray:
        p = self.params
        return multiplier_table(p.T, self.N, p.alpha, p.L).matrix(LEFT)

    @property
    def s_bar(self) -> float:
        return s_bar(self.params)

    def split(self, z):
        z = np.asarray(z, dtype=float)
        return z[: self.N], z[self.N:]

    @staticmethod
    def join(s, D) -> np.ndarray:
        return np.concatenate([np.asarray(s, float), np.asarray(D, float)])

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        p, n = self.params, self.N
        lo = np.concatenate([np.zeros(n), np.full(n, p.D_min)])
        hi = np.concatenate([np.full(n, p.s_in), np.full(n, p.D_max)])
        return lo, hi

    def objective(self, z) -> float:
        return float(np.mean(self.split(z)[0]))

    def objective_gradient(self, z) -> np.ndarray:
        g = np.zeros(2 * self.N)
        g[: self.N] = 1.0 / self.N
        return g

    def constraints(self, z) -> np.ndarray:
        s, D = self.split(z)
        p = self.params
        out = [self.matrix @ s - reduced_rhs(0.0, s, D, p), [np.mean(D) - p.D_bar]]
        if self.pin:
            out.append([s[0] - self.s_bar])
        return np.concatenate(out)

    def jacobian(self, z) -> np.ndarray:
        s, D = self.split(z)
        p, n = self.params, self.N
        jac = np.zeros((self.n_constraints, 2 * n))
        jac[:n, :n] = self.matrix - np.diag(reduced_rhs_ds(s, D, p))
        jac[:n, n:] = -np.diag(reduced_rhs_dD(s, p))
        jac[n, n:] = 1.0 / n
        if self.pin:
            jac[n + 1, 0] = 1.0
        return jac

    def infeasibility(self, z) -> float:
        lo, hi = self.bounds()
        z = np.asarray(z, dtype=float)
        box = np.max(np.maximum(lo - z, 0) + np.maximum(z - hi, 0))
        return float(max(np.max(np.abs(self.constraints(z))), box))


def transcribe(params: ChemostatParams, grid: PeriodicGrid, pin: bool = False) -> TranscribedNlp:
    if abs(grid.T - params.T) > 1e-12 * params.T:
        raise ValueError("grid period differs from the model period")
    return TranscribedNlp(params, grid, pin)


def kkt_residual(nlp: TranscribedNlp, z, active_tol: float = 1e-9) -> float:
    """First-order stationarity error with least-squares multipliers.

    Equality multipliers are fitted on the variables strictly inside their
    bounds; variables at a bound contribute only if their reduced gradient
    has the wrong sign.
    """
    z = np.asarray(z, dtype=float)
    lo, hi = nlp.bounds()
    g = nlp.objective_gradient(z)
    A = nlp.jacobian(z)
    at_lo = z - lo <= active_tol * np.maximum(1.0, np.abs(lo))
    at_hi = hi - z <= active_tol * np.maximum(1.0, np.abs(hi))
    free = ~(at_lo | at_hi)

    y, *_ = np.linalg.lstsq(A[:, free].T, -g[free], rcond=None)
    r = g + A.T @ y
    err = np.zeros_like(r)
    err[free] = np.abs(r[free])
    err[at_lo] = np.maximum(-r[at_lo], 0.0)
    err[at_hi] = np.maximum(r[at_hi], 0.0)
    return float(np.max(err))


# }}}


# {{{ solve


@dataclass(frozen=True)
class SolveOptions:
    maxiter: int = MAXITER
    ftol: float = 1e-14
    tol_state: float = 1e-10
    tol_kkt: float = 1e-6
    tol_feas: float = 1e-8


@dataclass(frozen=True)
class SolveReport:
    objective: float
    improvement_pct: float
    kkt_residual: float
    infeasibility: float
    iterations: int
    wall_time: float
    seed: int
    N: int
    M: int
    converged: bool
    switch_times: tuple[float, ...] = ()
    message: str = ""
    start: int = 0


@dataclass(frozen=True)
class SolveResult:
    report: SolveReport
    state: Profile
    control: Profile
    history: tuple[float, ...] = field(default=(), repr=False)


def project_control(D, params: ChemostatParams) -> np.ndarray:
    """Closest point of the box with mean ``D_bar`` (a shifted clip)."""
    D = np.asarray(D, dtype=float)
    lo, hi = params.D_min, params.D_max

    def gap(c):
        return np.mean(np.clip(D + c, lo, hi)) - params.D_bar

    if gap(0.0) == 0.0 and np.all((D >= lo) & (D <= hi)):
        return D.copy()
    span = hi - lo
    c = scipy.optimize.brentq(gap, -span - np.max(D) + lo, span + hi - np.min(D),
                              xtol=1e-16, rtol=4 * np.finfo(float).eps)
    out = np.clip(D + c, lo, hi)
    # distribute the last rounding error over the interior samples
    inner = (out > lo) & (out < hi)
    if inner.any():
        out[inner] -= (np.mean(out) - params.D_bar) * out.size / inner.sum()
        out = np.clip(out, lo, hi)
    return out


class _ReducedProblem:
    """Objective and constraints as functions of the control alone."""

    def __init__(self, nlp: TranscribedNlp, s_guess, tol_state: float):
        self.nlp = nlp
        self.tol = tol_state
        self.s = np.array(s_guess, dtype=float)
        self.key = None
        self.lu = None
        self.history: list[float] = []

    def state(self, D):
        key = D.tobytes()
        if key != self.key:
            res = solve_periodic_state(self.nlp.params, D, self.s, tol=self.tol)
            self.s = np.array(res.state.values)
            p = self.nlp.params
            jac = self.nlp.matrix - np.diag(reduced_rhs_ds(self.s, D, p))
            self.lu = scipy.linalg.lu_factor(jac)
            self.key = key
        return self.s

    def _adjoint(self, D, rhs):
        self.state(D)
        lam = scipy.linalg.lu_solve(self.lu, rhs, trans=1)
        return lam * reduced_rhs_dD(self.s, self.nlp.params)

    def objective(self, D):
        val = float(np.mean(self.state(D)))
        self.history.append(val)
        return val

    def gradient(self, D):
        return self._adjoint(D, np.full(D.size, 1.0 / D.size))

    def pin(self, D):
        return np.array([self.state(D)[0] - self.nlp.s_bar])

    def pin_gradient(self, D):
        e0 = np.zeros(D.size)
        e0[0] = 1.0
        return self._adjoint(D, e0)[None, :]


def solve_nlp(nlp: TranscribedNlp, initial, opts: SolveOptions | None = None,
              *, seed: int = 0, M: int | None = None, start: int = 0) -> SolveResult:
    """Find a stationary point of the transcribed problem from ``initial``.

    ``initial`` is a pair ``(s, D)`` of samples. The control must lie in the
    box; it is projected onto the mean constraint first.
    """
    opts = opts or SolveOptions()
    p, n = nlp.params, nlp.N
    s0, D0 = (np.asarray(getattr(v, "values", v), dtype=float) for v in initial)
    if np.any(D0 < p.D_min - 1e-12) or np.any(D0 > p.D_max + 1e-12):
        raise ValueError("initial control outside its bounds")

    t_start = time.perf_counter()
    D0 = project_control(D0, p)
    prob = _ReducedProblem(nlp, np.clip(s0, 1e-9, p.s_in - 1e-9), opts.tol_state)

    cons = [{
        "type": "eq",
        "fun": lambda D: np.array([np.mean(D) - p.D_bar]),
        "jac": lambda D: np.full((1, n), 1.0 / n),
    }]
    if nlp.pin:
        cons.append({"type": "eq", "fun": prob.pin, "jac": prob.pin_gradient})

    steady = _is_stationary_start(nlp, prob, D0)
    if steady:
        D, nit, ok, msg = D0, 0, True, "initial point is stationary"
    else:
        try:
            with warnings.catch_warnings():
                warnings.filterwarnings("ignore", "Values in x were outside bounds")
                res = scipy.optimize.minimize(
                    prob.objective, D0, jac=prob.gradient, method="SLSQP",
                    bounds=[(p.D_min, p.D_max)] * n, constraints=cons,
                    options={"maxiter": opts.maxiter, "ftol": opts.ftol})
        except NonConvergenceError as exc:
            raise NonConvergenceError(
                "state solve failed inside the optimiser", exc.diagnostics) from exc
        # a line-search stop at a stationary point is accepted; the KKT test decides
        D, nit, msg = res.x, int(res.nit), str(res.message)
        ok = res.status != 9

    D = project_control(D, p)
    s = prob.state(D)
    z = nlp.join(s, D)
    kkt = kkt_residual(nlp, z)
    infeas = nlp.infeasibility(z)
    obj = nlp.objective(z)
    sb = nlp.s_bar
    converged = ok and infeas <= opts.tol_feas and kkt <= opts.tol_kkt

    report = SolveReport(
        objective=obj,
        improvement_pct=100.0 * (sb - obj) / sb,
        kkt_residual=kkt,
        infeasibility=infeas,
        iterations=nit,
        wall_time=time.perf_counter() - t_start,
        seed=seed,
        N=n,
        M=n if M is None else M,
        converged=converged,
        message=msg,
        start=start,
    )
    return SolveResult(report, Profile(nlp.grid, s), Profile(nlp.grid, D),
                       tuple(prob.history))


def _is_stationary_start(nlp, prob, D0):
    """The steady state is a KKT point; detect it to avoid a wasted solve."""
    p = nlp.params
    if not np.all(D0 == p.D_bar):
        return False
    s = prob.state(D0)
    z = nlp.join(s, D0)
    return kkt_residual(nlp, z) <= 1e-12


# }}}


# {{{ multistart


def sine_start(grid: PeriodicGrid, params: ChemostatParams, k: int) -> np.ndarray:
    eps = 0.3 * (params.D_max - params.D_bar)
    return params.D_bar + eps * np.sin(2 * np.pi * k * grid.nodes / grid.T)


def phase_align(result: SolveResult, params: ChemostatParams) -> tuple[np.ndarray, np.ndarray]:
    """Rotate a periodic pair so the state crosses ``s_bar`` upward at ``t = 0``.

    The unpinned problem is invariant under time shifts; this fixes the shift
    by the crossing nearest to the pinned condition ``s(0) = s_bar``. The
    rotation is by whole grid steps.
    """
    s = np.asarray(result.state.values)
    D = np.asarray(result.control.values)
    sb = s_bar(params)
    g = s - sb
    up = np.nonzero((g < 0) & (np.roll(g, -1) >= 0))[0]
    if up.size == 0:
        return s.copy(), D.copy()
    j = int(up[0])
    # choose the node closer to the crossing
    j = j + 1 if abs(g[(j + 1) % s.size]) < abs(g[j]) else j
    return np.roll(s, -j), np.roll(D, -j)


def multistart(params: ChemostatParams, grid: PeriodicGrid, perturbations: int = 3,
               seed: int = 0, *, pin: bool = True, coarse_N: int | None = 100,
               opts: SolveOptions | None = None, M: int | None = None) -> SolveResult:
    """Best stationary point from sinusoidal starts ``D_bar + eps sin(2 pi k t / T)``.

    Starts are first solved on a coarse grid when ``coarse_N`` is smaller
    than ``grid.N``; the best one is refined on ``grid``. With ``pin`` the
    refined solution is rotated to put the upward ``s_bar`` crossing at
    ``t = 0`` and re-solved with ``s_0 = s_bar`` imposed.

    Starts are deterministic; ``seed`` is recorded for provenance.
    """
    opts = opts or SolveOptions()
    t0 = time.perf_counter()
    sb = s_bar(params)

    if perturbations <= 0:
        nlp = transcribe(params, grid, pin=pin)
        D = np.full(grid.N, params.D_bar)
        res = solve_nlp(nlp, (np.full(grid.N, sb), D), opts, seed=seed, M=M)
        return res

    search = grid
    if coarse_N is not None and coarse_N < grid.N:
        search = PeriodicGrid(grid.T, coarse_N)
    nlp = transcribe(params, search, pin=False)

    results = []
    for k in range(1, perturbations + 1):
        D0 = sine_start(search, params, k)
        try:
            results.append(solve_nlp(nlp, (np.full(search.N, sb), D0), opts,
                                     seed=seed, M=M, start=k))
        except (NonConvergenceError, NumericalError):
            continue
    if not results:
        raise NonConvergenceError("no start produced a periodic solution",
                                  {"perturbations": perturbations})
    best = min(results, key=lambda r: (r.report.objective, r.report.start))
    k_best = best.report.start

    if search is not grid:
        D = project_control(np.clip(resample(best.control.values, grid.N),
                                    params.D_min, params.D_max), params)
        s = resample(best.state.values, grid.N)
        best = solve_nlp(transcribe(params, grid), (s, D), opts,
                         seed=seed, M=M, start=k_best)

    if pin:
        s, D = phase_align(best, params)
        best = solve_nlp(transcribe(params, grid, pin=True), (s, D), opts,
                         seed=seed, M=M, start=k_best)

    rep = best.report
    total = time.perf_counter() - t0
    return SolveResult(
        SolveReport(**{**rep.__dict__, "wall_time": total}),
        best.state, best.control, best.history)


# }}}
