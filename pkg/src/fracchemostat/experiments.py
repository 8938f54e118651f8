"""Run configuration, the predictor-corrector pipeline and experiment drivers."""

from __future__ import annotations

import hashlib
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .bangbang import (
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
from .errors import ConfigError, FracChemostatError, InvalidParametersError
from .grid import PeriodicGrid, Profile, resample
from .model import ChemostatParams, biomass_from_substrate, s_bar
from .opc import SolveOptions, SolveResult, multistart
from .solver import PeriodicSolveResult, residuals_2d
from . import verification

PARAM_KEYS = tuple(f.name for f in fields(ChemostatParams))
RUN_KEYS = ("N", "M", "tol_state", "tol_kkt", "multistarts", "seed", "outdir")
SWEEPABLE = ("alpha", "L", "theta", "T")


# {{{ configuration


@dataclass(frozen=True)
class RunConfig:
    params: ChemostatParams = ChemostatParams()
    N: int = 300
    M: int = 400
    tol_state: float = 1e-10
    tol_kkt: float = 1e-6
    multistarts: int = 3
    seed: int = 0
    outdir: str = "out"

    def __post_init__(self):
        if self.N < 8 or self.N % 2:
            raise ConfigError(f"N must be even and at least 8, got {self.N}")
        if self.M < self.N or self.M % 2:
            raise ConfigError(f"M must be even and at least N, got {self.M}")
        if self.multistarts < 0:
            raise ConfigError("multistarts must be non-negative")

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        values: dict[str, str] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in PARAM_KEYS and key not in RUN_KEYS:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            values[key] = value
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values) -> "RunConfig":
        unknown = set(values) - set(PARAM_KEYS) - set(RUN_KEYS)
        if unknown:
            raise ConfigError(f"unknown keys: {sorted(unknown)}")
        try:
            pk = {k: float(values[k]) for k in PARAM_KEYS if k in values}
            run = {}
            for k in ("N", "M", "multistarts", "seed"):
                if k in values:
                    v = float(values[k])
                    if v != int(v):
                        raise ConfigError(f"{k} must be an integer")
                    run[k] = int(v)
            for k in ("tol_state", "tol_kkt"):
                if k in values:
                    run[k] = float(values[k])
            if "outdir" in values:
                run["outdir"] = str(values["outdir"])
            return cls(ChemostatParams(**pk), **run)
        except InvalidParametersError as exc:
            raise ConfigError(str(exc)) from exc
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        return cls.from_text(text)

    def to_text(self) -> str:
        items = {**asdict(self.params), **{k: getattr(self, k) for k in RUN_KEYS}}
        return "".join(f"{k} = {_fmt(v) if isinstance(v, float) else v}\n"
                       for k, v in items.items())

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def with_param(self, name: str, value: float) -> "RunConfig":
        return replace(self, params=self.params.replace(**{name: value}))

    @property
    def options(self) -> SolveOptions:
        return SolveOptions(tol_state=self.tol_state, tol_kkt=self.tol_kkt)


def _fmt(x) -> str:
    return format(float(x), ".17g")


# }}}


# {{{ pipeline


@dataclass(frozen=True)
class PipelineResult:
    config: RunConfig
    predicted: SolveResult
    control: BangBangControl
    corrected: PeriodicSolveResult
    corrected_control: Profile

    @property
    def s_av(self) -> float:
        return self.corrected.state.mean()

    @property
    def improvement_pct(self) -> float:
        sb = s_bar(self.config.params)
        return 100.0 * (sb - self.s_av) / sb

    @property
    def switch_times(self) -> tuple[float, ...]:
        return self.control.switch_times

    @property
    def converged(self) -> bool:
        return self.predicted.report.converged and self.corrected.converged


def run_pipeline(config: RunConfig, refine: bool = False) -> PipelineResult:
    """Predict on ``N`` points, rebuild a two-level law, correct on ``M`` points."""
    p = config.params
    grid = PeriodicGrid(p.T, config.N)
    pred = multistart(p, grid, config.multistarts, config.seed,
                      opts=config.options, M=config.M)

    bb = mean_adjust(detect_switches(pred.control, p), p)
    s_guess = resample(pred.state, config.M)
    if refine:
        bb = refine_switches(p, bb, s_guess)
    corr = correct_state(p, bb, s_guess, tol=config.tol_state)
    D_corr = reconstruct(bb, s_guess.grid)

    rep = replace(pred.report, switch_times=bb.switch_times)
    pred = replace(pred, report=rep)
    return PipelineResult(config, pred, bb, corr, D_corr)


def _run_row(args):
    config, refine = args
    try:
        return run_pipeline(config, refine)
    except FracChemostatError as exc:
        return exc


def map_configs(configs, refine=False, workers: int = 1):
    """Run pipelines in order; ``workers > 1`` uses separate processes."""
    jobs = [(c, refine) for c in configs]
    if workers <= 1 or len(jobs) <= 1:
        return [_run_row(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_row, jobs))


# }}}


# {{{ csv output


def csv_text(config: RunConfig, header, rows) -> str:
    out = io.StringIO()
    out.write(f"# config_hash={config.config_hash()} seed={config.seed}\n")
    out.write(",".join(header) + "\n")
    for row in rows:
        out.write(",".join(_cell(v) for v in row) + "\n")
    return out.getvalue()


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    if isinstance(v, (tuple, list)):
        return ";".join(_cell(x) for x in v)
    return str(v)


def write_csv(path, config: RunConfig, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(csv_text(config, header, rows))
    return path


def write_solve_outputs(result: PipelineResult, outdir=None) -> list[Path]:
    cfg = result.config
    outdir = Path(outdir or cfg.outdir)
    s_pred = resample(result.predicted.state, cfg.M)
    D_pred = resample(result.predicted.control, cfg.M)
    s_corr = result.corrected.state
    x_corr = biomass_from_substrate(s_corr, cfg.params)
    t = s_corr.grid.nodes

    prof = write_csv(
        outdir / "profiles.csv", cfg,
        ("t", "s_pred", "D_pred", "s_corr", "D_corr", "x_corr"),
        zip(t, s_pred.values, D_pred.values, s_corr.values,
            result.corrected_control.values, x_corr.values))

    rep = result.predicted.report
    rows = [
        ("s_av", result.s_av),
        ("improvement_pct", result.improvement_pct),
        ("s_av_predicted", rep.objective),
        ("s_bar", s_bar(cfg.params)),
        ("kkt_residual", rep.kkt_residual),
        ("infeasibility", rep.infeasibility),
        ("state_residual", result.corrected.residual_norm),
        ("switch_count", result.control.switch_count),
        ("switch_times", result.switch_times),
        ("iterations", rep.iterations),
        ("best_start", rep.start),
        ("seed", rep.seed),
        ("N", cfg.N),
        ("M", cfg.M),
        ("converged", result.converged),
    ]
    report = write_csv(outdir / "report.csv", cfg, ("key", "value"), rows)
    return [prof, report]


# }}}


# {{{ experiments


SWEEP_HEADER = ("param", "value", "s_av", "improvement_pct", "switch_count",
                "switch_times", "s_av_predicted", "converged")


def run_sweep(config: RunConfig, param: str, values, workers: int = 1,
              refine: bool = False):
    """One pipeline per value, rows ordered by value."""
    if param not in SWEEPABLE:
        raise ConfigError(f"cannot sweep {param!r}; choose from {SWEEPABLE}")
    values = sorted(float(v) for v in values)
    configs = [config.with_param(param, v) for v in values]
    results = map_configs(configs, refine, workers)
    rows = []
    for v, res in zip(values, results):
        if isinstance(res, Exception):
            rows.append((param, v, float("nan"), float("nan"), 0, (), float("nan"), False))
        else:
            rows.append((param, v, res.s_av, res.improvement_pct,
                         res.control.switch_count, res.switch_times,
                         res.predicted.report.objective, res.converged))
    return rows, results


CONVERGENCE_HEADER = ("N", "l2_error_s", "abs_error_J", "switch_times",
                      "switch_shift", "l2_error_s_corr", "abs_error_J_corr")


def run_convergence(config: RunConfig, N_list=(100, 200, 300), reference_N=400,
                    workers: int = 1):
    """Errors of the predicted state and objective against a fine reference.

    All states are compared on the common ``M``-point grid, with ``M`` raised
    to the reference size if needed.
    """
    N_all = sorted(set(int(n) for n in N_list) | {int(reference_N)})
    M = max(config.M, *N_all)
    configs = [replace(config, N=n, M=M) for n in N_all]
    results = dict(zip(N_all, map_configs(configs, False, workers)))
    for n, r in results.items():
        if isinstance(r, Exception):
            raise r

    ref = results[reference_N]
    s_ref = resample(ref.predicted.state, M).values
    rows = []
    for n in N_all:
        r = results[n]
        s_n = resample(r.predicted.state, M).values
        l2 = float(np.sqrt(np.mean((s_n - s_ref) ** 2)))
        dj = abs(r.predicted.report.objective - ref.predicted.report.objective)
        l2c = float(np.sqrt(np.mean((r.corrected.state.values
                                     - ref.corrected.state.values) ** 2)))
        djc = abs(r.s_av - ref.s_av)
        if r.control.switch_count == ref.control.switch_count:
            shift = float(np.max(np.abs(np.subtract(r.switch_times, ref.switch_times)),
                                 initial=0.0))
        else:
            shift = float("inf")
        rows.append((n, l2, dj, r.switch_times, shift, l2c, djc))
    return rows, results


def run_verify(config: RunConfig, rng_seed: int | None = None):
    """Invariant checks that do not need an optimisation run."""
    seed = config.seed if rng_seed is None else rng_seed
    return verification.run_all(config.params, seed=seed)


def pmp_check(result: PipelineResult, n_oracle: int = 16) -> dict:
    """Co-state solves and switching-function consistency on a corrected solution."""
    p = result.config.params
    s = result.corrected.state
    D = result.corrected_control
    out = {}
    for convention in ("hamiltonian", "adjoint"):
        cs = solve_costate(p, s, D, convention=convention)
        nodes = np.linspace(0, s.grid.N, n_oracle, endpoint=False).astype(int)
        phi = switching_function(p, s, cs.p)
        plain = pmp_consistency(phi.values, D.values, p, result.switch_times)
        eta = duty_cycle_shift(phi.values, p)
        shifted = pmp_consistency(phi.values, D.values, p, result.switch_times, eta=eta)
        out[convention] = {
            "linear_residual": cs.residual,
            "oracle_residual": costate_oracle_residual(p, s, D, cs, nodes),
            "consistency": plain.fraction,
            "consistency_flipped": plain.flipped_fraction,
            "orientation": plain.orientation,
            "eta": eta,
            "consistency_with_eta": shifted.fraction,
            "checked_nodes": plain.checked_nodes,
            "p_min": float(cs.values.min()),
            "p_max": float(cs.values.max()),
        }
    return out


def residual_check(result: PipelineResult) -> tuple[float, float]:
    p = result.config.params
    s = result.corrected.state.values
    x = biomass_from_substrate(s, p)
    rs, rx = residuals_2d(p, s, x, result.corrected_control.values)
    return float(np.max(np.abs(rs))), float(np.max(np.abs(rx)))


# }}}


def default_workers() -> int:
    return max(1, min(4, os.cpu_count() or 1))
