"""Optimal periodic control of a fractional-order chemostat with sliding memory."""

from .bangbang import (
    BangBangControl,
    CostateProfile,
    correct_state,
    detect_switches,
    mean_adjust,
    pmp_consistency,
    reconstruct,
    refine_switches,
    solve_costate,
    switching_function,
)
from .errors import (
    ConfigError,
    DomainError,
    FracChemostatError,
    InvalidParametersError,
    NonConvergenceError,
    NumericalError,
    ShapeError,
    StructureError,
    WashoutError,
)
from .fractional import (
    SpectralMultiplierTable,
    cfds_apply,
    direct_cfds,
    lambda_root,
    left_multiplier,
    right_multiplier,
)
from .grid import (
    ControlProfile,
    PeriodicGrid,
    Profile,
    StateProfile,
    from_modes,
    periodic_mean,
    resample,
    to_modes,
)
from .model import (
    BASELINE,
    ChemostatParams,
    Equilibrium,
    biomass_from_substrate,
    equilibrium,
    full_rhs,
    h_conversion,
    mu,
    nu,
    nu_prime,
    nu_second,
    reduced_rhs,
    s_hat,
)
from .opc import SolveReport, kkt_residual, multistart, solve_nlp, transcribe
from .solver import (
    PeriodicSolveResult,
    integral_balance_check,
    residuals_2d,
    solve_periodic_state,
)

__version__ = "0.1.0"
