r"""Chemostat with Contois growth under a sliding-memory fractional derivative.

With the biomass eliminated through :math:`x = Y (s_{in} - s)` the substrate
obeys

.. math::

    D^\alpha s = F(s, D) = \vartheta^{1-\alpha} (D - \nu(s)) (s_{in} - s),
    \qquad
    \nu(s) = \frac{\mu_{max} s}{K Y (s_{in} - s) + s}.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import DomainError, InvalidParametersError, WashoutError
from .fractional import check_memory, check_order


@dataclass(frozen=True)
class ChemostatParams:
    s_in: float = 8.0
    D_min: float = 0.02
    D_max: float = 1.95
    D_bar: float = 0.5
    mu_max: float = 2.0
    K: float = 5.0
    Y: float = 1.0
    T: float = 15.0
    alpha: float = 0.85
    L: float = 5.0
    theta: float = 0.25

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not np.isfinite(value):
                raise InvalidParametersError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, float(value))

        for name in ("s_in", "K", "Y", "theta", "T", "mu_max"):
            if getattr(self, name) <= 0:
                raise InvalidParametersError(f"{name} must be positive")
        if not (0 < self.D_min <= self.D_bar <= self.D_max):
            raise InvalidParametersError(
                "dilution levels must satisfy 0 < D_min <= D_bar <= D_max")
        if self.D_max >= self.mu_max:
            raise WashoutError(
                f"D_max={self.D_max} must stay below mu_max={self.mu_max}")
        try:
            check_order(self.alpha)
            check_memory(self.L)
        except DomainError as exc:
            raise InvalidParametersError(str(exc)) from exc

    @property
    def KY(self) -> float:
        return self.K * self.Y

    @property
    def scale(self) -> float:
        r""":math:`\vartheta^{1-\alpha}`."""
        return self.theta ** (1.0 - self.alpha)

    def replace(self, **changes) -> "ChemostatParams":
        return replace(self, **changes)


#: the numerical test problem used throughout
BASELINE = ChemostatParams()


@dataclass(frozen=True)
class Equilibrium:
    s_bar: float
    x_bar: float


def mu(s, x, params: ChemostatParams):
    """Contois rate; ``mu(0, 0)`` is taken as 0 (the limit along ``s -> 0``)."""
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(s < 0) or np.any(x < 0):
        raise DomainError("concentrations must be non-negative")
    den = params.K * x + s
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, params.mu_max * s / np.where(den > 0, den, 1.0), 0.0)
    return out[()] if out.ndim == 0 else out


def _check_s(s, params):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(s > params.s_in) or not np.all(np.isfinite(s)):
        raise DomainError(f"substrate must lie in [0, {params.s_in}]")
    return s


def _den(s, params):
    return params.KY * (params.s_in - s) + s


def _out(x):
    return x[()] if np.ndim(x) == 0 else x


def nu(s, params: ChemostatParams):
    s = _check_s(s, params)
    return _out(params.mu_max * s / _den(s, params))


def nu_prime(s, params: ChemostatParams):
    s = _check_s(s, params)
    return _out(params.KY * params.mu_max * params.s_in / _den(s, params) ** 2)


def nu_second(s, params: ChemostatParams):
    s = _check_s(s, params)
    p = params
    return _out(2 * p.KY * p.mu_max * p.s_in * (p.KY - 1) / _den(s, p) ** 3)


def h_conversion(s, params: ChemostatParams):
    """Conversion rate ``nu(s) (s_in - s)``."""
    s = _check_s(s, params)
    return _out(nu(s, params) * (params.s_in - s))


def s_hat(params: ChemostatParams) -> float:
    """Maximiser of :func:`h_conversion` on ``[0, s_in]``."""
    r = math.sqrt(params.KY)
    return params.s_in * r / (r + 1.0)


def equilibrium(params: ChemostatParams, D_bar: float | None = None) -> Equilibrium:
    D = params.D_bar if D_bar is None else float(D_bar)
    if D >= params.mu_max:
        raise WashoutError(f"dilution {D} washes out the culture (mu_max={params.mu_max})")
    if D < 0:
        raise DomainError("dilution rate must be non-negative")
    p = params
    s_bar = D * p.KY * p.s_in / (D * p.KY + p.mu_max - D)
    return Equilibrium(s_bar, p.Y * (p.s_in - s_bar))


def s_bar(params: ChemostatParams) -> float:
    return equilibrium(params).s_bar


# {{{ right-hand sides


def reduced_rhs(t, s, D, params: ChemostatParams):
    """``F(s, D)``; ``t`` is accepted for signature symmetry only."""
    s = _check_s(s, params)
    return _out(params.scale * (D - nu(s, params)) * (params.s_in - s))


def reduced_rhs_ds(s, D, params: ChemostatParams):
    s = _check_s(s, params)
    v = nu(s, params)
    return _out(-params.scale * (nu_prime(s, params) * (params.s_in - s) + D - v))


def reduced_rhs_dD(s, params: ChemostatParams):
    s = _check_s(s, params)
    return _out(params.scale * (params.s_in - s))


def reduced_rhs_dss(s, params: ChemostatParams):
    s = _check_s(s, params)
    return _out(params.scale * (2 * nu_prime(s, params)
                                - nu_second(s, params) * (params.s_in - s)))


def full_rhs(t, s, x, D, params: ChemostatParams):
    """Both components of the two-state system."""
    m = mu(s, x, params)
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    ds = params.scale * (-m * x / params.Y + D * (params.s_in - s))
    dx = params.scale * (m - D) * x
    return _out(ds), _out(dx)


def biomass_from_substrate(s, params: ChemostatParams):
    from .grid import Profile

    if isinstance(s, Profile):
        return Profile(s.grid, params.Y * (params.s_in - _check_s(s.values, params)))
    return _out(params.Y * (params.s_in - _check_s(s, params)))


# }}}
