r"""Caputo derivatives with sliding memory on periodic functions.

The left-sided operator of order :math:`0 < \alpha < 1` and memory length
:math:`L` is

.. math::

    {}_L D^\alpha_t f = \frac{1}{\Gamma(1-\alpha)}
        \int_0^L u^{-\alpha} f'(t - u) \,\mathrm{d}u,

and the right-sided one integrates :math:`f'(t + u)` with a leading minus
sign. Both act diagonally on :math:`e^{i\omega t}`, so on a periodic grid they
reduce to a table of Fourier multipliers. The quadrature routine
:func:`direct_cfds` evaluates the defining integral independently and is used
to check the multiplier path.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.optimize
import scipy.special

from .errors import DomainError, NumericalError, ShapeError

LEFT = "left"
RIGHT = "right"
_SIDES = (LEFT, RIGHT)

#: relative change allowed when doubling the quadrature order
QUADRATURE_TOL = 1e-12


def check_order(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha <= 1.0):
        raise DomainError(f"fractional order must lie in (0, 1], got {alpha}")
    return alpha


def check_memory(L: float) -> float:
    L = float(L)
    if not (np.isfinite(L) and L > 0.0):
        raise DomainError(f"memory length must be positive, got {L}")
    return L


def _check_side(side: str) -> str:
    if side not in _SIDES:
        raise DomainError(f"side must be 'left' or 'right', got {side!r}")
    return side


def gamma_factor(alpha: float) -> float:
    """Return :math:`\\Gamma(1 - \\alpha)` for ``alpha < 1``."""
    return float(scipy.special.gamma(1.0 - alpha))


# {{{ quadrature


def _jacobi_recurrence(n: int, a: float, b: float, x: np.ndarray):
    """Return ``P_n(x)`` and ``(1 - x^2) P_n'(x)`` for Jacobi polynomials."""
    p_prev = np.ones_like(x)
    if n == 0:
        return p_prev, np.zeros_like(x)

    p = (a + 1.0) + (a + b + 2.0) * (x - 1.0) / 2.0
    for k in range(2, n + 1):
        c = 2 * k + a + b
        p_prev, p = p, (
            (c - 1) * (c * (c - 2) * x + a * a - b * b) * p
            - 2 * (k + a - 1) * (k + b - 1) * c * p_prev
        ) / (2 * k * (k + a + b) * (c - 2))

    c = 2 * n + a + b
    dp = (n * ((a - b) - c * x) * p + 2 * (n + a) * (n + b) * p_prev) / c
    return p, dp


@lru_cache(maxsize=64)
def gauss_jacobi(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    r"""Gauss-Jacobi rule for the weight :math:`(1 - x)^a (1 + x)^b` on [-1, 1].

    Golub-Welsch nodes are polished by Newton's method on the three-term
    recurrence and the weights are rescaled to reproduce the exact moment.
    """
    if n < 1:
        raise DomainError("quadrature order must be positive")

    x, _ = scipy.special.roots_jacobi(n, a, b)
    for _ in range(8):
        p, q = _jacobi_recurrence(n, a, b, x)
        dx = p * (1.0 - x * x) / q
        x = x - dx
        if np.max(np.abs(dx)) < 4 * np.finfo(float).eps:
            break

    _, q = _jacobi_recurrence(n, a, b, x)
    gl = scipy.special.gammaln
    log_c = (
        (a + b + 1) * math.log(2.0)
        + gl(n + a + 1) + gl(n + b + 1) - gl(n + a + b + 1) - gl(n + 1)
    )
    w = np.exp(log_c) * (1.0 - x * x) / q**2
    moment = math.exp(
        (a + b + 1) * math.log(2.0) + gl(a + 1) + gl(b + 1) - gl(a + b + 2)
    )

    x.setflags(write=False)
    w = w * (moment / np.sum(w))
    w.setflags(write=False)
    return x, w


def window_rule(
    alpha: float, L: float, rate: float, order: int
) -> tuple[np.ndarray, np.ndarray]:
    r"""Nodes and weights for :math:`\int_0^L u^{-\alpha} g(u)\,du`.

    The first panel carries the singular weight through a Gauss-Jacobi rule;
    the remaining panels are smooth and use Gauss-Legendre. Panels are at most
    half a period of :math:`e^{i \cdot rate \cdot u}` wide.
    """
    width = L if rate <= 0 else min(L, math.pi / rate)
    npanels = max(1, math.ceil(L / width - 1e-12))
    width = L / npanels

    xj, wj = gauss_jacobi(order, 0.0, -alpha)
    nodes = [width * (1.0 + xj) / 2.0]
    weights = [wj * (width / 2.0) ** (1.0 - alpha)]

    if npanels > 1:
        xl, wl = np.polynomial.legendre.leggauss(order)
        left = width * np.arange(1, npanels)[:, None]
        u = (left + width * (1.0 + xl) / 2.0).ravel()
        nodes.append(u)
        weights.append(np.tile(wl * width / 2.0, npanels - 1) * u ** (-alpha))

    return np.concatenate(nodes), np.concatenate(weights)


def _doubling(evaluate: Callable[[int], np.ndarray], what: str) -> np.ndarray:
    order = 8
    prev = evaluate(order)
    while order < 512:
        order *= 2
        cur = evaluate(order)
        change = np.max(np.abs(cur - prev) / np.maximum(1.0, np.abs(cur)))
        if change <= QUADRATURE_TOL:
            return cur
        prev = cur

    raise NumericalError(
        f"{what}: quadrature did not settle", {"order": order, "change": change}
    )


def window_integral(omega, alpha: float, L: float) -> np.ndarray:
    r"""Return :math:`\int_0^L u^{-\alpha} e^{-i\omega u}\,du` for each omega."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if not np.all(np.isfinite(omega)):
        raise DomainError("angular frequency must be finite")

    rate = float(np.max(np.abs(omega))) if omega.size else 0.0

    def evaluate(order):
        u, w = window_rule(alpha, L, rate, order)
        out = np.empty(omega.shape, dtype=complex)
        # chunked to bound the size of the phase matrix
        chunk = max(1, 2**22 // u.size)
        for i in range(0, omega.size, chunk):
            out[i:i + chunk] = np.exp(-1j * np.outer(omega[i:i + chunk], u)) @ w
        return out

    return _doubling(evaluate, "window integral")


# }}}


# {{{ multipliers


def left_multiplier(omega, alpha: float, L: float):
    r"""Symbol :math:`m(\omega)` of the left operator, :math:`D e^{i\omega t} =
    m(\omega) e^{i\omega t}`.

    For ``alpha == 1`` this is the classical :math:`i\omega`.
    """
    alpha = check_order(alpha)
    L = check_memory(L)
    scalar = np.ndim(omega) == 0
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if not np.all(np.isfinite(omega)):
        raise DomainError("angular frequency must be finite")

    if alpha == 1.0:
        m = 1j * omega
    else:
        m = 1j * omega * window_integral(omega, alpha, L) / gamma_factor(alpha)
        m[omega == 0.0] = 0.0

    return complex(m[0]) if scalar else m


def right_multiplier(omega, alpha: float, L: float):
    """Symbol of the right operator; the complex conjugate of the left one."""
    return np.conj(left_multiplier(omega, alpha, L))


@dataclass(frozen=True)
class SpectralMultiplierTable:
    """Multipliers of both operators on the modes of an ``n``-point grid.

    Only the non-negative modes ``k = 0, ..., n/2`` are stored; negative modes
    follow by conjugation. At the Nyquist mode only the real part contributes
    to grid samples.
    """

    period: float
    n: int
    alpha: float
    L: float
    left: np.ndarray
    right: np.ndarray

    @classmethod
    def build(cls, period: float, n: int, alpha: float, L: float):
        if n < 2 or n % 2:
            raise ShapeError(f"grid size must be even, got {n}")
        omega = 2.0 * np.pi * np.arange(n // 2 + 1) / period
        left = left_multiplier(omega, alpha, L)
        right = np.conj(left)
        left.setflags(write=False)
        right.setflags(write=False)
        return cls(float(period), int(n), float(alpha), float(L), left, right)

    @property
    def omega(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n // 2 + 1) / self.period

    def multipliers(self, side: str = LEFT) -> np.ndarray:
        return self.left if _check_side(side) == LEFT else self.right

    @cached_property
    def left_matrix(self) -> np.ndarray:
        return self._circulant(self.left)

    @cached_property
    def right_matrix(self) -> np.ndarray:
        return self._circulant(self.right)

    def matrix(self, side: str = LEFT) -> np.ndarray:
        """Real ``n x n`` matrix acting on grid samples."""
        return self.left_matrix if _check_side(side) == LEFT else self.right_matrix

    def _circulant(self, m):
        mat = scipy.linalg.circulant(np.fft.irfft(m, self.n))
        mat.setflags(write=False)
        return mat


@lru_cache(maxsize=32)
def multiplier_table(period: float, n: int, alpha: float, L: float):
    """Cached :meth:`SpectralMultiplierTable.build`."""
    return SpectralMultiplierTable.build(period, n, alpha, L)


def cfds_apply(samples, table: SpectralMultiplierTable, side: str = LEFT):
    """Apply an operator to the trigonometric interpolant of ``samples``.

    Returns an array of the same length (or a :class:`~fracchemostat.grid.Profile`
    if one was given).
    """
    from .grid import Profile

    values = samples.values if isinstance(samples, Profile) else samples
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size != table.n:
        raise ShapeError(
            f"expected {table.n} samples, got shape {values.shape}")

    out = np.fft.irfft(table.multipliers(side) * np.fft.rfft(values), table.n)
    if isinstance(samples, Profile):
        return Profile(samples.grid, out)
    return out


# }}}


# {{{ quadrature oracle


def direct_cfds(
    fprime: Callable[[float], float],
    t: float,
    alpha: float,
    L: float,
    side: str = LEFT,
    *,
    epsabs: float = 1e-13,
    epsrel: float = 1e-13,
    limit: int = 2000,
):
    """Evaluate the operator at ``t`` from the derivative ``fprime``.

    The weight :math:`u^{-\\alpha}` is handled exactly by QUADPACK's algebraic
    weight routine. Complex-valued derivatives are integrated by parts.
    """
    alpha = check_order(alpha)
    L = check_memory(L)
    sign = 1.0 if _check_side(side) == LEFT else -1.0

    if alpha == 1.0:
        return sign * fprime(t)

    def integrand(u):
        return fprime(t - sign * u)

    complex_valued = np.iscomplexobj(np.asarray(integrand(0.5 * L)))
    parts = (np.real, np.imag) if complex_valued else (lambda z: z,)

    values = []
    for part in parts:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.integrate.IntegrationWarning)
            try:
                val, err = scipy.integrate.quad(
                    lambda u: float(part(integrand(u))), 0.0, L,
                    weight="alg", wvar=(-alpha, 0.0),
                    epsabs=epsabs, epsrel=epsrel, limit=limit,
                )
            except scipy.integrate.IntegrationWarning as exc:
                raise NumericalError(
                    "quadrature of the memory integral did not converge",
                    {"t": t, "alpha": alpha, "L": L, "reason": str(exc)},
                ) from exc
        values.append(val)

    value = complex(*values) if complex_valued else values[0]
    return sign * value / gamma_factor(alpha)


# }}}


# {{{ exponential decay rate


def psi(lam: float, alpha: float, L: float) -> float:
    r""":math:`\psi(\lambda) = \lambda \int_0^L u^{-\alpha} e^{\lambda u}\,du`."""
    lam = float(lam)

    def evaluate(order):
        u, w = window_rule(alpha, L, abs(lam), order)
        return np.array([np.exp(lam * u) @ w])

    return lam * float(_doubling(evaluate, "psi")[0])


def lambda_root(k: float, alpha: float, L: float) -> float:
    """Decay rate ``lam > 0`` with ``psi(lam) = k * Gamma(1 - alpha)``.

    Then ``exp(-lam t)`` solves ``D z = -k z``. The root is unique because
    ``psi`` increases from 0 to infinity on the positive axis.
    """
    k = float(k)
    if not (np.isfinite(k) and k > 0.0):
        raise DomainError(f"decay coefficient must be positive, got {k}")
    alpha = check_order(alpha)
    L = check_memory(L)
    if alpha == 1.0:
        return k

    target = k * gamma_factor(alpha)
    lo, hi = 1e-8, 1.0
    while psi(hi, alpha, L) < target:
        lo, hi = hi, 2.0 * hi

    if psi(lo, alpha, L) > target:
        # root below the default bracket, bisect toward zero
        while psi(lo, alpha, L) > target:
            hi, lo = lo, lo / 2.0

    root = scipy.optimize.brentq(
        lambda x: psi(x, alpha, L) - target, lo, hi,
        xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)

    residual = abs(psi(root, alpha, L) - target)
    if residual > 1e-10 * target:
        raise NumericalError(
            "decay-rate equation not solved to tolerance",
            {"root": root, "residual": residual, "target": target})

    return root


# }}}
