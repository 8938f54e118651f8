"""Equispaced periodic grids and trigonometric interpolation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError


@dataclass(frozen=True)
class PeriodicGrid:
    """``N`` equispaced nodes ``t_j = j T / N`` on one period."""

    T: float
    N: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise DomainError(f"period must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 8 or self.N % 2:
            raise ShapeError(f"grid size must be even and at least 8, got {self.N}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "N", int(self.N))

    @property
    def spacing(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        return self.T * np.arange(self.N) / self.N

    @property
    def omega(self) -> np.ndarray:
        """Angular frequencies of the non-negative modes."""
        return 2.0 * np.pi * np.arange(self.N // 2 + 1) / self.T

    def sample(self, f) -> "Profile":
        return Profile(self, np.asarray(f(self.nodes), dtype=float))


@dataclass(frozen=True, eq=False)
class Profile:
    """Real samples of a T-periodic function on a grid."""

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.N,):
            raise ShapeError(
                f"expected {self.grid.N} samples, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.grid.N

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    def mean(self) -> float:
        return periodic_mean(self)


StateProfile = Profile
ControlProfile = Profile


def _values(profile) -> np.ndarray:
    return profile.values if isinstance(profile, Profile) else np.asarray(profile, dtype=float)


def periodic_mean(profile) -> float:
    """Mean over one period (the trapezoid rule on equispaced periodic data)."""
    return float(np.mean(_values(profile)))


def to_modes(profile) -> np.ndarray:
    """Coefficients ``c_k``, ``k = 0..N/2``, with ``f(t) = sum c_k e^{i w_k t}``
    over all signed ``k``. The Nyquist coefficient is real."""
    values = _values(profile)
    n = values.size
    if n % 2:
        raise ShapeError("grid size must be even")
    c = np.fft.rfft(values) / n
    c[-1] = c[-1].real
    return c


def from_modes(coeffs, n: int | None = None) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=complex)
    if n is None:
        n = 2 * (coeffs.size - 1)
    return np.fft.irfft(coeffs * n, n)


def resample(profile, M: int):
    """Band-limited interpolation onto ``M`` equispaced nodes.

    The Nyquist mode of the source is split symmetrically as a cosine when
    upsampling; when downsampling the new Nyquist mode keeps its cosine part.
    """
    values = _values(profile)
    n = values.size
    M = int(M)
    if M % 2 or M < 2:
        raise ShapeError(f"target size must be even, got {M}")

    if M == n:
        return profile

    c = to_modes(values)
    out = np.zeros(M // 2 + 1, dtype=complex)
    if M >= n:
        out[: n // 2 + 1] = c
        if M > n:
            out[n // 2] = 0.5 * c[n // 2]
    else:
        out[:] = c[: M // 2 + 1]
        out[-1] = 2.0 * out[-1].real

    new = np.fft.irfft(out * M, M)
    if isinstance(profile, Profile):
        return Profile(PeriodicGrid(profile.grid.T, M), new)
    return new


def evaluate(profile, t, period: float | None = None, derivative: int = 0):
    """Evaluate the trigonometric interpolant (or a derivative) at times ``t``."""
    values = _values(profile)
    if period is None:
        if not isinstance(profile, Profile):
            raise DomainError("period required for raw sample arrays")
        period = profile.grid.T

    n = values.size
    c = to_modes(values)
    w = 2.0 * np.pi * np.arange(n // 2 + 1) / period
    weight = np.full(w.size, 2.0)
    weight[0] = 1.0
    weight[-1] = 1.0  # the Nyquist term is the real cosine c cos(w t)

    t = np.asarray(t, dtype=float)
    phase = np.exp(1j * np.multiply.outer(t, w))
    return (phase * (weight * c * (1j * w) ** derivative)).real.sum(axis=-1)
