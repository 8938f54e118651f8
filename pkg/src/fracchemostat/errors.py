"""Exception types raised across the package."""


class FracChemostatError(Exception):
    """Base class for all package errors."""


class DomainError(FracChemostatError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ShapeError(FracChemostatError, ValueError):
    """Array lengths or grids do not match."""


class InvalidParametersError(FracChemostatError, ValueError):
    """A parameter set violates the model invariants."""


class WashoutError(InvalidParametersError):
    """Dilution rate at or above the maximum growth rate."""


class NumericalError(FracChemostatError, RuntimeError):
    """A numerical routine failed to reach its accuracy target.

    ``diagnostics`` carries whatever the failing routine knew at the time.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class NonConvergenceError(NumericalError):
    """An iterative solver stopped without meeting its tolerance."""


class StructureError(NumericalError):
    """A detected control structure is inconsistent (e.g. odd switch count)."""


class ConfigError(FracChemostatError, ValueError):
    """A run configuration file is malformed."""
