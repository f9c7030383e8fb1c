"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class QGrowthError(Exception):
    """Base class for errors raised by the package."""


class ConfigurationError(QGrowthError, ValueError):
    """Invalid grid, scenario or solver configuration."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        prefix = ""
        if line is not None:
            prefix = f"line {line}: "
        super().__init__(prefix + message)


class ValidationError(QGrowthError, ValueError):
    """Coefficients violate a structural bound (ellipticity, positivity, ...)."""


class DomainError(QGrowthError, ValueError):
    """An argument lies outside the domain of a mathematical map."""

    def __init__(self, message: str, node: int | None = None):
        self.node = node
        super().__init__(message)


class SaturationError(DomainError):
    """An exponential would overflow; the caller should cap or reject the state."""


class UnsupportedReductionError(QGrowthError, ValueError):
    """The semilinear reduction does not apply to the given problem."""


class PreconditionError(QGrowthError):
    """Inputs fail a sign check that a routine requires before it can run."""


class ConvergenceError(QGrowthError, RuntimeError):
    """An inner solve failed; carries the diagnostic report when available."""

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)
