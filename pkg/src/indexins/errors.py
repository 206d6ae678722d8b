"""Exception hierarchy shared by every module.

The CLI maps these onto process exit codes: ``ConfigError`` -> 2,
``DataError`` (and subclasses) -> 3, ``InfeasibleError`` -> 4.  Everything
else is an ordinary crash.
"""

from __future__ import annotations


class IndexInsError(Exception):
    """Base class for all package errors."""


class ConfigError(IndexInsError):
    """Invalid configuration value, hyperparameter or grid."""


class DomainError(IndexInsError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class BracketError(DomainError):
    """Root bracket does not enclose a sign change."""


class ConvergenceError(IndexInsError):
    """Iterative solver exhausted its iteration budget."""


class AlphaTooLargeError(DomainError):
    """Risk aversion would overflow exp(alpha * Y) on the sample.

    Carries the largest admissible value so callers can clamp or re-plan.
    """

    def __init__(self, alpha: float, alpha_max: float):
        super().__init__(
            f"risk aversion {alpha:g} exceeds the overflow guard; "
            f"largest admissible value on this sample is {alpha_max:.6g}"
        )
        self.alpha = alpha
        self.alpha_max = alpha_max


class DataError(IndexInsError):
    """Problems with the claims data or derived selections."""


class SchemaError(DataError):
    """Input file is missing a required column."""


class RowError(DataError):
    """A single data row failed to parse or violates a range invariant."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class EmptyDataError(DataError):
    """Input file contains no data rows."""


class EmptySelectionError(DataError):
    """A filter left no rows to work with."""


class DegenerateError(DataError):
    """Statistic undefined on this sample (constant target, zero variance)."""


class StateError(IndexInsError):
    """Operation requires a fitted model."""


class InfeasibleError(IndexInsError):
    """A solvency constraint cannot be met; reported, not fatal, where possible."""
