"""Exception hierarchy.

Every error carries a short machine-readable ``category`` string that the CLI
reports on exit, so scripted callers can branch on failure modes without
parsing prose.
"""

from __future__ import annotations


class Tfim2dError(Exception):
    """Base class for all package errors."""

    category = "error"


class InvalidSizeError(Tfim2dError):
    category = "invalid-size"


class ScheduleError(Tfim2dError):
    category = "schedule"


class DomainError(Tfim2dError):
    """Schedule evaluated outside its time domain."""

    category = "domain"


class ComparisonError(Tfim2dError):
    """Two observable series cannot be compared (mismatched lattice or times)."""

    category = "comparison"


class UndefinedReferenceError(Tfim2dError):
    """Relative correlation discrepancy requested against a zero reference."""

    category = "undefined-reference"


class MemoryGuardError(Tfim2dError):
    category = "memory-guard"


class PropagationError(Tfim2dError):
    """Krylov/Lanczos exponential failed to converge."""

    category = "propagation"


class BPConvergenceError(Tfim2dError):
    """Belief propagation did not reach its fixed point.

    Carries the last residual so callers can report how far off it was.
    """

    category = "bp-convergence"

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class GateError(Tfim2dError):
    category = "gate"


class ResourceError(Tfim2dError):
    """Exact contraction cost guard exceeded."""

    category = "resource"


class IncompleteDataError(Tfim2dError):
    """Symmetry analysis is missing required image pairs."""

    category = "incomplete-data"


class IncomparableCurvesError(Tfim2dError):
    """Collapse quality requested for curves with no overlapping support."""

    category = "incomparable-curves"


class ConfigError(Tfim2dError):
    category = "config"


class ParseError(Tfim2dError):
    """Result file could not be parsed; carries the offending line number."""

    category = "parse"

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
