"""Exception types shared across the workbench."""
from __future__ import annotations


class AggrebenchError(Exception):
    """Base class for all workbench errors."""


class ValidationError(AggrebenchError, ValueError):
    """Invalid parameters, mesh settings, or configuration values."""

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = violations or [message]


class NumericalFailureError(AggrebenchError, RuntimeError):
    """The forward solver produced an unusable state (e.g. negative conformer
    concentration beyond tolerance); carries the simulation time."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (at t={t:.6g})")
        self.t = t


class StepBudgetError(AggrebenchError, RuntimeError):
    """The CFL-driven step count exceeded the configured budget."""

    def __init__(self, budget: int, t: float):
        super().__init__(f"step budget {budget} exhausted at t={t:.6g}")
        self.budget = budget
        self.t = t


class DataFormatError(AggrebenchError, ValueError):
    """Malformed observation file; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FitFailureError(AggrebenchError, RuntimeError):
    """An estimation step failed irrecoverably; may carry partial results."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial
