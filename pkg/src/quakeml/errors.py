"""
Exception hierarchy for quakeml.

Library code raises these; the CLI maps them onto its exit-code contract.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from quakeml.estimation import FitResult


class QuakeMLError(Exception):
    """Base class for all quakeml errors."""


class InvalidInputError(QuakeMLError, ValueError):
    """An argument violates a documented precondition."""


class InsufficientDataError(QuakeMLError):
    """Too few triggers (or simulations) for the requested operation."""

    def __init__(self, n: int, required: int, what: str = "triggers"):
        self.n = n
        self.required = required
        self.what = what
        super().__init__(f"insufficient {what} (n={n} < {required})")


class NonConvergenceError(QuakeMLError):
    """No optimizer restart converged; ``best`` holds the best-effort fit."""

    def __init__(self, best: FitResult, restarts: int):
        self.best = best
        self.restarts = restarts
        super().__init__(
            f"none of {restarts} restarts converged "
            f"(best objective {best.objective:.6g} s^2)"
        )


class DegenerateGeometryError(QuakeMLError):
    """The trigger geometry does not identify the hypocenter."""


class TriggerFileError(QuakeMLError):
    """A trigger or roster file could not be parsed."""

    def __init__(self, path: str, diagnostics: list[str]):
        self.path = path
        self.diagnostics = diagnostics
        super().__init__(f"{path}: " + "; ".join(diagnostics))
