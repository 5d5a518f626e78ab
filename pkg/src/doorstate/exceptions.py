"""Custom exceptions for doorstate.

This module provides a structured exception hierarchy so callers can tell a
bad floor plan from a solver breakdown, and so the CLI can turn any library
failure into a one-line message.
"""
from __future__ import annotations

from typing import Sequence

__all__ = [
    "DoorstateError",
    "PlanParseError",
    "PlanValidationError",
    "ConfigError",
    "DimensionMismatchError",
    "BumpNormalizationError",
    "MeshResolutionError",
    "BoundaryMarkingError",
    "AssemblyError",
    "SingularMatrixError",
    "ConvergenceError",
    "ContinuationError",
    "GridMismatchError",
    "BoundaryConditionError",
    "BoxConstraintError",
    "PreconditionError",
    "LineSearchStall",
    "BudgetExceededError",
    "CalibrationError",
    "ManifestMismatchError",
]


class DoorstateError(Exception):
    """Base exception for all doorstate errors.

    All custom exceptions in this library inherit from this class,
    making it easy to catch all library-specific errors.
    """
    pass


class PlanParseError(DoorstateError):
    """Raised when a floor-plan file is missing, not JSON, or off-schema."""
    pass


class PlanValidationError(DoorstateError, ValueError):
    """Raised when a floor plan violates one of its geometric invariants.

    Attributes:
        invariant: Short name of the violated invariant (e.g. "door-inside-domain")
        detail: Human-readable description naming the offending object

    Example:
        A door rectangle that overlaps a wall rectangle raises
        PlanValidationError(invariant="door-wall-disjoint", ...).
    """

    def __init__(self, invariant: str, detail: str):
        """Initialize PlanValidationError.

        Args:
            invariant: Short name of the violated invariant
            detail: Description naming the offending object
        """
        super().__init__(f"{invariant}: {detail}")
        self.invariant = invariant
        self.detail = detail


class ConfigError(DoorstateError):
    """Raised when a scenario or experiment config cannot be loaded."""
    pass


class DimensionMismatchError(DoorstateError, ValueError):
    """Raised when a vector or field has the wrong length for its space."""
    pass


class BumpNormalizationError(DoorstateError):
    """Raised when a thermostat bump cannot be normalized on a mesh.

    This happens when the bump support carries no quadrature mass or is
    smaller than the elements around the thermostat, and when sensors are
    evaluated with a plan normalized on a different mesh.
    """
    pass


class MeshResolutionError(DoorstateError):
    """Raised when the target mesh spacing cannot resolve a plan feature.

    Attributes:
        feature: Name of the unresolved feature (e.g. "door 2")
    """

    def __init__(self, feature: str, message: str):
        super().__init__(message)
        self.feature = feature


class BoundaryMarkingError(DoorstateError):
    """Raised when an inlet segment does not match any boundary edge."""
    pass


class AssemblyError(DoorstateError):
    """Raised for unknown forms or mismatched spaces during assembly."""
    pass


class SingularMatrixError(DoorstateError):
    """Raised when a sparse factorization meets a zero pivot.

    Attributes:
        dof: Index of the degree of freedom with the zero pivot, or -1 when
            it could not be located
    """

    def __init__(self, dof: int, message: str | None = None):
        super().__init__(message or f"Singular matrix: zero pivot at dof {dof}")
        self.dof = dof


class ConvergenceError(DoorstateError):
    """Raised when Newton's method fails to reach the tolerance.

    Attributes:
        residual_norm: Norm of the last accepted residual
        iterations: Number of Newton steps taken
    """

    def __init__(self, residual_norm: float, iterations: int, message: str | None = None):
        super().__init__(
            message
            or f"Newton did not converge after {iterations} iterations "
            f"(residual {residual_norm:.3e})"
        )
        self.residual_norm = residual_norm
        self.iterations = iterations


class ContinuationError(DoorstateError):
    """Raised when Reynolds continuation fails at one of its steps.

    Attributes:
        reynolds: The Reynolds number at which Newton failed
        trace: (Re, iterations, residual_norm) for every attempted step
    """

    def __init__(self, reynolds: float, trace: Sequence[tuple[float, int, float]]):
        super().__init__(f"Flow solve failed at Re={reynolds:g}")
        self.reynolds = reynolds
        self.trace = list(trace)

    def __str__(self) -> str:
        """Return formatted error string with the continuation trace."""
        if self.trace:
            steps = ", ".join(f"Re={re:g}:{it}it/{res:.1e}" for re, it, res in self.trace)
            return f"{super().__str__()} [{steps}]"
        return super().__str__()


class GridMismatchError(DoorstateError):
    """Raised when sensor data and a trajectory live on different time grids."""
    pass


class BoundaryConditionError(DoorstateError):
    """Raised when an initial temperature is nonzero on the Dirichlet boundary."""
    pass


class BoxConstraintError(DoorstateError, ValueError):
    """Raised when a door configuration leaves the unit box."""
    pass


class PreconditionError(DoorstateError, ValueError):
    """Raised when an operation is called outside its documented preconditions."""
    pass


class LineSearchStall(DoorstateError):
    """Raised when no Armijo step passes the sufficient-decrease test.

    Attributes:
        trials: Number of cost evaluations spent before giving up
    """

    def __init__(self, trials: int):
        super().__init__(f"Armijo line search stalled after {trials} trials")
        self.trials = trials


class BudgetExceededError(DoorstateError):
    """Raised when the enumeration baseline would need too many forward solves."""
    pass


class CalibrationError(DoorstateError):
    """Raised when vent-force bisection cannot bracket its target speed."""
    pass


class ManifestMismatchError(DoorstateError):
    """Raised when sensor data was generated from a different scenario.

    Attributes:
        expected: Manifest hash of the scenario in use
        found: Manifest hash stored with the data
    """

    def __init__(self, expected: str, found: str):
        super().__init__(
            f"Sensor data manifest {found[:12]} does not match scenario {expected[:12]}"
        )
        self.expected = expected
        self.found = found
