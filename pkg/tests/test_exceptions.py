"""Test custom exception hierarchy."""
import pytest

from doorstate.exceptions import (
    BoxConstraintError,
    BudgetExceededError,
    ContinuationError,
    ConvergenceError,
    DimensionMismatchError,
    DoorstateError,
    LineSearchStall,
    ManifestMismatchError,
    MeshResolutionError,
    PlanValidationError,
    PreconditionError,
    SingularMatrixError,
)


def test_doorstate_error_base():
    """Test base DoorstateError is a standard Exception."""
    with pytest.raises(Exception):
        raise DoorstateError("test")


def test_budget_exceeded_error():
    """Test BudgetExceededError."""
    with pytest.raises(DoorstateError):
        raise BudgetExceededError("2^20 configurations")


@pytest.mark.parametrize("cls", [BoxConstraintError, PreconditionError, DimensionMismatchError])
def test_argument_errors_are_value_errors(cls):
    """Test argument errors can be caught as ValueError too."""
    with pytest.raises(ValueError):
        raise cls("bad argument")


def test_plan_validation_error():
    """Test PlanValidationError with invariant and detail."""
    error = PlanValidationError("doors-disjoint", "door 1 overlaps door 2")

    assert error.invariant == "doors-disjoint"
    assert error.detail == "door 1 overlaps door 2"
    assert str(error) == "doors-disjoint: door 1 overlaps door 2"
    assert isinstance(error, ValueError)


def test_mesh_resolution_error():
    """Test MeshResolutionError names the feature."""
    error = MeshResolutionError("door 2", "door 2 needs h <= 0.1")

    assert error.feature == "door 2"
    assert "0.1" in str(error)


def test_singular_matrix_error_default_message():
    """Test SingularMatrixError without a message."""
    error = SingularMatrixError(7)

    assert error.dof == 7
    assert "dof 7" in str(error)


def test_convergence_error():
    """Test ConvergenceError keeps the residual and iteration count."""
    error = ConvergenceError(residual_norm=3.5e-4, iterations=25)

    assert error.residual_norm == 3.5e-4
    assert error.iterations == 25
    assert "25 iterations" in str(error)
    assert "3.500e-04" in str(error)


def test_continuation_error_str_with_trace():
    """Test ContinuationError __str__ includes every attempted step."""
    error = ContinuationError(30.0, [(1.0, 3, 1e-12), (10.0, 4, 1e-11), (30.0, 25, 2e-3)])
    error_str = str(error)

    assert error.reynolds == 30.0
    assert "Flow solve failed at Re=30" in error_str
    assert "Re=10:4it" in error_str


def test_continuation_error_without_trace():
    """Test ContinuationError with an empty trace."""
    error = ContinuationError(100.0, [])

    assert error.trace == []
    assert str(error) == "Flow solve failed at Re=100"


def test_line_search_stall():
    """Test LineSearchStall."""
    error = LineSearchStall(trials=21)

    assert error.trials == 21
    assert "21 trials" in str(error)


def test_manifest_mismatch_error():
    """Test ManifestMismatchError shortens both hashes."""
    error = ManifestMismatchError(expected="a" * 64, found="b" * 64)

    assert error.expected == "a" * 64
    assert "b" * 12 in str(error)
    assert "b" * 13 not in str(error)
