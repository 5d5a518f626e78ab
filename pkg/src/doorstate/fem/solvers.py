"""Sparse direct solves, reusable factorizations, and damped Newton."""
from __future__ import annotations
import warnings
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.typing import NDArray

from ..constants import LINEAR_RTOL, NEWTON_MAX_HALVINGS, NEWTON_MAX_ITER, NEWTON_TOL
from ..exceptions import ConvergenceError, SingularMatrixError
from ..logger import logger

__all__ = ["Factorization", "solve_linear", "restrict", "NewtonResult", "newton_solve"]

FloatArray = NDArray[np.float64]
MatrixLike = Union[sp.spmatrix, FloatArray]

# dense fallback used to locate a zero pivot
_DENSE_PIVOT_LIMIT = 4000


def restrict(matrix: sp.spmatrix, rows: NDArray[np.int64], cols: NDArray[np.int64] | None = None) -> sp.csc_matrix:
    """Submatrix on the given rows and columns (columns default to rows)."""
    cols = rows if cols is None else cols
    return sp.csr_matrix(matrix)[rows][:, cols].tocsc()


def _zero_pivot(matrix: sp.spmatrix) -> int:
    csr = sp.csr_matrix(matrix)
    row_norms = np.asarray(abs(csr).sum(axis=1)).ravel()
    if np.any(row_norms == 0):
        return int(np.flatnonzero(row_norms == 0)[0])
    col_norms = np.asarray(abs(csr).sum(axis=0)).ravel()
    if np.any(col_norms == 0):
        return int(np.flatnonzero(col_norms == 0)[0])
    if csr.shape[0] <= _DENSE_PIVOT_LIMIT:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            lu, _ = la.lu_factor(csr.toarray(), check_finite=False)
        diag = np.abs(np.diag(lu))
        scale = max(float(diag.max()), 1.0)
        small = np.flatnonzero(diag <= 1e-14 * scale)
        if small.size:
            return int(small[0])
    return -1


class Factorization:
    """Sparse LU factorization reused across many right-hand sides."""

    def __init__(self, matrix: MatrixLike):
        """Factorize ``matrix``.

        Raises:
            SingularMatrixError: If the factorization meets a zero pivot
        """
        self.matrix = sp.csc_matrix(matrix)
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError(f"Cannot factorize non-square matrix {self.matrix.shape}")
        try:
            self._lu = spla.splu(self.matrix)
        except RuntimeError as exc:
            raise SingularMatrixError(_zero_pivot(self.matrix)) from exc
        diag = np.abs(self._lu.U.diagonal())
        if diag.size and (not np.all(np.isfinite(diag)) or diag.min() <= 1e-15 * max(float(diag.max()), 1.0)):
            raise SingularMatrixError(_zero_pivot(self.matrix))

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape  # type: ignore[no-any-return]

    def solve(self, rhs: FloatArray, *, transpose: bool = False) -> FloatArray:
        """Solve A x = rhs (or A^T x = rhs) with one step of iterative refinement."""
        trans = "T" if transpose else "N"
        operator = self.matrix.T if transpose else self.matrix
        x = self._lu.solve(rhs, trans=trans)
        residual = rhs - operator @ x
        bound = LINEAR_RTOL * (spla.norm(operator, np.inf) * np.linalg.norm(x, np.inf) + np.linalg.norm(rhs, np.inf))
        if np.linalg.norm(residual, np.inf) > bound:
            x = x + self._lu.solve(residual, trans=trans)
        return np.asarray(x, dtype=np.float64)


def solve_linear(matrix: MatrixLike, rhs: FloatArray) -> FloatArray:
    """Direct sparse solve of A x = b.

    Args:
        matrix: Square sparse (or dense) matrix, nonsingular after boundary
            conditions have been applied
        rhs: Right-hand side

    Returns:
        Solution vector

    Raises:
        SingularMatrixError: With the index of the zero-pivot dof
    """
    return Factorization(matrix).solve(np.asarray(rhs, dtype=np.float64))


@dataclass(slots=True)
class NewtonResult:
    """Converged Newton iterate with its convergence record."""

    x: FloatArray
    iterations: int
    residual_norm: float
    history: list[float] = field(default_factory=list)


def newton_solve(
    residual_fn: Callable[[FloatArray], FloatArray],
    jacobian_fn: Callable[[FloatArray], MatrixLike],
    x0: FloatArray,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
    *,
    max_halvings: int = NEWTON_MAX_HALVINGS,
    label: str = "newton",
) -> NewtonResult:
    """Damped Newton iteration on ``residual_fn(x) = 0``.

    A full step is tried first; while it fails to reduce the residual norm
    the step is halved, at most ``max_halvings`` times.

    Args:
        residual_fn: Nonlinear residual
        jacobian_fn: Jacobian of the residual
        x0: Initial iterate
        tol: Absolute tolerance on the Euclidean residual norm
        max_iter: Maximum number of Newton steps
        max_halvings: Maximum number of step halvings per iteration
        label: Name used in log messages

    Returns:
        NewtonResult with the converged iterate

    Raises:
        ConvergenceError: If the tolerance is not met within max_iter, or no
            damped step reduces the residual
    """
    x = np.array(x0, dtype=np.float64, copy=True)
    r = residual_fn(x)
    norm = float(np.linalg.norm(r))
    history = [norm]
    for iteration in range(1, max_iter + 1):
        if norm <= tol:
            return NewtonResult(x=x, iterations=iteration - 1, residual_norm=norm, history=history)
        dx = solve_linear(jacobian_fn(x), -r)
        step = 1.0
        for _ in range(max_halvings + 1):
            trial = x + step * dx
            r_trial = residual_fn(trial)
            trial_norm = float(np.linalg.norm(r_trial))
            if trial_norm < norm:
                break
            step *= 0.5
        else:
            raise ConvergenceError(norm, iteration, f"{label}: no damped step reduced the residual {norm:.3e}")
        x, r, norm = trial, r_trial, trial_norm
        history.append(norm)
        logger.debug(f"{label} iteration", iteration=iteration, residual=norm, step=step)
    if norm <= tol:
        return NewtonResult(x=x, iterations=max_iter, residual_norm=norm, history=history)
    raise ConvergenceError(norm, max_iter, f"{label}: residual {norm:.3e} above tol {tol:.1e} after {max_iter} iterations")
