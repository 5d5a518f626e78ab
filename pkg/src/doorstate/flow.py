"""Stationary Brinkman-penalized Navier-Stokes solver (Taylor-Hood P2/P1).

Weak form, for all test pairs (v, q):

    (1/Re)(grad u, grad v) + ((u . grad) u, v) + (alpha u, v) - (p, div v) = (g, v)
    -(div u, q) = 0

with u = 0 on wall boundary edges. Inlet edges carry the natural do-nothing
condition, which sets the pressure datum p = 0 there. Without inlets one
pressure dof is pinned to zero.
"""
from __future__ import annotations
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from .constants import CONTINUATION_STEPS, NEWTON_MAX_ITER, NEWTON_TOL
from .exceptions import ContinuationError, ConvergenceError, PreconditionError
from .fem.assembly import Form, assemble, load_vector
from .fem.quadrature import integrate
from .fem.solvers import Factorization, newton_solve, restrict, solve_linear
from .fem.spaces import FemSpace, Field, p2_vector_space, pressure_space
from .floorplan import FloorPlan, Rect
from .logger import logger
from .mesh import BoundaryTag, Mesh

__all__ = [
    "FlowProblem",
    "FlowSolution",
    "make_flow_problem",
    "vent_forcing",
    "solve_flow",
    "reynolds_continuation",
    "divergence_norm",
    "region_mean_speed",
]

FloatArray = NDArray[np.float64]


def vent_forcing(plan: FloorPlan, points: FloatArray, forces: Optional[dict[int, float]] = None) -> FloatArray:
    """Body force g_u at ``points``: magnitude x direction, uniform over each vent.

    Args:
        plan: Floor plan holding the vents
        points: Evaluation points (n_t, n_q, 2)
        forces: Optional per-vent force magnitudes overriding the plan values
    """
    g = np.zeros(points.shape, dtype=np.float64)
    for vent in plan.vents:
        magnitude = vent.force_magnitude if forces is None else forces.get(vent.id, vent.force_magnitude)
        if magnitude == 0.0:
            continue
        mask = vent.rect.contains(points)
        g[mask] += magnitude * np.asarray(vent.direction)
    return g


@dataclass(frozen=True, eq=False)
class FlowProblem:
    """Discrete stationary flow problem for one friction field.

    The unknown vector is ``[u_x; u_y; p]``; ``free`` lists the entries
    that are not fixed by the wall condition or the pressure pin.
    """

    mesh: Mesh
    velocity: FemSpace
    pressure: FemSpace
    alpha: FloatArray
    forcing: FloatArray
    reynolds: float

    @property
    def n_velocity(self) -> int:
        return self.velocity.n_dofs

    @property
    def n_unknowns(self) -> int:
        return self.velocity.n_dofs + self.pressure.n_dofs

    @property
    def has_inlet(self) -> bool:
        return bool(np.any(self.mesh.boundary_tags == BoundaryTag.INLET))

    @cached_property
    def wall_dofs(self) -> NDArray[np.int64]:
        return self.velocity.boundary_dofs(BoundaryTag.WALL)

    @cached_property
    def free(self) -> NDArray[np.int64]:
        fixed = [self.wall_dofs]
        if not self.has_inlet:
            fixed.append(np.array([self.n_velocity], dtype=np.int64))
        return np.setdiff1d(np.arange(self.n_unknowns), np.concatenate(fixed))

    @cached_property
    def viscous(self) -> sp.csr_matrix:
        """(1/Re) vector Laplacian plus the Brinkman friction."""
        laplacian = assemble(Form.VECTOR_LAPLACIAN, self.velocity, coefficient=1.0 / self.reynolds)
        friction = assemble(Form.BRINKMAN, self.velocity, coefficient=self.alpha)
        return (laplacian + friction).tocsr()

    @cached_property
    def divergence(self) -> sp.csr_matrix:
        return assemble(Form.DIVERGENCE, self.pressure, trial_space=self.velocity)

    @cached_property
    def load(self) -> FloatArray:
        return load_vector(self.velocity, self.forcing)

    def expand(self, z: FloatArray) -> FloatArray:
        x = np.zeros(self.n_unknowns)
        x[self.free] = z
        return x

    def convection(self, u: FloatArray) -> sp.csr_matrix:
        """Matrix of (u . grad) du."""
        return assemble(Form.CONVECTION, self.velocity, velocity=self.velocity.at_quadrature(u))

    def linearization(self, u: FloatArray) -> sp.csr_matrix:
        """Matrix of (du . grad) u."""
        return assemble(
            Form.CONVECTION_LINEARIZATION, self.velocity, coefficient=self.velocity.grad_at_quadrature(u)
        )

    def saddle(self, velocity_block: sp.spmatrix) -> sp.csr_matrix:
        """Full saddle-point matrix [[A, -B^T], [-B, 0]]."""
        b = self.divergence
        return sp.bmat([[velocity_block, -b.T], [-b, None]], format="csr")

    def residual(self, z: FloatArray) -> FloatArray:
        """Nonlinear residual on the free unknowns."""
        x = self.expand(z)
        u, p = x[: self.n_velocity], x[self.n_velocity :]
        b = self.divergence
        momentum = self.viscous @ u + self.convection(u) @ u - b.T @ p - self.load
        continuity = -(b @ u)
        return np.concatenate([momentum, continuity])[self.free]

    def jacobian(self, z: FloatArray) -> sp.csc_matrix:
        u = self.expand(z)[: self.n_velocity]
        block = self.viscous + self.convection(u) + self.linearization(u)
        return restrict(self.saddle(block), self.free)

    def stokes(self) -> FloatArray:
        """Reduced Stokes solution (no convection)."""
        rhs = np.concatenate([self.load, np.zeros(self.pressure.n_dofs)])[self.free]
        return solve_linear(restrict(self.saddle(self.viscous), self.free), rhs)


@dataclass(frozen=True, eq=False)
class FlowSolution:
    """Converged velocity-pressure pair."""

    u: Field
    p: Field
    problem: FlowProblem
    residual_norm: float
    newton_iterations: int
    theta_used: Optional[tuple[float, ...]] = None
    continuation: tuple[float, ...] = field(default_factory=tuple)

    @property
    def reduced(self) -> FloatArray:
        return np.concatenate([self.u.values, self.p.values])[self.problem.free]

    def velocity_at_quadrature(self) -> FloatArray:
        return self.u.space.at_quadrature(self.u.values)

    def with_theta(self, theta: Sequence[float]) -> "FlowSolution":
        return replace(self, theta_used=tuple(float(t) for t in theta))


def make_flow_problem(
    mesh: Mesh,
    alpha: FloatArray,
    forcing: FloatArray,
    reynolds: float,
    *,
    velocity: Optional[FemSpace] = None,
    pressure: Optional[FemSpace] = None,
) -> FlowProblem:
    """Bundle spaces and coefficient samples into a FlowProblem.

    Raises:
        PreconditionError: If alpha is negative somewhere or Re is not positive
    """
    if np.any(alpha < 0):
        raise PreconditionError("Friction field alpha must be nonnegative")
    if not reynolds > 0:
        raise PreconditionError(f"Reynolds number must be positive, got {reynolds}")
    return FlowProblem(
        mesh=mesh,
        velocity=velocity if velocity is not None else p2_vector_space(mesh),
        pressure=pressure if pressure is not None else pressure_space(mesh),
        alpha=alpha,
        forcing=forcing,
        reynolds=float(reynolds),
    )


def _to_solution(problem: FlowProblem, z: FloatArray, residual_norm: float, iterations: int, steps: tuple[float, ...]) -> FlowSolution:
    x = problem.expand(z)
    n_u = problem.n_velocity
    return FlowSolution(
        u=Field(problem.velocity, x[:n_u]),
        p=Field(problem.pressure, x[n_u:]),
        problem=problem,
        residual_norm=residual_norm,
        newton_iterations=iterations,
        continuation=steps,
    )


def _newton(problem: FlowProblem, z0: FloatArray, tol: float, max_iter: int) -> tuple[FloatArray, int, float]:
    result = newton_solve(
        problem.residual, problem.jacobian, z0, tol=tol, max_iter=max_iter, label=f"flow Re={problem.reynolds:g}"
    )
    return result.x, result.iterations, result.residual_norm


def solve_flow(
    problem: FlowProblem,
    initial_guess: Optional[FlowSolution] = None,
    *,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
    continuation: Sequence[float] = CONTINUATION_STEPS,
) -> FlowSolution:
    """Solve the stationary penalized Navier-Stokes problem.

    Newton starts from ``initial_guess`` when given, else from the Stokes
    solution. If Newton fails, the solve is retried by Reynolds continuation
    through the ``continuation`` values below Re.

    Args:
        problem: Flow problem
        initial_guess: Warm start, e.g. the flow of a nearby door configuration
        tol: Absolute residual tolerance
        max_iter: Newton iteration limit per solve
        continuation: Fallback Reynolds steps (values >= Re are dropped)

    Returns:
        Converged FlowSolution

    Raises:
        ContinuationError: If Newton fails even with continuation
    """
    if initial_guess is not None and initial_guess.problem.mesh is problem.mesh:
        z0 = initial_guess.reduced
    else:
        z0 = problem.stokes()
    try:
        z, iterations, norm = _newton(problem, z0, tol, max_iter)
    except ConvergenceError as exc:
        steps = [re for re in continuation if re < problem.reynolds] + [problem.reynolds]
        logger.warn(
            "Newton failed, retrying with Reynolds continuation",
            reynolds=problem.reynolds,
            residual=exc.residual_norm,
            steps=steps,
        )
        return reynolds_continuation(problem, steps, tol=tol, max_iter=max_iter)
    logger.debug("Flow converged", reynolds=problem.reynolds, iterations=iterations, residual=norm)
    return _to_solution(problem, z, norm, iterations, (problem.reynolds,))


def reynolds_continuation(
    problem: FlowProblem,
    steps: Sequence[float],
    *,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> FlowSolution:
    """Solve a sequence of flow problems at increasing Re, each warm-started.

    Args:
        problem: Target problem; the last step must equal its Reynolds number
        steps: Increasing Reynolds numbers

    Raises:
        PreconditionError: Empty, non-increasing, or wrongly terminated steps
        ContinuationError: Newton failure at any step, naming that Re
    """
    steps = [float(s) for s in steps]
    if not steps:
        raise PreconditionError("Reynolds continuation needs at least one step")
    if any(b <= a for a, b in zip(steps[:-1], steps[1:])):
        raise PreconditionError(f"Reynolds steps must increase: {steps}")
    if not np.isclose(steps[-1], problem.reynolds):
        raise PreconditionError(f"Last continuation step {steps[-1]:g} must equal Re={problem.reynolds:g}")

    trace: list[tuple[float, int, float]] = []
    z: Optional[FloatArray] = None
    total = 0
    norm = float("nan")
    for re in steps:
        stage = replace(problem, reynolds=re) if not np.isclose(re, problem.reynolds) else problem
        z0 = stage.stokes() if z is None else z
        try:
            z, iterations, norm = _newton(stage, z0, tol, max_iter)
        except ConvergenceError as exc:
            trace.append((re, exc.iterations, exc.residual_norm))
            raise ContinuationError(re, trace) from exc
        trace.append((re, iterations, norm))
        total += iterations
        logger.info("Continuation step", reynolds=re, iterations=iterations, residual=norm)
    assert z is not None
    return _to_solution(problem, z, norm, total, tuple(steps))


def divergence_norm(flow: FlowSolution) -> float:
    """L2 norm of the weak divergence: sqrt(b^T M_p^-1 b) with b = B u."""
    b = flow.problem.divergence @ flow.u.values
    if not np.any(b):
        return 0.0
    riesz = Factorization(flow.p.space.mass).solve(b)
    return float(np.sqrt(max(float(b @ riesz), 0.0)))


def region_mean_speed(flow: FlowSolution, region: Rect | NDArray[np.bool_]) -> float:
    """Mean speed |u| over a rectangle or a quadrature-point mask."""
    space = flow.u.space
    if isinstance(region, Rect):
        mask = region.contains(space.quadrature_points)
    else:
        mask = region
    speed = np.linalg.norm(space.at_quadrature(flow.u.values), axis=-1)
    area = integrate(space.mesh, mask.astype(np.float64))
    if area <= 0:
        raise PreconditionError("Region has no quadrature points on this mesh")
    return integrate(space.mesh, speed * mask) / area
