"""Projected-gradient estimation of (pi0, theta) with an Armijo line search.

Each iteration solves the forward model at the current point, runs one
adjoint pass, and takes the closed-form minimizer of the proximal QP

    min <D_pi0 J, d_pi0> + D_theta J . d_theta + gamma/2 (|d_pi0|^2 + |d_theta|^2)
    s.t. 0 <= theta + d_theta <= 1

as the search direction. Its value V <= 0 certifies descent and drives
termination. Both variables are scaled by the accepted Armijo step.
"""
from __future__ import annotations
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from ..adjoint import GradientBundle
from ..constants import ARMIJO_ALPHA, ARMIJO_BETA, ARMIJO_MAX_HALVINGS, GAMMA, MAX_ITER, STOP_TOL
from ..exceptions import BoxConstraintError, LineSearchStall, PreconditionError
from ..fem.spaces import Field
from ..logger import logger
from ..problem import EstimationProblem, ForwardModel, SolveCounter
from ..thermal import CostBreakdown, SensorRecord, TemperatureTrajectory

__all__ = [
    "DescentDirection",
    "ArmijoStep",
    "EstimationState",
    "descent_direction",
    "armijo",
    "estimate",
    "check_box",
    "is_stationary",
]

FloatArray = NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class DescentDirection:
    """Minimizer of the proximal QP and its optimal value V (always <= 0)."""

    delta_pi0: Field
    delta_theta: FloatArray
    V: float


@dataclass(frozen=True, slots=True)
class ArmijoStep:
    j: int
    step: float
    cost: float
    trials: int


@dataclass(eq=False)
class EstimationState:
    """Iterate and history of one estimation run.

    ``status`` is "converged" (|V| <= stop_tol scale), "max_iter" or
    "stalled" (no Armijo step passed; the last accepted point is kept).
    """

    pi0: Field
    theta: FloatArray
    cost_history: list[CostBreakdown] = field(default_factory=list)
    V_history: list[float] = field(default_factory=list)
    step_history: list[int] = field(default_factory=list)
    theta_history: list[FloatArray] = field(default_factory=list)
    iteration: int = 0
    status: str = "running"
    solve_counter: SolveCounter = field(default_factory=SolveCounter)

    @property
    def cost(self) -> float:
        return self.cost_history[-1].total if self.cost_history else float("nan")

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def check_box(theta: Sequence[float] | FloatArray, name: str = "theta") -> FloatArray:
    """Return theta as an array, raising BoxConstraintError outside [0, 1]."""
    theta = np.asarray(theta, dtype=np.float64)
    if np.any(theta < 0.0) or np.any(theta > 1.0) or not np.all(np.isfinite(theta)):
        raise BoxConstraintError(f"{name} = {theta} leaves [0, 1]")
    return theta


def descent_direction(grad: GradientBundle, theta: Sequence[float] | FloatArray, gamma: float = GAMMA) -> DescentDirection:
    """Closed-form solution of the box-constrained proximal QP.

    Raises:
        PreconditionError: If gamma is not positive
    """
    if not gamma > 0:
        raise PreconditionError(f"gamma must be positive, got {gamma}")
    theta = np.asarray(theta, dtype=np.float64)
    d_pi0 = grad.d_pi0
    mass = d_pi0.space.mass
    delta_pi0 = -d_pi0.values / gamma
    delta_theta = np.clip(-grad.d_theta / gamma, -theta, 1.0 - theta)
    linear = float(d_pi0.values @ (mass @ delta_pi0)) + float(grad.d_theta @ delta_theta)
    quadratic = 0.5 * gamma * (float(delta_pi0 @ (mass @ delta_pi0)) + float(delta_theta @ delta_theta))
    value = linear + quadratic
    # nonpositive for any theta in the box, up to rounding
    if value > 1e-12 * max(abs(linear), quadratic, np.finfo(np.float64).tiny):
        logger.warn("Descent subproblem value is positive", V=value, linear=linear, quadratic=quadratic, theta=theta)
    value = min(value, 0.0)
    return DescentDirection(delta_pi0=Field(d_pi0.space, delta_pi0), delta_theta=delta_theta, V=value)


def armijo(
    cost_fn: Callable[[FloatArray, FloatArray], float],
    pi0: FloatArray,
    theta: FloatArray,
    direction: DescentDirection,
    alpha_bar: float = ARMIJO_ALPHA,
    beta_bar: float = ARMIJO_BETA,
    j_max: int = ARMIJO_MAX_HALVINGS,
    *,
    current: Optional[float] = None,
) -> ArmijoStep:
    """Smallest j with J(x + beta^j d) - J(x) <= alpha beta^j V.

    Args:
        cost_fn: Cost at a trial (pi0 values, theta)
        pi0: Current pi0 values
        theta: Current door configuration
        direction: Descent direction with V < 0
        alpha_bar: Sufficient-decrease factor in (0, 1)
        beta_bar: Step reduction factor in (0, 1)
        j_max: Largest exponent tried
        current: Cost at the current point (evaluated when None)

    Returns:
        ArmijoStep with the accepted exponent

    Raises:
        PreconditionError: If V >= 0 or a factor is outside (0, 1)
        LineSearchStall: If no j <= j_max passes
    """
    if not (0.0 < alpha_bar < 1.0 and 0.0 < beta_bar < 1.0):
        raise PreconditionError(f"Armijo factors must lie in (0, 1), got alpha={alpha_bar}, beta={beta_bar}")
    if not direction.V < 0:
        raise PreconditionError(f"Armijo needs a descent direction with V < 0, got V={direction.V}")
    base = cost_fn(pi0, theta) if current is None else current
    trials = 0
    for j in range(j_max + 1):
        step = beta_bar**j
        trial_cost = cost_fn(pi0 + step * direction.delta_pi0.values, theta + step * direction.delta_theta)
        trials += 1
        logger.debug("Armijo trial", j=j, cost=trial_cost, target=base + alpha_bar * step * direction.V)
        if trial_cost - base <= alpha_bar * step * direction.V:
            return ArmijoStep(j=j, step=step, cost=trial_cost, trials=trials)
    raise LineSearchStall(trials)


def is_stationary(value: float, scale: float, stop_tol: float) -> bool:
    return value == 0.0 or abs(value) <= stop_tol * max(scale, np.finfo(np.float64).tiny)


@dataclass(eq=False)
class _Point:
    model: ForwardModel
    traj: TemperatureTrajectory
    cost: CostBreakdown


def estimate(
    problem: EstimationProblem,
    sensors: SensorRecord,
    init_pi0: Field | FloatArray,
    init_theta: Sequence[float] | FloatArray,
    stop_tol: float = STOP_TOL,
    max_iter: int = MAX_ITER,
    *,
    gamma: float = GAMMA,
    alpha_bar: float = ARMIJO_ALPHA,
    beta_bar: float = ARMIJO_BETA,
    j_max: int = ARMIJO_MAX_HALVINGS,
) -> EstimationState:
    """Run the projected-gradient estimator from (init_pi0, init_theta).

    The flow is re-solved only when an accepted step changes theta; the
    forward solve of the accepted Armijo trial becomes the next iterate.

    Args:
        problem: Estimation problem
        sensors: Measured thermostat series
        init_pi0: Initial guess of pi0
        init_theta: Initial guess of theta, inside [0, 1]^n_d
        stop_tol: Termination threshold on |V| relative to the initial cost
        max_iter: Iteration limit
        gamma: Proximal weight of the QP
        alpha_bar: Armijo sufficient-decrease factor
        beta_bar: Armijo step reduction factor
        j_max: Largest Armijo exponent

    Returns:
        EstimationState with histories and the solve counter

    Raises:
        BoxConstraintError: If init_theta is outside the box
    """
    theta = problem.check_theta(check_box(init_theta)).copy()
    pi0 = problem.pi0_field(init_pi0.values if isinstance(init_pi0, Field) else init_pi0)
    problem.reset_counter()
    counter = problem.counter

    model = problem.forward_model(theta)
    traj = problem.simulate(pi0, model)
    point = _Point(model=model, traj=traj, cost=problem.cost(traj, sensors))
    state = EstimationState(pi0=pi0, theta=theta, solve_counter=counter)
    state.cost_history.append(point.cost)
    state.theta_history.append(theta.copy())
    scale = point.cost.total
    trials: dict[int, _Point] = {}

    def trial_cost(pi0_values: FloatArray, theta_values: FloatArray) -> float:
        theta_values = np.clip(theta_values, 0.0, 1.0)
        if np.array_equal(theta_values, point.model.theta):
            trial_model = point.model
        else:
            trial_model = problem.forward_model(theta_values, point.model.flow, trial=True)
        trial_traj = problem.simulate(pi0_values, trial_model, trial=True)
        trials[len(trials)] = _Point(trial_model, trial_traj, problem.cost(trial_traj, sensors))
        return trials[len(trials) - 1].cost.total

    for iteration in range(1, max_iter + 1):
        state.iteration = iteration
        grad, _ = problem.gradient(point.traj, point.model, sensors)
        direction = descent_direction(grad, state.theta, gamma)
        state.V_history.append(direction.V)
        counter.mark_iteration()
        logger.info(
            "Estimator iteration",
            iteration=iteration,
            cost=point.cost.total,
            V=direction.V,
            theta=state.theta,
        )
        if is_stationary(direction.V, scale, stop_tol):
            state.status = "converged"
            break
        trials.clear()
        try:
            step = armijo(
                trial_cost,
                state.pi0.values,
                state.theta,
                direction,
                alpha_bar,
                beta_bar,
                j_max,
                current=point.cost.total,
            )
        except LineSearchStall as exc:
            logger.warn("Line search stalled, keeping the last accepted point", iteration=iteration, trials=exc.trials)
            state.status = "stalled"
            break
        accepted = trials[len(trials) - 1]
        flow_changed = accepted.model is not point.model
        counter.promote_trials(thermal=1, flow=1 if flow_changed else 0)
        point = accepted
        state.pi0 = accepted.traj.pi0
        state.theta = accepted.model.theta.copy()
        check_box(state.theta)
        state.cost_history.append(accepted.cost)
        state.step_history.append(step.j)
        state.theta_history.append(state.theta.copy())
    else:
        state.status = "max_iter"
    logger.info(
        "Estimation finished",
        status=state.status,
        iterations=state.iteration,
        cost=state.cost,
        theta=state.theta,
    )
    return state
