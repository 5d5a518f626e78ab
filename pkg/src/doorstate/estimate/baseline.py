"""Probabilistic enumeration baseline.

Doors are independent Bernoulli variables with open probabilities p. The
predicted readings are the expectation over all 2^n_d binary configurations,

    E[y](t) = sum_c P_c(p) y_c(t; E[pi0]),

and the estimation cost is evaluated on that expectation. The optimizer
mirrors the gradient method: a proximal QP direction in (E[pi0], p) and an
Armijo line search. Every evaluation solves the temperature equation for
every configuration; flows and step factorizations are cached per
configuration, so memory grows with 2^n_d.
"""
from __future__ import annotations
import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from ..adjoint import GradientBundle, adjoint_temperature_march, initial_gradient
from ..constants import (
    ARMIJO_ALPHA,
    ARMIJO_BETA,
    ARMIJO_MAX_HALVINGS,
    BASELINE_MAX_DOORS,
    DEFAULT_WORKERS,
    GAMMA,
    MAX_ITER,
    STOP_TOL,
)
from ..exceptions import BudgetExceededError, LineSearchStall
from ..fem.spaces import Field
from ..logger import logger
from ..parallel import map_ordered
from ..problem import EstimationProblem, ForwardModel, SolveCounter
from ..thermal import CostBreakdown, SensorRecord, TemperatureTrajectory
from ..utils import trapezoid_weights
from .gradient_method import armijo, check_box, descent_direction, is_stationary

__all__ = ["BaselineState", "binary_configurations", "bernoulli_weights", "bernoulli_jacobian", "baseline_estimate"]

FloatArray = NDArray[np.float64]


def binary_configurations(n_doors: int) -> NDArray[np.int64]:
    """All 2^n_d door configurations, (2^n_d, n_d), in lexicographic order."""
    return np.array(list(itertools.product((0, 1), repeat=n_doors)), dtype=np.int64).reshape(2**n_doors, n_doors)


def bernoulli_weights(p: Sequence[float] | FloatArray, configs: Optional[NDArray[np.int64]] = None) -> FloatArray:
    """P(theta) = prod_i p_i^theta_i (1 - p_i)^(1 - theta_i) for every configuration."""
    p = np.asarray(p, dtype=np.float64)
    configs = binary_configurations(p.size) if configs is None else configs
    factors = np.where(configs == 1, p[None, :], 1.0 - p[None, :])
    return np.prod(factors, axis=1)


def bernoulli_jacobian(p: Sequence[float] | FloatArray, configs: Optional[NDArray[np.int64]] = None) -> FloatArray:
    """dP_c / dp_i = (2 theta_i - 1) prod_{j != i} factor_j, shape (2^n_d, n_d)."""
    p = np.asarray(p, dtype=np.float64)
    configs = binary_configurations(p.size) if configs is None else configs
    factors = np.where(configs == 1, p[None, :], 1.0 - p[None, :])
    out = np.empty(configs.shape, dtype=np.float64)
    for i in range(p.size):
        others = np.prod(np.delete(factors, i, axis=1), axis=1)
        out[:, i] = (2 * configs[:, i] - 1) * others
    return out


@dataclass(eq=False)
class BaselineState:
    """Iterate and history of the enumeration baseline."""

    p: FloatArray
    e_pi0: Field
    configs: NDArray[np.int64]
    cost_history: list[CostBreakdown] = field(default_factory=list)
    V_history: list[float] = field(default_factory=list)
    step_history: list[int] = field(default_factory=list)
    iteration: int = 0
    status: str = "running"
    cached_configurations: int = 0
    solve_counter: SolveCounter = field(default_factory=SolveCounter)

    @property
    def n_configurations(self) -> int:
        return int(self.configs.shape[0])

    @property
    def config_weights(self) -> FloatArray:
        return bernoulli_weights(self.p, self.configs)

    @property
    def cost(self) -> float:
        return self.cost_history[-1].total if self.cost_history else float("nan")


@dataclass(eq=False)
class _Expectation:
    e_pi0: Field
    p: FloatArray
    readings: FloatArray
    expected: TemperatureTrajectory
    cost: CostBreakdown


def baseline_estimate(
    problem: EstimationProblem,
    sensors: SensorRecord,
    init_p: Sequence[float] | FloatArray,
    init_e_pi0: Field | FloatArray,
    max_iter: int = MAX_ITER,
    *,
    stop_tol: float = STOP_TOL,
    gamma: float = GAMMA,
    alpha_bar: float = ARMIJO_ALPHA,
    beta_bar: float = ARMIJO_BETA,
    j_max: int = ARMIJO_MAX_HALVINGS,
    workers: int = DEFAULT_WORKERS,
    max_doors: int = BASELINE_MAX_DOORS,
) -> BaselineState:
    """Fit door-open probabilities p and E[pi0] to the data.

    Args:
        problem: Estimation problem
        sensors: Measured thermostat series
        init_p: Initial open probabilities in [0, 1]^n_d
        init_e_pi0: Initial guess of E[pi0]
        max_iter: Iteration limit
        stop_tol: Termination threshold on |V| relative to the initial cost
        gamma: Proximal weight of the QP
        alpha_bar: Armijo sufficient-decrease factor
        beta_bar: Armijo step reduction factor
        j_max: Largest Armijo exponent
        workers: Worker threads for the per-configuration solves
        max_doors: Largest n_d accepted

    Returns:
        BaselineState with histories and the solve counter

    Raises:
        BudgetExceededError: If n_d exceeds max_doors
        BoxConstraintError: If init_p is outside the box
    """
    n_doors = problem.n_doors
    if n_doors > max_doors:
        raise BudgetExceededError(
            f"Enumeration baseline needs 2^{n_doors} = {2**n_doors} forward solves per evaluation; limit is {max_doors} doors"
        )
    p = problem.check_theta(check_box(init_p, "p")).copy()
    e_pi0 = problem.pi0_field(init_e_pi0.values if isinstance(init_e_pi0, Field) else init_e_pi0)
    configs = binary_configurations(n_doors)
    n_configs = configs.shape[0]
    problem.reset_counter()
    counter = problem.counter

    models: list[ForwardModel] = map_ordered(
        lambda c: problem.forward_model(c.astype(np.float64), record=False), list(configs), workers
    )
    counter.flow_solves += n_configs
    logger.info("Baseline configurations solved", configurations=n_configs, workers=workers)
    s = problem.weights
    tracking_weights = trapezoid_weights(problem.times)

    def evaluate(pi0_values: FloatArray, p_values: FloatArray, *, trial: bool) -> _Expectation:
        field_ = problem.pi0_field(pi0_values)
        trajs = map_ordered(lambda m: problem.simulate(field_, m, record=False), models, workers)
        if trial:
            counter.trial_solves += n_configs
        else:
            counter.thermal_solves += n_configs
        weights = bernoulli_weights(p_values, configs)
        values = np.tensordot(weights, np.stack([t.values for t in trajs]), axes=1)
        expected = TemperatureTrajectory(times=problem.times, values=values, pi0=field_, kappa=models[0].kappa)
        readings = np.stack([t.values @ s.T for t in trajs])
        return _Expectation(field_, p_values.copy(), readings, expected, problem.cost(expected, sensors))

    def gradient_at(point: _Expectation) -> GradientBundle:
        residuals = point.expected.values @ s.T - sensors.values
        d_weights = np.array([2.0 * float(np.sum(tracking_weights[:, None] * residuals * y)) for y in point.readings])
        d_p = bernoulli_jacobian(point.p, configs).T @ d_weights
        weights = bernoulli_weights(point.p, configs)

        def march(index: int) -> FloatArray:
            if weights[index] == 0.0:
                return np.zeros(problem.temperature.n_dofs)
            operator = problem.adjoint_operator(models[index])
            return adjoint_temperature_march(operator, s, weights[index] * residuals, problem.times)[0]

        lambda6 = np.sum(map_ordered(march, range(n_configs), workers), axis=0)
        counter.adjoint_passes += n_configs
        d_pi0 = initial_gradient(lambda6, point.e_pi0, sensors, s, problem.eta0, problem.eta1)
        empty = np.zeros(0)
        return GradientBundle(d_pi0=d_pi0, d_theta=d_p, d_alpha_field=empty, d_kappa_field=empty)

    point = evaluate(e_pi0.values, p, trial=False)
    state = BaselineState(p=p, e_pi0=point.e_pi0, configs=configs, solve_counter=counter)
    state.cached_configurations = n_configs
    state.cost_history.append(point.cost)
    scale = point.cost.total
    trials: list[_Expectation] = []

    def trial_cost(pi0_values: FloatArray, p_values: FloatArray) -> float:
        trials.append(evaluate(pi0_values, np.clip(p_values, 0.0, 1.0), trial=True))
        return trials[-1].cost.total

    for iteration in range(1, max_iter + 1):
        state.iteration = iteration
        grad = gradient_at(point)
        direction = descent_direction(grad, state.p, gamma)
        state.V_history.append(direction.V)
        counter.mark_iteration()
        logger.info("Baseline iteration", iteration=iteration, cost=point.cost.total, V=direction.V, p=state.p)
        if is_stationary(direction.V, scale, stop_tol):
            state.status = "converged"
            break
        trials.clear()
        try:
            step = armijo(
                trial_cost,
                state.e_pi0.values,
                state.p,
                direction,
                alpha_bar,
                beta_bar,
                j_max,
                current=point.cost.total,
            )
        except LineSearchStall as exc:
            logger.warn("Baseline line search stalled", iteration=iteration, trials=exc.trials)
            state.status = "stalled"
            break
        point = trials[-1]
        counter.promote_trials(thermal=n_configs)
        state.p = point.p.copy()
        state.e_pi0 = point.e_pi0
        check_box(state.p, "p")
        state.cost_history.append(point.cost)
        state.step_history.append(step.j)
    else:
        state.status = "max_iter"
    logger.info("Baseline finished", status=state.status, iterations=state.iteration, cost=state.cost, p=state.p)
    return state
