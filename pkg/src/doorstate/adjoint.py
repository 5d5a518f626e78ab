"""Adjoint temperature and flow solves, Frechet derivatives, and derivative oracles.

The adjoint temperature runs backward from lambda1(T) = 0 with the same
implicit Euler operator family as the forward march:

    (M/dt + K(kappa) + C_adj) lambda^{k-1} = (M/dt) lambda^k - 2 c_k sum_i r_ik s_i

where r_ik is the mismatch of sensor i at level k and c_k the trapezoid weight
of level k divided by dt. ``C_adj`` is -C(u) ("advective", the Galerkin form
of -u . grad lambda) or C(u)^T ("conservative").

The adjoint flow solves the transposed Taylor-Hood Jacobian with the
temperature coupling as forcing. Two time rules pair lambda1 with T_e in the
time integrals: "step" pairs lambda^{k-1} with T^k (weight dt), which is the
pairing the implicit Euler march produces; "trapezoid" pairs equal levels with
trapezoid weights.
"""
from __future__ import annotations
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from .exceptions import BoundaryConditionError, BoxConstraintError, GridMismatchError, PreconditionError
from .fem.assembly import Form, assemble, load_vector
from .fem.quadrature import integrate
from .fem.solvers import Factorization, restrict, solve_linear
from .fem.spaces import Field
from .floorplan import FloorPlan, MaterialParams, door_indicators
from .flow import FlowSolution
from .logger import logger
from .mesh import BoundaryTag
from .thermal import (
    SensorRecord,
    StepOperator,
    TemperatureTrajectory,
    implicit_euler,
    sensor_weights,
    thermal_operator,
)
from .utils import trapezoid_weights

__all__ = [
    "AdjointSolution",
    "GradientBundle",
    "TangentSolution",
    "ADJOINT_CONVECTION_MODES",
    "TIME_RULES",
    "sensor_residuals",
    "adjoint_temperature_march",
    "solve_adjoint_temperature",
    "solve_adjoint_flow",
    "frechet_fields",
    "initial_gradient",
    "gradient",
    "theta_directions",
    "tangent_solve",
    "fd_directional",
]

FloatArray = NDArray[np.float64]

ADJOINT_CONVECTION_MODES = ("advective", "conservative")
TIME_RULES = ("step", "trapezoid")


@dataclass(frozen=True, eq=False)
class AdjointSolution:
    """Adjoint fields of one pass.

    Attributes:
        lambda1: Adjoint temperature at every level, (N + 1, n_T); row N is zero
        lambda6: lambda1 at t = 0
        lambda2: Adjoint velocity (set by solve_adjoint_flow)
        lambda3: Adjoint pressure (set by solve_adjoint_flow)
    """

    times: FloatArray
    lambda1: FloatArray
    lambda6: Field
    lambda2: Optional[Field] = None
    lambda3: Optional[Field] = None


@dataclass(frozen=True, eq=False)
class GradientBundle:
    """Derivatives of the cost with respect to pi0 and theta.

    ``d_pi0`` is the Riesz representative in the P1 mass inner product, so
    the directional derivative along ``delta`` is ``d_pi0 . M delta``.
    """

    d_pi0: Field
    d_theta: FloatArray
    d_alpha_field: FloatArray
    d_kappa_field: FloatArray

    def directional(self, delta_pi0: FloatArray, delta_theta: Sequence[float] | FloatArray) -> float:
        space = self.d_pi0.space
        return float(self.d_pi0.values @ (space.mass @ delta_pi0) + self.d_theta @ np.asarray(delta_theta, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class TangentSolution:
    """Tangent-linear fields along one direction, and the resulting dJ."""

    delta_u: Field
    delta_p: Field
    delta_Te: FloatArray
    dJ: float


def _check_mode(convection: str, time_rule: str) -> None:
    if convection not in ADJOINT_CONVECTION_MODES:
        raise PreconditionError(f"Unknown adjoint convection form {convection!r}; use one of {ADJOINT_CONVECTION_MODES}")
    if time_rule not in TIME_RULES:
        raise PreconditionError(f"Unknown adjoint time rule {time_rule!r}; use one of {TIME_RULES}")


def _time_pairs(times: FloatArray, time_rule: str) -> list[tuple[int, int, float]]:
    """(lambda level, temperature level, weight) triples of the time integrals."""
    if time_rule == "step":
        steps = np.diff(times)
        return [(k - 1, k, float(steps[k - 1])) for k in range(1, times.size)]
    weights = trapezoid_weights(times)
    return [(k, k, float(weights[k])) for k in range(times.size)]


def sensor_residuals(traj: TemperatureTrajectory, sensors: SensorRecord, weights: FloatArray) -> FloatArray:
    """Predicted minus measured readings, (N + 1, n_s).

    Raises:
        GridMismatchError: If the sensor grid differs from the trajectory grid
    """
    if sensors.times.shape != traj.times.shape or not np.allclose(
        sensors.times, traj.times, rtol=0, atol=1e-9 * max(1.0, float(traj.times[-1]))
    ):
        raise GridMismatchError(f"Sensor grid ({sensors.times.size} levels) differs from trajectory ({traj.times.size})")
    return traj.values @ weights.T - sensors.values


def adjoint_temperature_march(
    operator: StepOperator,
    weights: FloatArray,
    residuals: FloatArray,
    times: FloatArray,
) -> FloatArray:
    """Backward implicit Euler march of the adjoint temperature.

    Args:
        operator: Adjoint step operator (see thermal_operator)
        weights: Sensor rows s_i, (n_s, n_T)
        residuals: Sensor mismatches r_ik, (N + 1, n_s)
        times: Time levels

    Returns:
        lambda1 at every level, (N + 1, n_T), with the last row zero
    """
    n_levels = times.size
    # 1 on interior levels, 1/2 at t = T
    scale = trapezoid_weights(times) / float(times[1] - times[0])
    lam = np.zeros((n_levels, operator.space.n_dofs))
    for k in range(n_levels - 1, 0, -1):
        load = -2.0 * scale[k] * (residuals[k] @ weights)
        lam[k - 1] = operator.advance(lam[k], load)
    return lam


def solve_adjoint_temperature(
    traj: TemperatureTrajectory,
    flow: Optional[FlowSolution],
    sensors: SensorRecord,
    plan: FloorPlan,
    *,
    convection: str = "advective",
    weights: Optional[FloatArray] = None,
    operator: Optional[StepOperator] = None,
) -> AdjointSolution:
    """Adjoint temperature lambda1 and lambda6 = lambda1(., 0).

    Args:
        traj: Forward trajectory
        flow: Flow that advected the trajectory (None for pure diffusion)
        sensors: Measured thermostat series on the trajectory's grid
        plan: Normalized floor plan
        convection: "advective" or "conservative" adjoint convection
        weights: Precomputed sensor rows for ``sensors.sensor_ids``
        operator: Pre-factorized adjoint step operator

    Raises:
        GridMismatchError: If sensors and trajectory use different grids
    """
    _check_mode(convection, "step")
    s = weights if weights is not None else sensor_weights(plan, traj.space, sensors.sensor_ids)
    residuals = sensor_residuals(traj, sensors, s)
    if operator is None:
        velocity = flow.velocity_at_quadrature() if flow is not None else None
        operator = thermal_operator(traj.space, traj.kappa, velocity, traj.dt, convection=convection)
    lam = adjoint_temperature_march(operator, s, residuals, traj.times)
    logger.debug(
        "Adjoint temperature solved",
        levels=traj.times.size,
        max_abs=float(np.max(np.abs(lam))),
        convection=convection,
    )
    return AdjointSolution(times=traj.times, lambda1=lam, lambda6=Field(traj.space, lam[0].copy()))


def _coupling_load(lambda1: FloatArray, traj: TemperatureTrajectory, flow: FlowSolution, time_rule: str) -> FloatArray:
    """Velocity-space load of sum_k w_k integral of lambda1 v . grad T_e."""
    temperature = traj.space
    density = np.zeros(flow.u.space.jxw.shape + (2,))
    for lam_level, t_level, weight in _time_pairs(traj.times, time_rule):
        if not np.any(lambda1[lam_level]):
            continue
        lam_q = temperature.at_quadrature(lambda1[lam_level])
        grad_t = temperature.grad_at_quadrature(traj.values[t_level])
        density += weight * lam_q[..., None] * grad_t
    return load_vector(flow.u.space, density)


def solve_adjoint_flow(
    lambda1: FloatArray,
    traj: TemperatureTrajectory,
    flow: FlowSolution,
    *,
    convection: str = "advective",
    inlet_dirichlet: bool = False,
    time_rule: str = "step",
) -> tuple[Field, Field]:
    """Adjoint velocity lambda2 and pressure lambda3.

    Solves the transposed Jacobian of the flow problem at ``flow`` with the
    temperature coupling as right-hand side. lambda2 vanishes on wall edges
    (and on inlet edges too when ``inlet_dirichlet``); the pressure gauge
    follows the forward problem.

    Raises:
        SingularMatrixError: If the adjoint system is singular
    """
    _check_mode(convection, time_rule)
    problem = flow.problem
    u = flow.u.values
    conv = problem.convection(u)
    conv_adj = conv.T if convection == "conservative" else -conv
    block = problem.viscous + conv_adj + problem.linearization(u).T
    matrix = problem.saddle(block)

    free = problem.free
    if inlet_dirichlet and problem.has_inlet:
        fixed = np.concatenate(
            [problem.velocity.boundary_dofs(BoundaryTag.INLET), np.array([problem.n_velocity], dtype=np.int64)]
        )
        free = np.setdiff1d(free, fixed)

    rhs = np.zeros(problem.n_unknowns)
    rhs[: problem.n_velocity] = -_coupling_load(lambda1, traj, flow, time_rule)
    x = np.zeros(problem.n_unknowns)
    if np.any(rhs[free]):
        x[free] = solve_linear(restrict(matrix, free), rhs[free])
    lambda2 = Field(problem.velocity, x[: problem.n_velocity])
    lambda3 = Field(problem.pressure, x[problem.n_velocity :])
    logger.debug("Adjoint flow solved", norm=lambda2.l2_norm(), convection=convection, time_rule=time_rule)
    return lambda2, lambda3


def frechet_fields(
    lambda1: FloatArray,
    lambda2: Field,
    traj: TemperatureTrajectory,
    flow: FlowSolution,
    *,
    time_rule: str = "step",
) -> tuple[FloatArray, FloatArray]:
    """D_alpha J = lambda2 . u and D_kappa J = time integral of grad lambda1 . grad T_e.

    Both are returned at quadrature points, (n_t, n_q).
    """
    _check_mode("advective", time_rule)
    d_alpha = np.sum(lambda2.space.at_quadrature(lambda2.values) * flow.velocity_at_quadrature(), axis=-1)
    temperature = traj.space
    d_kappa = np.zeros(temperature.jxw.shape)
    for lam_level, t_level, weight in _time_pairs(traj.times, time_rule):
        if not np.any(lambda1[lam_level]):
            continue
        grad_l = temperature.grad_at_quadrature(lambda1[lam_level])
        grad_t = temperature.grad_at_quadrature(traj.values[t_level])
        d_kappa += weight * np.sum(grad_l * grad_t, axis=-1)
    return d_alpha, d_kappa


def initial_gradient(
    lambda6: FloatArray,
    pi0: Field,
    sensors: SensorRecord,
    weights: FloatArray,
    eta0: float,
    eta1: float,
) -> Field:
    """Riesz representative of D_pi0 J on the interior dofs.

    The explicit part differentiates the initial-match and regularization
    terms plus the t = 0 level of the tracking integral.
    """
    space = pi0.space
    initial_weight = float(trapezoid_weights(sensors.times)[0])
    mismatch = weights @ pi0.values - sensors.initial
    dual = 2.0 * (eta0 + initial_weight) * (mismatch @ weights) + 2.0 * eta1 * (space.mass @ pi0.values)
    free = space.interior_dofs()
    out = np.zeros(space.n_dofs)
    if np.any(dual[free]):
        out[free] = Factorization(restrict(space.mass, free)).solve(dual[free])
    out[free] -= lambda6[free]
    return Field(space, out)


def theta_directions(plan: FloorPlan, params: MaterialParams, points: FloatArray) -> tuple[FloatArray, FloatArray]:
    """d alpha / d theta_i and d kappa / d theta_i at ``points``, each (n_d, ...)."""
    doors = door_indicators(plan, points).astype(np.float64)
    return -(params.alpha_w - params.alpha0) * doors, -(params.kappa_w - params.kappa0) * doors


def gradient(
    lambda6: Field,
    d_alpha_field: FloatArray,
    d_kappa_field: FloatArray,
    plan: FloorPlan,
    pi0: Field,
    sensors: SensorRecord,
    eta0: float,
    eta1: float,
    *,
    params: Optional[MaterialParams] = None,
    weights: Optional[FloatArray] = None,
) -> GradientBundle:
    """Assemble D_pi0 J and D_theta J from one adjoint pass.

    Args:
        lambda6: Adjoint temperature at t = 0
        d_alpha_field: D_alpha J at quadrature points
        d_kappa_field: D_kappa J at quadrature points
        plan: Normalized floor plan
        pi0: Current initial temperature
        sensors: Measured series
        eta0: Initial-match weight
        eta1: Regularization weight
        params: Material constants (defaults when None)
        weights: Precomputed sensor rows

    Returns:
        GradientBundle
    """
    params = params if params is not None else MaterialParams()
    space = pi0.space
    s = weights if weights is not None else sensor_weights(plan, space, sensors.sensor_ids)
    d_pi0 = initial_gradient(lambda6.values, pi0, sensors, s, eta0, eta1)
    d_alpha_dtheta, d_kappa_dtheta = theta_directions(plan, params, space.quadrature_points)
    d_theta = np.array(
        [
            integrate(space.mesh, d_alpha_field * d_alpha_dtheta[i]) + integrate(space.mesh, d_kappa_field * d_kappa_dtheta[i])
            for i in range(plan.n_doors)
        ],
        dtype=np.float64,
    )
    return GradientBundle(d_pi0=d_pi0, d_theta=d_theta, d_alpha_field=d_alpha_field, d_kappa_field=d_kappa_field)


def tangent_solve(
    delta_pi0: FloatArray,
    delta_theta: Sequence[float] | FloatArray,
    traj: TemperatureTrajectory,
    flow: FlowSolution,
    plan: FloorPlan,
    params: MaterialParams,
    sensors: SensorRecord,
    eta0: float,
    eta1: float,
    *,
    weights: Optional[FloatArray] = None,
    operator: Optional[StepOperator] = None,
) -> TangentSolution:
    """Tangent-linear model along (delta_pi0, delta_theta).

    Solves the linearized flow system for (delta_u, delta_p), then the
    linearized temperature march with the forward operator, and returns the
    first variation of the cost.

    Raises:
        BoundaryConditionError: If delta_pi0 is nonzero on the boundary
    """
    space = traj.space
    delta_pi0 = np.asarray(delta_pi0, dtype=np.float64)
    delta_theta = np.asarray(delta_theta, dtype=np.float64)
    if np.max(np.abs(delta_pi0[space.boundary_dofs()]), initial=0.0) > 1e-12:
        raise BoundaryConditionError("delta_pi0 must vanish on the exterior boundary")
    problem = flow.problem

    d_alpha_dtheta, d_kappa_dtheta = theta_directions(plan, params, space.quadrature_points)
    delta_alpha = np.tensordot(delta_theta, d_alpha_dtheta, axes=1) if plan.n_doors else np.zeros(space.jxw.shape)
    delta_kappa = np.tensordot(delta_theta, d_kappa_dtheta, axes=1) if plan.n_doors else np.zeros(space.jxw.shape)

    dx = np.zeros(problem.n_unknowns)
    if np.any(delta_alpha):
        friction = assemble(Form.BRINKMAN, problem.velocity, coefficient=delta_alpha)
        rhs = np.concatenate([-(friction @ flow.u.values), np.zeros(problem.pressure.n_dofs)])
        dx[problem.free] = solve_linear(problem.jacobian(flow.reduced), rhs[problem.free])
    delta_u = Field(problem.velocity, dx[: problem.n_velocity])
    delta_p = Field(problem.pressure, dx[problem.n_velocity :])

    perturbation: Optional[sp.csr_matrix] = None
    if np.any(delta_kappa):
        perturbation = assemble(Form.DIFFUSION, space, coefficient=delta_kappa)
    if np.any(delta_u.values):
        conv = assemble(Form.CONVECTION, space, velocity=delta_u.space.at_quadrature(delta_u.values))
        perturbation = conv if perturbation is None else perturbation + conv
    if operator is None:
        velocity = flow.velocity_at_quadrature()
        operator = thermal_operator(space, traj.kappa, velocity, traj.dt)

    def forcing(m: int) -> Optional[FloatArray]:
        if perturbation is None:
            return None
        return -(perturbation @ traj.values[m])

    delta_te = implicit_euler(operator, delta_pi0.copy(), forcing, traj.n_steps)

    s = weights if weights is not None else sensor_weights(plan, space, sensors.sensor_ids)
    residuals = sensor_residuals(traj, sensors, s)
    w = trapezoid_weights(traj.times)
    tracking = 2.0 * float(np.sum(w[:, None] * residuals * (delta_te @ s.T)))
    mismatch = s @ traj.pi0.values - sensors.initial
    initial = 2.0 * eta0 * float(mismatch @ (s @ delta_pi0))
    regularization = 2.0 * eta1 * float(traj.pi0.values @ (space.mass @ delta_pi0))
    dj = tracking + initial + regularization
    logger.debug("Tangent solve", dJ=dj)
    return TangentSolution(delta_u=delta_u, delta_p=delta_p, delta_Te=delta_te, dJ=dj)


def fd_directional(
    objective: Callable[[FloatArray, FloatArray], float],
    delta_pi0: FloatArray,
    delta_theta: Sequence[float] | FloatArray,
    h: float,
    *,
    pi0: FloatArray,
    theta: Sequence[float] | FloatArray,
) -> float:
    """Central difference (J(x + h d) - J(x - h d)) / (2h) of a full objective.

    Args:
        objective: Maps (pi0 values, theta) to the cost, running full solves
        delta_pi0: Direction in pi0
        delta_theta: Direction in theta
        h: Step size
        pi0: Base initial temperature values
        theta: Base door configuration

    Raises:
        PreconditionError: If h is not positive
        BoxConstraintError: If theta +- h delta_theta leaves [0, 1]^n_d
    """
    if not h > 0:
        raise PreconditionError(f"Finite-difference step must be positive, got {h}")
    pi0 = np.asarray(pi0, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    delta_pi0 = np.asarray(delta_pi0, dtype=np.float64)
    delta_theta = np.asarray(delta_theta, dtype=np.float64)
    if not np.any(delta_pi0) and not np.any(delta_theta):
        return 0.0
    for sign in (1.0, -1.0):
        trial = theta + sign * h * delta_theta
        if np.any(trial < 0.0) or np.any(trial > 1.0):
            raise BoxConstraintError(f"theta {sign * h:+g} * delta_theta = {trial} leaves [0, 1]")
    plus = objective(pi0 + h * delta_pi0, theta + h * delta_theta)
    minus = objective(pi0 - h * delta_pi0, theta - h * delta_theta)
    return (plus - minus) / (2.0 * h)
