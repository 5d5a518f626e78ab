"""One estimation problem: plan, mesh, spaces, material, sources and sensors.

EstimationProblem is the object the estimators and derivative checks work
against. It owns every quantity that does not change during an estimation
run and counts the solves it performs.
"""
from __future__ import annotations
import copy
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field as PydanticField
from typing_extensions import Self

from .adjoint import (
    AdjointSolution,
    GradientBundle,
    TangentSolution,
    frechet_fields,
    gradient,
    solve_adjoint_flow,
    solve_adjoint_temperature,
    tangent_solve,
)
from .constants import CONTINUATION_STEPS, ETA0, ETA1, NEWTON_MAX_ITER, NEWTON_TOL, PECLET_WARN
from .exceptions import DimensionMismatchError
from .fem.spaces import FemSpace, Field, p1_space, p2_vector_space, pressure_space
from .floorplan import FloorPlan, MaterialParams, material_fields, normalize_bumps
from .flow import FlowSolution, make_flow_problem, solve_flow, vent_forcing
from .logger import logger
from .mesh import Mesh, generate_mesh
from .thermal import (
    CostBreakdown,
    SensorRecord,
    StepOperator,
    TemperatureTrajectory,
    cell_peclet,
    cost,
    sensor_weights,
    simulate_temperature,
    thermal_operator,
    vent_heat_source,
)
from .utils import time_grid

__all__ = ["SolverSettings", "SolveCounter", "ForwardModel", "EstimationProblem"]

FloatArray = NDArray[np.float64]


class SolverSettings(BaseModel):
    """Numerical settings shared by the forward, adjoint and tangent solves."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    newton_tol: float = PydanticField(default=NEWTON_TOL, gt=0)
    newton_max_iter: int = PydanticField(default=NEWTON_MAX_ITER, ge=1)
    continuation: tuple[float, ...] = CONTINUATION_STEPS
    adjoint_convection: Literal["advective", "conservative"] = "advective"
    adjoint_time_rule: Literal["step", "trapezoid"] = "step"
    adjoint_inlet_dirichlet: bool = False
    peclet_warn: float = PydanticField(default=PECLET_WARN, gt=0)


@dataclass(slots=True)
class SolveCounter:
    """Counts of the solves an estimator performed.

    ``per_iteration`` holds the forward (flow + temperature) solves of each
    outer iteration, not counting line-search trials.
    """

    flow_solves: int = 0
    thermal_solves: int = 0
    adjoint_passes: int = 0
    trial_solves: int = 0
    per_iteration: list[int] = field(default_factory=list)
    _mark: int = 0

    def mark_iteration(self) -> None:
        self.per_iteration.append(self.thermal_solves - self._mark)
        self._mark = self.thermal_solves

    def promote_trials(self, thermal: int, flow: int = 0) -> None:
        """Book accepted line-search solves as the next iteration's forward solves."""
        self.trial_solves -= thermal + flow
        self.thermal_solves += thermal
        self.flow_solves += flow

    def as_dict(self) -> dict[str, object]:
        return {
            "flow_solves": self.flow_solves,
            "thermal_solves": self.thermal_solves,
            "adjoint_passes": self.adjoint_passes,
            "trial_solves": self.trial_solves,
            "per_iteration": list(self.per_iteration),
        }


@dataclass(eq=False)
class ForwardModel:
    """Flow, diffusivity and factorized step operators for one door configuration."""

    theta: FloatArray
    flow: FlowSolution
    kappa: FloatArray
    operator: StepOperator
    adjoint_operator: Optional[StepOperator] = None


class EstimationProblem:
    """Everything fixed during one estimation run.

    Args:
        plan: Floor plan; bumps are normalized on ``mesh`` if needed
        mesh: Mesh of the plan
        params: Material constants
        horizon: Final time T
        dt: Time step
        sensor_ids: Thermostats whose data enters the cost (all when None)
        eta0: Initial-match weight
        eta1: Regularization weight
        heat_scale: Nondimensional factor applied to vent heat rates
        vent_forces: Per-vent force overrides (e.g. from calibration)
        solver: Numerical settings
    """

    def __init__(
        self,
        plan: FloorPlan,
        mesh: Mesh,
        params: Optional[MaterialParams] = None,
        *,
        horizon: float,
        dt: float,
        sensor_ids: Optional[Sequence[int]] = None,
        eta0: float = ETA0,
        eta1: float = ETA1,
        heat_scale: float = 1.0,
        vent_forces: Optional[dict[int, float]] = None,
        solver: Optional[SolverSettings] = None,
    ):
        if any(th.sigma_mesh != mesh.fingerprint for th in plan.thermostats):
            plan = normalize_bumps(plan, mesh)
        self.plan = plan
        self.mesh = mesh
        self.params = params if params is not None else MaterialParams()
        self.horizon = float(horizon)
        self.dt = float(dt)
        self.times = time_grid(self.horizon, self.dt)
        self.sensor_ids = tuple(sensor_ids) if sensor_ids is not None else tuple(th.id for th in plan.thermostats)
        if not self.sensor_ids:
            raise DimensionMismatchError("The sensor subset must not be empty")
        self.eta0 = float(eta0)
        self.eta1 = float(eta1)
        self.solver = solver if solver is not None else SolverSettings()
        self.vent_forces = dict(vent_forces) if vent_forces else None

        self.temperature: FemSpace = p1_space(mesh)
        self.velocity: FemSpace = p2_vector_space(mesh)
        self.pressure: FemSpace = pressure_space(mesh)
        self.points = self.temperature.quadrature_points
        self.weights = sensor_weights(plan, self.temperature, self.sensor_ids)
        self.forcing = vent_forcing(plan, self.points, self.vent_forces)
        load = vent_heat_source(plan, self.temperature, heat_scale)
        self.heat_load: Optional[FloatArray] = load if np.any(load) else None
        self.counter = SolveCounter()

    @classmethod
    def build(cls, plan: FloorPlan, mesh_h: float, params: Optional[MaterialParams] = None, **kwargs: object) -> Self:
        """Mesh the plan at spacing ``mesh_h`` and bind the problem."""
        mesh = generate_mesh(plan, mesh_h)
        return cls(normalize_bumps(plan, mesh), mesh, params, **kwargs)  # type: ignore[arg-type]

    @property
    def n_doors(self) -> int:
        return self.plan.n_doors

    @property
    def n_steps(self) -> int:
        return int(self.times.size - 1)

    def fork(self) -> Self:
        """Shallow copy with its own solve counter, for concurrent runs."""
        clone = copy.copy(self)
        clone.counter = SolveCounter()
        return clone

    def reset_counter(self) -> SolveCounter:
        """Install a fresh counter and return the previous one."""
        previous, self.counter = self.counter, SolveCounter()
        return previous

    def pi0_field(self, values: Optional[FloatArray] = None) -> Field:
        """Wrap values as a P1 field with the boundary dofs zeroed."""
        out = np.zeros(self.temperature.n_dofs) if values is None else np.array(values, dtype=np.float64)
        if out.shape != (self.temperature.n_dofs,):
            raise DimensionMismatchError(f"pi0 has shape {out.shape}, expected ({self.temperature.n_dofs},)")
        out[self.temperature.boundary_dofs()] = 0.0
        return Field(self.temperature, out)

    def check_theta(self, theta: Sequence[float] | FloatArray) -> FloatArray:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_doors,):
            raise DimensionMismatchError(f"theta has shape {theta.shape}, plan has {self.n_doors} doors")
        return theta

    def material(self, theta: Sequence[float] | FloatArray) -> tuple[FloatArray, FloatArray]:
        return material_fields(self.plan, self.params, self.check_theta(theta), self.points)

    def forward_model(
        self,
        theta: Sequence[float] | FloatArray,
        guess: Optional[FlowSolution] = None,
        *,
        trial: bool = False,
        record: bool = True,
    ) -> ForwardModel:
        """Solve the flow at ``theta`` and factorize the temperature step.

        ``trial`` counts the solve as a line-search trial; ``record=False``
        leaves the counter to the caller (used from worker threads).
        """
        theta = self.check_theta(theta).copy()
        alpha, kappa = self.material(theta)
        problem = make_flow_problem(
            self.mesh,
            alpha,
            self.forcing,
            self.params.reynolds,
            velocity=self.velocity,
            pressure=self.pressure,
        )
        flow = solve_flow(
            problem,
            guess,
            tol=self.solver.newton_tol,
            max_iter=self.solver.newton_max_iter,
            continuation=self.solver.continuation,
        ).with_theta(theta)
        if record:
            if trial:
                self.counter.trial_solves += 1
            else:
                self.counter.flow_solves += 1
        velocity = flow.velocity_at_quadrature()
        peclet = cell_peclet(self.temperature, velocity, kappa)
        if peclet > self.solver.peclet_warn:
            logger.warn("Cell Peclet number above threshold", peclet=peclet, threshold=self.solver.peclet_warn)
        operator = thermal_operator(self.temperature, kappa, velocity, self.dt)
        return ForwardModel(theta=theta, flow=flow, kappa=kappa, operator=operator)

    def simulate(
        self, pi0: Field | FloatArray, model: ForwardModel, *, trial: bool = False, record: bool = True
    ) -> TemperatureTrajectory:
        field_ = pi0 if isinstance(pi0, Field) else self.pi0_field(pi0)
        traj = simulate_temperature(
            field_,
            model.flow,
            model.kappa,
            self.heat_load,
            self.horizon,
            self.dt,
            operator=model.operator,
        )
        if record:
            if trial:
                self.counter.trial_solves += 1
            else:
                self.counter.thermal_solves += 1
        return traj

    def observe(self, traj: TemperatureTrajectory) -> SensorRecord:
        return SensorRecord(times=traj.times.copy(), values=traj.values @ self.weights.T, sensor_ids=self.sensor_ids)

    def cost(self, traj: TemperatureTrajectory, sensors: SensorRecord) -> CostBreakdown:
        return cost(traj, traj.pi0, sensors, self.eta0, self.eta1, self.plan, weights=self.weights)

    def objective(self, pi0: FloatArray, theta: Sequence[float] | FloatArray, sensors: SensorRecord) -> float:
        """Cost after full flow and temperature solves (counted as trials)."""
        model = self.forward_model(theta, trial=True)
        return self.cost(self.simulate(pi0, model, trial=True), sensors).total

    def adjoint_operator(self, model: ForwardModel) -> StepOperator:
        """Factorized adjoint step operator of ``model``, built once."""
        if model.adjoint_operator is None:
            model.adjoint_operator = thermal_operator(
                self.temperature,
                model.kappa,
                model.flow.velocity_at_quadrature(),
                self.dt,
                convection=self.solver.adjoint_convection,
            )
        return model.adjoint_operator

    def adjoint(self, traj: TemperatureTrajectory, model: ForwardModel, sensors: SensorRecord) -> AdjointSolution:
        """Full adjoint pass: lambda1, lambda6, then lambda2 and lambda3."""
        temperature = solve_adjoint_temperature(
            traj,
            model.flow,
            sensors,
            self.plan,
            convection=self.solver.adjoint_convection,
            weights=self.weights,
            operator=self.adjoint_operator(model),
        )
        lambda2, lambda3 = solve_adjoint_flow(
            temperature.lambda1,
            traj,
            model.flow,
            convection=self.solver.adjoint_convection,
            inlet_dirichlet=self.solver.adjoint_inlet_dirichlet,
            time_rule=self.solver.adjoint_time_rule,
        )
        self.counter.adjoint_passes += 1
        return AdjointSolution(
            times=temperature.times,
            lambda1=temperature.lambda1,
            lambda6=temperature.lambda6,
            lambda2=lambda2,
            lambda3=lambda3,
        )

    def gradient(
        self, traj: TemperatureTrajectory, model: ForwardModel, sensors: SensorRecord
    ) -> tuple[GradientBundle, AdjointSolution]:
        adj = self.adjoint(traj, model, sensors)
        assert adj.lambda2 is not None
        d_alpha, d_kappa = frechet_fields(
            adj.lambda1, adj.lambda2, traj, model.flow, time_rule=self.solver.adjoint_time_rule
        )
        bundle = gradient(
            adj.lambda6,
            d_alpha,
            d_kappa,
            self.plan,
            traj.pi0,
            sensors,
            self.eta0,
            self.eta1,
            params=self.params,
            weights=self.weights,
        )
        return bundle, adj

    def tangent(
        self,
        traj: TemperatureTrajectory,
        model: ForwardModel,
        sensors: SensorRecord,
        delta_pi0: FloatArray,
        delta_theta: Sequence[float] | FloatArray,
    ) -> TangentSolution:
        return tangent_solve(
            delta_pi0,
            delta_theta,
            traj,
            model.flow,
            self.plan,
            self.params,
            sensors,
            self.eta0,
            self.eta1,
            weights=self.weights,
            operator=model.operator,
        )
