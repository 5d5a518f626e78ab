"""Synthetic twin data: initial temperature fields and noisy sensor records."""
from __future__ import annotations
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from ..constants import GEOMETRY_TOL
from ..exceptions import ConfigError
from ..fem.spaces import Field
from ..logger import logger
from ..problem import EstimationProblem, ForwardModel
from ..thermal import SensorRecord, TemperatureTrajectory
from .scenario import InitialFieldSpec, Scenario, build_problem, manifest_hash

__all__ = ["TwinData", "initial_field", "generate_twin_data"]

FloatArray = NDArray[np.float64]

# (x, y, amplitude, width) as fractions of the domain
_BUMPS = ((0.25, 0.30, 1.0, 0.15), (0.70, 0.60, -0.6, 0.20), (0.40, 0.80, 0.8, 0.12))
_ROOM_LEVELS = (1.0, -0.5, 0.75, -1.0, 0.5, -0.75)


def initial_field(spec: InitialFieldSpec, problem: EstimationProblem) -> Field:
    """Interpolate a synthetic initial temperature; zero on the boundary.

    ``smooth_bumps`` is a sum of Gaussians under a sine envelope that
    vanishes on the walls of the domain. ``room_piecewise`` is constant in
    each room of the plan.

    Raises:
        ConfigError: If room_piecewise is asked for a plan without rooms
    """
    space = problem.temperature
    plan = problem.plan
    x, y = space.dof_coords[:, 0], space.dof_coords[:, 1]
    if spec.kind == "zero":
        values = np.zeros(space.n_dofs)
    elif spec.kind == "smooth_bumps":
        w, h = plan.width, plan.height
        envelope = np.sin(np.pi * x / w) * np.sin(np.pi * y / h)
        values = np.zeros(space.n_dofs)
        for fx, fy, amplitude, width in _BUMPS:
            r2 = (x - fx * w) ** 2 + (y - fy * h) ** 2
            values += amplitude * np.exp(-r2 / (width * min(w, h)) ** 2)
        values *= envelope
    else:
        if not plan.rooms:
            raise ConfigError("room_piecewise initial field needs a plan with rooms")
        values = np.zeros(space.n_dofs)
        assigned = np.zeros(space.n_dofs, dtype=bool)
        for index, room in enumerate(plan.rooms):
            x0, y0, x1, y1 = room.rect.bounds
            inside = (
                (x >= x0 - GEOMETRY_TOL) & (x <= x1 + GEOMETRY_TOL) & (y >= y0 - GEOMETRY_TOL) & (y <= y1 + GEOMETRY_TOL)
            )
            fresh = inside & ~assigned
            values[fresh] = _ROOM_LEVELS[index % len(_ROOM_LEVELS)]
            assigned |= inside
    return problem.pi0_field(spec.amplitude * values)


@dataclass(eq=False)
class TwinData:
    """Ground truth, its trajectory and the (possibly noisy) record."""

    record: SensorRecord
    theta_true: FloatArray
    pi0_true: Field
    trajectory: TemperatureTrajectory
    model: ForwardModel


def generate_twin_data(
    scenario: Scenario,
    problem: Optional[EstimationProblem] = None,
    *,
    theta: Optional[FloatArray] = None,
    pi0: Optional[InitialFieldSpec] = None,
    seed: Optional[int] = None,
) -> TwinData:
    """Solve the truth forward and observe it with the scenario's sensors.

    Args:
        scenario: Scenario holding theta_true, pi0_true, noise and sensors
        problem: Problem built from the scenario (built when None)
        theta: Override of theta_true
        pi0: Override of pi0_true
        seed: Override of the scenario noise seed

    Returns:
        TwinData whose record carries the scenario manifest hash

    Raises:
        ConfigError: If no true door configuration is available
    """
    updates: dict[str, object] = {}
    if theta is not None:
        updates["theta_true"] = [float(v) for v in theta]
    if pi0 is not None:
        updates["pi0_true"] = pi0
    if seed is not None:
        updates["noise_seed"] = seed
    if updates:
        scenario = scenario.model_copy(update=updates)
    problem = problem if problem is not None else build_problem(scenario)
    truth = scenario.truth
    if truth is None:
        raise ConfigError(f"Scenario {scenario.name!r} has no theta_true to generate twin data from")
    theta_true = problem.check_theta(truth).copy()
    pi0_true = initial_field(scenario.pi0_true, problem)

    model = problem.forward_model(theta_true, record=False)
    traj = problem.simulate(pi0_true, model, record=False)
    clean = problem.observe(traj)
    values = clean.values
    if scenario.noise > 0:
        rng = np.random.default_rng(scenario.twin_seed)
        values = values + rng.normal(0.0, scenario.noise, size=values.shape)
    record = SensorRecord(
        times=clean.times,
        values=values,
        sensor_ids=clean.sensor_ids,
        manifest=manifest_hash(scenario),
    )
    logger.info(
        "Twin data generated",
        scenario=scenario.name,
        theta=theta_true,
        field=scenario.pi0_true.kind,
        sensors=list(record.sensor_ids),
        noise=scenario.noise,
    )
    return TwinData(record=record, theta_true=theta_true, pi0_true=pi0_true, trajectory=traj, model=model)
