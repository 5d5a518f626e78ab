"""Transient convection-diffusion of the temperature deviation from ambient.

Implicit Euler on P1 elements with homogeneous Dirichlet data on the whole
exterior boundary:

    (M/dt + K(kappa) + C(u)) T^{k+1} = (M/dt) T^k + b(t_{k+1})

The same stepping helper runs the backward adjoint march. Thermostats read
bump-weighted averages of T, and the cost compares those readings with data.
"""
from __future__ import annotations
import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from .constants import PECLET_WARN
from .exceptions import (
    BoundaryConditionError,
    BumpNormalizationError,
    DimensionMismatchError,
    GridMismatchError,
    PreconditionError,
)
from .fem.assembly import Form, assemble, load_vector
from .fem.solvers import Factorization
from .fem.spaces import FemSpace, Field
from .floorplan import FloorPlan, bump_weight
from .flow import FlowSolution
from .logger import logger
from .utils import time_grid, trapezoid_weights

__all__ = [
    "TemperatureTrajectory",
    "SensorRecord",
    "CostBreakdown",
    "StepOperator",
    "thermal_operator",
    "implicit_euler",
    "simulate_temperature",
    "vent_heat_source",
    "sensor_weights",
    "observe",
    "cost",
    "cell_peclet",
    "write_sensor_csv",
    "read_sensor_csv",
]

FloatArray = NDArray[np.float64]
SourceTerm = Union[None, FloatArray, Callable[[float], FloatArray]]


@dataclass(frozen=True, eq=False)
class TemperatureTrajectory:
    """Temperature deviation at every time level, with the data that produced it."""

    times: FloatArray
    values: FloatArray
    pi0: Field
    kappa: FloatArray
    flow_used: Optional[FlowSolution] = None

    @property
    def space(self) -> FemSpace:
        return self.pi0.space

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def n_steps(self) -> int:
        return int(self.times.size - 1)

    def field(self, k: int) -> Field:
        return Field(self.space, self.values[k])


@dataclass(frozen=True, eq=False)
class SensorRecord:
    """Thermostat series y_i(t_k), one column per sensor id."""

    times: FloatArray
    values: FloatArray
    sensor_ids: tuple[int, ...]
    manifest: Optional[str] = None

    def __post_init__(self) -> None:
        if self.values.shape != (self.times.size, len(self.sensor_ids)):
            raise DimensionMismatchError(
                f"Sensor values {self.values.shape} do not match {self.times.size} times x {len(self.sensor_ids)} sensors"
            )

    @property
    def initial(self) -> FloatArray:
        """Readings at t = 0 (the initial-temperature targets)."""
        return self.values[0]

    def series(self, sensor_id: int) -> FloatArray:
        return self.values[:, self.sensor_ids.index(sensor_id)]


@dataclass(frozen=True, slots=True)
class CostBreakdown:
    tracking_term: float
    initial_match_term: float
    regularization_term: float
    eta0: float
    eta1: float

    @property
    def total(self) -> float:
        return self.tracking_term + self.initial_match_term + self.regularization_term

    def as_dict(self) -> dict[str, float]:
        return {
            "tracking": self.tracking_term,
            "initial_match": self.initial_match_term,
            "regularization": self.regularization_term,
            "total": self.total,
        }


@dataclass(eq=False)
class StepOperator:
    """Implicit Euler step matrix on interior dofs with its factorization."""

    space: FemSpace
    matrix: sp.csr_matrix
    dt: float
    free: NDArray[np.int64] = field(init=False)
    mass_dt: sp.csr_matrix = field(init=False)
    factor: Factorization = field(init=False)

    def __post_init__(self) -> None:
        self.free = self.space.interior_dofs()
        self.mass_dt = (self.space.mass / self.dt).tocsr()
        reduced = sp.csr_matrix(self.matrix)[self.free][:, self.free]
        self.factor = Factorization(reduced)

    def advance(self, previous: FloatArray, load: Optional[FloatArray] = None) -> FloatArray:
        """One step: solve A x = (M/dt) previous + load on interior dofs."""
        rhs = self.mass_dt @ previous
        if load is not None:
            rhs = rhs + load
        out = np.zeros(self.space.n_dofs)
        out[self.free] = self.factor.solve(rhs[self.free])
        return out


def thermal_operator(
    space: FemSpace,
    kappa: FloatArray,
    velocity: Optional[FloatArray],
    dt: float,
    *,
    convection: str = "forward",
) -> StepOperator:
    """Build the step operator M/dt + K(kappa) + C.

    Args:
        space: P1 temperature space
        kappa: Diffusivity at quadrature points
        velocity: Advecting velocity at quadrature points, or None for u = 0
        dt: Time step
        convection: "forward" uses C(u); "advective" uses -C(u) (Galerkin
            form of -u . grad, for the adjoint); "conservative" uses C(u)^T

    Raises:
        PreconditionError: Unknown convection mode
    """
    matrix = space.mass / dt + assemble(Form.DIFFUSION, space, coefficient=kappa)
    if velocity is not None:
        c = assemble(Form.CONVECTION, space, velocity=velocity)
        if convection == "forward":
            matrix = matrix + c
        elif convection == "advective":
            matrix = matrix - c
        elif convection == "conservative":
            matrix = matrix + c.T
        else:
            raise PreconditionError(f"Unknown convection mode {convection!r}")
    return StepOperator(space=space, matrix=sp.csr_matrix(matrix), dt=dt)


def implicit_euler(
    operator: StepOperator,
    start: FloatArray,
    forcing: Callable[[int], Optional[FloatArray]],
    n_steps: int,
) -> FloatArray:
    """March ``n_steps`` implicit Euler steps; row m of the result is level m.

    ``forcing(m)`` returns the load of step m (1-based) or None.
    """
    states = np.empty((n_steps + 1, start.size))
    states[0] = start
    for m in range(1, n_steps + 1):
        states[m] = operator.advance(states[m - 1], forcing(m))
    return states


def _source_at(source: SourceTerm, t: float, n: int) -> Optional[FloatArray]:
    if source is None:
        return None
    value = source(t) if callable(source) else source
    value = np.asarray(value, dtype=np.float64)
    if value.shape != (n,):
        raise DimensionMismatchError(f"Source load has shape {value.shape}, expected ({n},)")
    return value


def cell_peclet(space: FemSpace, velocity: FloatArray, kappa: FloatArray) -> float:
    """Largest element Peclet number |u| h / (2 kappa) over quadrature points."""
    speed = np.linalg.norm(velocity, axis=-1)
    h = space.mesh.diameters[:, None]
    return float(np.max(speed * h / (2.0 * kappa)))


def simulate_temperature(
    pi0: Field,
    flow: Optional[FlowSolution],
    kappa: FloatArray,
    source: SourceTerm,
    horizon: float,
    dt: float,
    *,
    operator: Optional[StepOperator] = None,
    peclet_warn: float = PECLET_WARN,
) -> TemperatureTrajectory:
    """Integrate the temperature equation from pi0 over [0, horizon].

    Args:
        pi0: Initial temperature deviation (zero on the boundary)
        flow: Stationary flow on the same mesh, or None for pure diffusion
        kappa: Diffusivity at quadrature points
        source: None, a constant load vector, or a callable t -> load vector
        horizon: Final time T
        dt: Time step; must divide T
        operator: Pre-factorized step operator for the same kappa, flow and dt
        peclet_warn: Cell Peclet threshold above which a warning is logged

    Returns:
        TemperatureTrajectory with N + 1 levels, values[0] equal to pi0

    Raises:
        PreconditionError: dt does not divide T, or flow on another mesh
        BoundaryConditionError: pi0 is nonzero on the boundary
    """
    times = time_grid(horizon, dt)
    space = pi0.space
    boundary = space.boundary_dofs()
    if np.max(np.abs(pi0.values[boundary]), initial=0.0) > 1e-12:
        raise BoundaryConditionError("Initial temperature must vanish on the exterior boundary")
    velocity = None
    if flow is not None:
        if flow.u.space.mesh is not space.mesh:
            raise PreconditionError("Flow and temperature live on different meshes")
        velocity = flow.velocity_at_quadrature()
    if operator is None:
        if velocity is not None:
            peclet = cell_peclet(space, velocity, kappa)
            if peclet > peclet_warn:
                logger.warn("Cell Peclet number above threshold", peclet=peclet, threshold=peclet_warn)
        operator = thermal_operator(space, kappa, velocity, dt)
    n = space.n_dofs
    values = implicit_euler(operator, pi0.values.copy(), lambda m: _source_at(source, float(times[m]), n), times.size - 1)
    values[0] = pi0.values
    return TemperatureTrajectory(times=times, values=values, pi0=pi0, kappa=kappa, flow_used=flow)


def vent_heat_source(plan: FloorPlan, space: FemSpace, scale: float = 1.0) -> FloatArray:
    """Load vector of the vents' heat release, uniform over each vent rectangle."""
    points = space.quadrature_points
    g = np.zeros(points.shape[:-1])
    for vent in plan.vents:
        if vent.heat_rate:
            g += scale * vent.heat_rate * vent.rect.contains(points)
    return load_vector(space, g)


def sensor_weights(plan: FloorPlan, space: FemSpace, sensor_ids: Optional[Sequence[int]] = None) -> FloatArray:
    """Rows s_i with s_i[j] = integral of Phi_i phi_j, so y_i = s_i . T.

    Raises:
        BumpNormalizationError: If a thermostat was not normalized on this mesh
    """
    ids = list(sensor_ids) if sensor_ids is not None else [th.id for th in plan.thermostats]
    points = space.quadrature_points
    rows = np.empty((len(ids), space.n_dofs))
    for row, sensor_id in enumerate(ids):
        th = plan.thermostat(sensor_id)
        if th.sigma is None or th.sigma_mesh != space.mesh.fingerprint:
            raise BumpNormalizationError(f"Thermostat {sensor_id} is not normalized on this mesh")
        rows[row] = load_vector(space, bump_weight(th, points))
    return rows


def observe(
    traj: TemperatureTrajectory,
    plan: FloorPlan,
    sensor_ids: Optional[Sequence[int]] = None,
    *,
    weights: Optional[FloatArray] = None,
) -> SensorRecord:
    """Thermostat readings of a trajectory (linear in the trajectory)."""
    ids = tuple(sensor_ids) if sensor_ids is not None else tuple(th.id for th in plan.thermostats)
    s = weights if weights is not None else sensor_weights(plan, traj.space, ids)
    return SensorRecord(times=traj.times.copy(), values=traj.values @ s.T, sensor_ids=ids)


def _check_grid(times: FloatArray, other: FloatArray) -> None:
    if times.shape != other.shape or not np.allclose(times, other, rtol=0, atol=1e-9 * max(1.0, float(times[-1]))):
        raise GridMismatchError(f"Time grids differ ({times.size} vs {other.size} levels)")


def cost(
    traj: TemperatureTrajectory,
    pi0: Field,
    sensors: SensorRecord,
    eta0: float,
    eta1: float,
    plan: FloorPlan,
    *,
    weights: Optional[FloatArray] = None,
) -> CostBreakdown:
    """Tracking, initial-match and regularization terms of the estimation cost.

    Raises:
        GridMismatchError: If the sensor grid differs from the trajectory grid
    """
    _check_grid(traj.times, sensors.times)
    s = weights if weights is not None else sensor_weights(plan, traj.space, sensors.sensor_ids)
    predicted = traj.values @ s.T
    mismatch = predicted - sensors.values
    w = trapezoid_weights(traj.times)
    tracking = float(w @ np.sum(mismatch**2, axis=1))
    initial = float(eta0 * np.sum((s @ pi0.values - sensors.initial) ** 2))
    regularization = float(eta1 * (pi0.values @ (pi0.space.mass @ pi0.values)))
    return CostBreakdown(
        tracking_term=tracking,
        initial_match_term=initial,
        regularization_term=max(regularization, 0.0),
        eta0=eta0,
        eta1=eta1,
    )


def write_sensor_csv(path: str | Path, record: SensorRecord) -> Path:
    """Write ``time, sensor_<id>...`` columns; the manifest goes to a JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["time"] + [f"sensor_{i}" for i in record.sensor_ids])
        for t, row in zip(record.times, record.values):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])
    sidecar = path.with_suffix(".manifest.json")
    sidecar.write_text(
        json.dumps({"manifest": record.manifest, "sensor_ids": list(record.sensor_ids)}, indent=2),
        encoding="utf-8",
    )
    return path


def read_sensor_csv(path: str | Path) -> SensorRecord:
    """Read a sensor CSV written by write_sensor_csv (sidecar optional)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        rows = [[float(x) for x in row] for row in reader if row]
    if not header or header[0] != "time" or not all(h.startswith("sensor_") for h in header[1:]):
        raise DimensionMismatchError(f"Unexpected sensor CSV header in {path}: {header}")
    data = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(header))
    ids = tuple(int(h.split("_", 1)[1]) for h in header[1:])
    sidecar = path.with_suffix(".manifest.json")
    manifest = None
    if sidecar.exists():
        manifest = json.loads(sidecar.read_text(encoding="utf-8")).get("manifest")
    return SensorRecord(times=data[:, 0].copy(), values=data[:, 1:].copy(), sensor_ids=ids, manifest=manifest)
