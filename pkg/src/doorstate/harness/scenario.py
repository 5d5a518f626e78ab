"""Scenario configuration: plan, material, horizon, truth and estimator settings.

A scenario file is JSON mirroring :class:`Scenario`. Relative plan paths are
resolved against the directory of the scenario file, so a config and its
plan can be moved together.
"""
from __future__ import annotations
import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..constants import (
    ARMIJO_ALPHA,
    ARMIJO_BETA,
    ARMIJO_MAX_HALVINGS,
    DEFAULT_MESH_H,
    ETA0,
    ETA1,
    GAMMA,
    HORIZON,
    MAX_ITER,
    MULTISTART,
    STOP_TOL,
    TIME_STEP,
)
from ..exceptions import ConfigError, DimensionMismatchError, ManifestMismatchError
from ..floorplan import FloorPlan, MaterialParams, load_floor_plan
from ..logger import logger
from ..problem import EstimationProblem, SolverSettings
from ..thermal import SensorRecord
from ..utils import file_digest, sha256_json

__all__ = [
    "InitialFieldSpec",
    "EstimatorSettings",
    "Scenario",
    "load_scenario",
    "load_plan",
    "manifest_hash",
    "build_problem",
    "check_manifest",
]


class _Config(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class InitialFieldSpec(_Config):
    """Synthetic initial temperature: ``zero``, ``smooth_bumps`` or ``room_piecewise``."""

    kind: Literal["zero", "smooth_bumps", "room_piecewise"] = "smooth_bumps"
    amplitude: float = 1.0


class EstimatorSettings(_Config):
    gamma: float = Field(default=GAMMA, gt=0)
    alpha_bar: float = Field(default=ARMIJO_ALPHA, gt=0, lt=1)
    beta_bar: float = Field(default=ARMIJO_BETA, gt=0, lt=1)
    j_max: int = Field(default=ARMIJO_MAX_HALVINGS, ge=0)
    stop_tol: float = Field(default=STOP_TOL, ge=0)
    max_iter: int = Field(default=MAX_ITER, ge=1)
    multistart: int = Field(default=MULTISTART, ge=1)
    seed: int = 0


class Scenario(_Config):
    """One twin experiment or estimation setup.

    ``theta_true`` and ``pi0_true`` describe the ground truth used to
    generate twin data; they are not needed to estimate from external data.
    ``door_count`` keeps only the first doors of the plan.
    """

    name: str = "scenario"
    plan: Path
    material: MaterialParams = Field(default_factory=MaterialParams)
    horizon: float = Field(default=HORIZON, gt=0)
    dt: float = Field(default=TIME_STEP, gt=0)
    mesh_h: float = Field(default=DEFAULT_MESH_H, gt=0)
    theta_true: Optional[list[float]] = None
    pi0_true: InitialFieldSpec = Field(default_factory=InitialFieldSpec)
    sensors: Optional[list[int]] = None
    door_count: Optional[int] = Field(default=None, ge=0)
    noise: float = Field(default=0.0, ge=0)
    noise_seed: Optional[int] = None
    heat_scale: float = 1.0
    vent_forces: Optional[dict[int, float]] = None
    eta0: float = Field(default=ETA0, ge=0)
    eta1: float = Field(default=ETA1, ge=0)
    estimator: EstimatorSettings = Field(default_factory=EstimatorSettings)
    solver: SolverSettings = Field(default_factory=SolverSettings)

    @field_validator("sensors")
    @classmethod
    def _nonempty_sensors(cls, value: Optional[list[int]]) -> Optional[list[int]]:
        if value is not None and not value:
            raise ValueError("sensor subset must not be empty")
        return value

    @field_validator("theta_true")
    @classmethod
    def _theta_in_box(cls, value: Optional[list[float]]) -> Optional[list[float]]:
        if value is not None and any(not 0.0 <= v <= 1.0 for v in value):
            raise ValueError(f"theta_true {value} leaves [0, 1]")
        return value

    @model_validator(mode="after")
    def _truth_matches_door_count(self) -> "Scenario":
        if self.theta_true is not None and self.door_count is not None and len(self.theta_true) < self.door_count:
            raise ValueError(f"theta_true has {len(self.theta_true)} entries, door_count is {self.door_count}")
        return self

    @property
    def truth(self) -> Optional[list[float]]:
        """theta_true cut to the configured door count."""
        if self.theta_true is None:
            return None
        return self.theta_true if self.door_count is None else self.theta_true[: self.door_count]

    @property
    def twin_seed(self) -> int:
        """Seed of the twin noise; the estimator seed unless noise_seed is set."""
        return self.noise_seed if self.noise_seed is not None else self.estimator.seed


def load_scenario(path: str | Path) -> Scenario:
    """Read and validate a scenario JSON file.

    Raises:
        ConfigError: If the file is missing, not JSON, or off-schema
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"Scenario file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Scenario file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"Scenario file {path} must contain a JSON object")
    try:
        scenario = Scenario.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"Invalid scenario {path}: {exc}") from exc
    if not scenario.plan.is_absolute():
        scenario = scenario.model_copy(update={"plan": (path.parent / scenario.plan).resolve()})
    logger.debug("Loaded scenario", name=scenario.name, plan=str(scenario.plan))
    return scenario


def load_plan(scenario: Scenario) -> FloorPlan:
    plan = load_floor_plan(scenario.plan)
    if scenario.door_count is not None:
        plan = plan.with_doors(scenario.door_count)
    return plan


def manifest_hash(scenario: Scenario) -> str:
    """Hash of everything that determines twin data.

    Estimator settings and the scenario name are excluded; the plan enters
    through its file digest, not its path. Noisy data also hashes the noise
    seed, so two realizations never share a manifest.
    """
    payload = scenario.model_dump(mode="json", exclude={"estimator", "name", "plan", "noise_seed"})
    if scenario.noise > 0:
        payload["noise_seed"] = scenario.twin_seed
    payload["plan_digest"] = file_digest(scenario.plan) if scenario.plan.exists() else str(scenario.plan)
    return sha256_json(payload)


def build_problem(scenario: Scenario, *, mesh_h: Optional[float] = None) -> EstimationProblem:
    """Mesh the scenario's plan and bind an EstimationProblem."""
    h = mesh_h if mesh_h is not None else scenario.mesh_h
    problem = EstimationProblem.build(
        load_plan(scenario),
        h,
        scenario.material,
        horizon=scenario.horizon,
        dt=scenario.dt,
        sensor_ids=scenario.sensors,
        eta0=scenario.eta0,
        eta1=scenario.eta1,
        heat_scale=scenario.heat_scale,
        vent_forces=scenario.vent_forces,
        solver=scenario.solver,
    )
    logger.info(
        "Problem built",
        scenario=scenario.name,
        mesh_h=h,
        triangles=problem.mesh.n_triangles,
        doors=problem.n_doors,
        sensors=list(problem.sensor_ids),
        levels=problem.times.size,
    )
    return problem


def check_manifest(scenario: Scenario, record: SensorRecord, problem: Optional[EstimationProblem] = None) -> None:
    """Refuse data generated from a different scenario.

    Records without a manifest (external data) are accepted with a warning.

    Raises:
        ManifestMismatchError: If the stored manifest differs
        DimensionMismatchError: If the record's sensors differ from the problem's
    """
    if record.manifest is None:
        logger.warn("Sensor record carries no manifest; cannot verify its scenario")
    else:
        expected = manifest_hash(scenario)
        if record.manifest != expected:
            raise ManifestMismatchError(expected, record.manifest)
    if problem is not None and tuple(record.sensor_ids) != tuple(problem.sensor_ids):
        raise DimensionMismatchError(
            f"Record sensors {list(record.sensor_ids)} differ from the scenario's {list(problem.sensor_ids)}"
        )
