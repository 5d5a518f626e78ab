"""Experiment suites: twin datasets x methods x multistarts.

A suite generates one twin dataset per (door count, true configuration,
initial field), runs the gradient method ("G") and the enumeration baseline
("B") from the same seeded starting points, and writes a per-run table,
aggregate means and plot-data files. Runs execute in worker threads; the
report is assembled in configuration order.
"""
from __future__ import annotations
import json
import tracemalloc
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ..constants import DEFAULT_WORKERS
from ..estimate import baseline_estimate, binarize, error_metrics, estimate
from ..exceptions import ConfigError
from ..logger import logger
from ..parallel import map_ordered
from ..problem import EstimationProblem
from .instrumentation import measure
from .report import ReportWriter
from .scenario import InitialFieldSpec, Scenario, build_problem, load_scenario
from .twin import TwinData, generate_twin_data

__all__ = [
    "ExperimentConfig",
    "RunRecord",
    "ExperimentReport",
    "load_experiment",
    "run_experiment",
    "run_suite",
]

FloatArray = NDArray[np.float64]
Method = Literal["G", "B"]


class ExperimentConfig(BaseModel):
    """Grid of twin datasets and estimator runs on top of a base scenario."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "experiment"
    scenario: Path
    thetas: list[list[float]]
    initial_fields: list[InitialFieldSpec] = Field(
        default_factory=lambda: [InitialFieldSpec(kind="smooth_bumps"), InitialFieldSpec(kind="room_piecewise")]
    )
    methods: list[Method] = Field(default_factory=lambda: ["G", "B"])
    sensors: Optional[list[int]] = None
    door_counts: Optional[list[int]] = None
    multistart: Optional[int] = Field(default=None, ge=1)
    max_iter: Optional[int] = Field(default=None, ge=1)
    noise: Optional[float] = Field(default=None, ge=0)
    mesh_h: Optional[float] = Field(default=None, gt=0)
    seed: Optional[int] = None
    workers: int = Field(default=DEFAULT_WORKERS, ge=1)

    @field_validator("thetas")
    @classmethod
    def _thetas_in_box(cls, value: list[list[float]]) -> list[list[float]]:
        if not value:
            raise ValueError("at least one true configuration is needed")
        for theta in value:
            if any(not 0.0 <= v <= 1.0 for v in theta):
                raise ValueError(f"theta {theta} leaves [0, 1]")
        return value

    @field_validator("methods")
    @classmethod
    def _methods_nonempty(cls, value: list[Method]) -> list[Method]:
        if not value:
            raise ValueError("at least one method is needed")
        return value


@dataclass(eq=False)
class RunRecord:
    """Outcome of one estimator run; ``status`` is "failed" with ``error`` set on failure."""

    run_id: str
    dataset_id: str
    method: str
    init_id: int
    n_doors: int
    theta_true: list[float]
    theta_init: list[float]
    status: str = "pending"
    theta_hat: list[float] = field(default_factory=list)
    theta_binary: list[float] = field(default_factory=list)
    e_theta: float = float("nan")
    e_theta_binary: float = float("nan")
    e_pi0: float = float("nan")
    e_pi0_relative: bool = True
    per_door: list[float] = field(default_factory=list)
    iterations: int = 0
    cost_history: list[float] = field(default_factory=list)
    V_history: list[float] = field(default_factory=list)
    solve_counts: dict[str, Any] = field(default_factory=dict)
    peak_memory_bytes: int = 0
    max_rss_kb: float = 0.0
    memory_exclusive: bool = True
    wall_time: float = 0.0
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status != "failed"

    @property
    def forward_solves_per_iteration(self) -> float:
        per_iteration = self.solve_counts.get("per_iteration") or []
        return float(np.mean(per_iteration)) if per_iteration else float("nan")

    def as_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "dataset_id": self.dataset_id,
            "method": self.method,
            "init_id": self.init_id,
            "n_doors": self.n_doors,
            "status": self.status,
            "theta_true": self.theta_true,
            "theta_init": self.theta_init,
            "theta_hat": self.theta_hat,
            "theta_binary": self.theta_binary,
            "e_theta": self.e_theta,
            "e_theta_binary": self.e_theta_binary,
            "e_pi0": self.e_pi0,
            "e_pi0_relative": self.e_pi0_relative,
            "per_door": self.per_door,
            "iterations": self.iterations,
            "cost_history": self.cost_history,
            "V_history": self.V_history,
            "solve_counts": self.solve_counts,
            "peak_memory_bytes": self.peak_memory_bytes,
            "max_rss_kb": self.max_rss_kb,
            "memory_exclusive": self.memory_exclusive,
            "wall_time": self.wall_time,
            "error": self.error,
        }


@dataclass(eq=False)
class ExperimentReport:
    """Runs and per-(method, door count) aggregates of one suite.

    ``memory_exclusive`` is False when runs shared the process (workers > 1);
    their traced peaks then include allocations of concurrent runs.
    """

    name: str
    seed: int
    runs: list[RunRecord]
    memory_exclusive: bool = True
    aggregates: list[dict[str, Any]] = field(default_factory=list)

    def runs_for(self, method: str, n_doors: Optional[int] = None) -> list[RunRecord]:
        return [r for r in self.runs if r.method == method and r.ok and (n_doors is None or r.n_doors == n_doors)]

    def mean(self, metric: str, method: str, n_doors: Optional[int] = None) -> float:
        values = [getattr(r, metric) for r in self.runs_for(method, n_doors)]
        return float(np.mean(values)) if values else float("nan")


@dataclass(eq=False)
class _Dataset:
    dataset_id: str
    problem: EstimationProblem
    twin: TwinData


@dataclass(frozen=True, slots=True)
class _RunSpec:
    dataset: int
    method: str
    start: int
    theta_init: tuple[float, ...]


def load_experiment(path: str | Path) -> tuple[ExperimentConfig, Scenario]:
    """Read an experiment config and the scenario it points to.

    Raises:
        ConfigError: If either file is missing, not JSON, or off-schema
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
        config = ExperimentConfig.model_validate(raw)
    except FileNotFoundError as exc:
        raise ConfigError(f"Experiment file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Experiment file {path} is not valid JSON: {exc}") from exc
    except ValidationError as exc:
        raise ConfigError(f"Invalid experiment {path}: {exc}") from exc
    scenario_path = config.scenario if config.scenario.is_absolute() else path.parent / config.scenario
    return config, load_scenario(scenario_path)


def _variant(scenario: Scenario, config: ExperimentConfig, door_count: Optional[int]) -> Scenario:
    updates: dict[str, Any] = {"door_count": door_count}
    if config.sensors is not None:
        updates["sensors"] = list(config.sensors)
    if config.noise is not None:
        updates["noise"] = config.noise
    if config.mesh_h is not None:
        updates["mesh_h"] = config.mesh_h
    return scenario.model_copy(update=updates)


def _execute(dataset: _Dataset, spec: _RunSpec, scenario: Scenario, run_id: str) -> RunRecord:
    settings = scenario.estimator
    twin = dataset.twin
    problem = dataset.problem.fork()
    record = RunRecord(
        run_id=run_id,
        dataset_id=dataset.dataset_id,
        method=spec.method,
        init_id=spec.start,
        n_doors=problem.n_doors,
        theta_true=[float(v) for v in twin.theta_true],
        theta_init=list(spec.theta_init),
    )
    theta_init = np.asarray(spec.theta_init, dtype=np.float64)
    pi0_init = np.zeros(problem.temperature.n_dofs)
    with measure() as usage:
        try:
            if spec.method == "G":
                state = estimate(
                    problem,
                    twin.record,
                    pi0_init,
                    theta_init,
                    settings.stop_tol,
                    settings.max_iter,
                    gamma=settings.gamma,
                    alpha_bar=settings.alpha_bar,
                    beta_bar=settings.beta_bar,
                    j_max=settings.j_max,
                )
                theta_hat, pi0_hat = state.theta, state.pi0
            else:
                baseline = baseline_estimate(
                    problem,
                    twin.record,
                    theta_init,
                    pi0_init,
                    settings.max_iter,
                    stop_tol=settings.stop_tol,
                    gamma=settings.gamma,
                    alpha_bar=settings.alpha_bar,
                    beta_bar=settings.beta_bar,
                    j_max=settings.j_max,
                    workers=1,
                )
                state, theta_hat, pi0_hat = baseline, baseline.p, baseline.e_pi0  # type: ignore[assignment]
        except Exception as exc:
            record.status = "failed"
            record.error = f"{type(exc).__name__}: {exc}"
            logger.error("Run failed", run=run_id, error=record.error)
    record.wall_time = usage.wall_time
    record.peak_memory_bytes = usage.peak_bytes
    record.max_rss_kb = usage.max_rss_kb
    if not record.ok:
        return record

    metrics = error_metrics(twin.theta_true, theta_hat, twin.pi0_true, pi0_hat)
    binary = binarize(theta_hat)
    record.status = state.status
    record.theta_hat = [float(v) for v in theta_hat]
    record.theta_binary = [float(v) for v in binary]
    record.e_theta = metrics.e_theta
    record.e_theta_binary = float(np.mean(np.abs(binary - twin.theta_true))) if binary.size else 0.0
    record.e_pi0 = metrics.e_pi0
    record.e_pi0_relative = metrics.relative
    record.per_door = list(metrics.per_door)
    record.iterations = state.iteration
    record.cost_history = [c.total for c in state.cost_history]
    record.V_history = [float(v) for v in state.V_history]
    record.solve_counts = state.solve_counter.as_dict()
    logger.info(
        "Run finished",
        run=run_id,
        status=record.status,
        e_theta=record.e_theta,
        e_pi0=record.e_pi0,
        iterations=record.iterations,
    )
    return record


def _aggregate(runs: list[RunRecord]) -> list[dict[str, Any]]:
    groups: dict[tuple[str, int], list[RunRecord]] = {}
    for run in runs:
        groups.setdefault((run.method, run.n_doors), []).append(run)
    out = []
    for (method, n_doors), members in sorted(groups.items()):
        ok = [r for r in members if r.ok]

        def mean(values: list[float]) -> float:
            return float(np.mean(values)) if values else float("nan")

        per_door = np.mean([r.per_door for r in ok], axis=0).tolist() if ok and n_doors else []
        out.append(
            {
                "method": method,
                "n_doors": n_doors,
                "runs": len(members),
                "failed": len(members) - len(ok),
                "mean_e_theta": mean([r.e_theta for r in ok]),
                "mean_e_theta_binary": mean([r.e_theta_binary for r in ok]),
                "mean_e_pi0": mean([r.e_pi0 for r in ok]),
                "mean_per_door": per_door,
                "mean_iterations": mean([float(r.iterations) for r in ok]),
                "forward_solves_per_iteration": mean([r.forward_solves_per_iteration for r in ok]),
                "mean_peak_memory_bytes": mean([float(r.peak_memory_bytes) for r in ok]),
                "max_rss_kb": max((r.max_rss_kb for r in ok), default=0.0),
                "memory_exclusive": all(r.memory_exclusive for r in members),
                "mean_wall_time": mean([r.wall_time for r in ok]),
            }
        )
    return out


_CSV_COLUMNS = (
    "run_id",
    "dataset_id",
    "method",
    "init_id",
    "n_doors",
    "status",
    "theta_true",
    "theta_hat",
    "theta_binary",
    "e_theta",
    "e_theta_binary",
    "e_pi0",
    "per_door",
    "iterations",
    "forward_solves_per_iteration",
    "peak_memory_bytes",
    "max_rss_kb",
    "memory_exclusive",
    "wall_time",
    "error",
)


def write_report(report: ExperimentReport, out_dir: str | Path) -> ReportWriter:
    """Write report.csv, report.json and the plotdata/*.csv files."""
    writer = ReportWriter(out_dir)
    writer.write_csv(
        "report.csv",
        _CSV_COLUMNS,
        ([getattr(run, column) if column != "error" else (run.error or "") for column in _CSV_COLUMNS] for run in report.runs),
    )
    writer.write(
        "report.json",
        {
            "experiment": report.name,
            "seed": report.seed,
            "memory_exclusive": report.memory_exclusive,
            "runs": [run.as_dict() for run in report.runs],
            "aggregates": report.aggregates,
        },
    )
    writer.write_csv(
        "plotdata/errors_by_method.csv",
        ("method", "n_doors", "mean_e_theta", "mean_e_theta_binary", "mean_e_pi0", "runs", "failed"),
        (
            [a["method"], a["n_doors"], a["mean_e_theta"], a["mean_e_theta_binary"], a["mean_e_pi0"], a["runs"], a["failed"]]
            for a in report.aggregates
        ),
    )
    writer.write_csv(
        "plotdata/per_door_errors.csv",
        ("method", "n_doors", "door", "mean_abs_error"),
        (
            [a["method"], a["n_doors"], door + 1, value]
            for a in report.aggregates
            for door, value in enumerate(a["mean_per_door"])
        ),
    )
    writer.write_csv(
        "plotdata/memory_vs_doors.csv",
        ("method", "n_doors", "forward_solves_per_iteration", "mean_peak_memory_bytes", "max_rss_kb", "memory_exclusive"),
        (
            [
                a["method"],
                a["n_doors"],
                a["forward_solves_per_iteration"],
                a["mean_peak_memory_bytes"],
                a["max_rss_kb"],
                int(a["memory_exclusive"]),
            ]
            for a in report.aggregates
        ),
    )
    writer.write_csv(
        "plotdata/cost_histories.csv",
        ("run_id", "method", "iteration", "cost"),
        ([run.run_id, run.method, k, c] for run in report.runs for k, c in enumerate(run.cost_history)),
    )
    return writer


def run_suite(
    config: ExperimentConfig,
    scenario: Scenario,
    *,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    mesh_h: Optional[float] = None,
) -> ExperimentReport:
    """Generate the datasets and execute every configured run.

    Randomness comes from one seed: run starting points are drawn from a
    generator keyed by (seed, dataset, start), so G and B share starts and
    the suite is reproducible regardless of worker count.
    """
    seed = seed if seed is not None else (config.seed if config.seed is not None else scenario.estimator.seed)
    workers = workers if workers is not None else config.workers
    multistart = config.multistart or scenario.estimator.multistart
    if config.max_iter is not None:
        scenario = scenario.model_copy(
            update={"estimator": scenario.estimator.model_copy(update={"max_iter": config.max_iter})}
        )

    datasets: list[_Dataset] = []
    for door_count in config.door_counts or [None]:
        variant = _variant(scenario, config, door_count)
        problem = build_problem(variant, mesh_h=mesh_h)
        for t_index, theta in enumerate(config.thetas):
            theta_true = np.asarray(theta[: problem.n_doors], dtype=np.float64)
            for f_index, spec in enumerate(config.initial_fields):
                twin = generate_twin_data(variant, problem, theta=theta_true, pi0=spec, seed=seed)
                dataset_id = f"d{problem.n_doors}-t{t_index}-{spec.kind}"
                datasets.append(_Dataset(dataset_id, problem, twin))
    logger.info("Datasets generated", experiment=config.name, datasets=len(datasets))

    specs: list[_RunSpec] = []
    for d_index, dataset in enumerate(datasets):
        for start in range(multistart):
            rng = np.random.default_rng([seed, d_index, start])
            theta_init = tuple(float(v) for v in rng.uniform(0.0, 1.0, dataset.problem.n_doors))
            for method in config.methods:
                specs.append(_RunSpec(d_index, method, start, theta_init))

    exclusive = workers <= 1
    if not exclusive:
        logger.warn("Traced peak memory is shared between concurrent runs", workers=workers)

    def run_one(spec: _RunSpec) -> RunRecord:
        dataset = datasets[spec.dataset]
        record = _execute(dataset, spec, scenario, f"{dataset.dataset_id}-{spec.method}-s{spec.start}")
        record.memory_exclusive = exclusive
        return record

    logger.info("Running suite", experiment=config.name, runs=len(specs), workers=workers)
    tracing = not tracemalloc.is_tracing()
    if tracing:
        tracemalloc.start()
    try:
        runs = map_ordered(run_one, specs, workers)
    finally:
        if tracing:
            tracemalloc.stop()
    return ExperimentReport(
        name=config.name, seed=seed, runs=runs, memory_exclusive=exclusive, aggregates=_aggregate(runs)
    )


def run_experiment(
    config_path: str | Path,
    out_dir: str | Path = "out",
    *,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    mesh_h: Optional[float] = None,
    plan: Optional[str | Path] = None,
) -> ExperimentReport:
    """Load an experiment config, run the suite and write the report files.

    ``plan`` replaces the floor plan of the experiment's base scenario.
    """
    config, scenario = load_experiment(config_path)
    if plan is not None:
        scenario = scenario.model_copy(update={"plan": Path(plan).resolve()})
    report = run_suite(config, scenario, seed=seed, workers=workers, mesh_h=mesh_h)
    write_report(report, out_dir)
    for aggregate in report.aggregates:
        logger.info(
            "Suite summary",
            method=aggregate["method"],
            n_doors=aggregate["n_doors"],
            e_theta=aggregate["mean_e_theta"],
            e_pi0=aggregate["mean_e_pi0"],
            solves_per_iteration=aggregate["forward_solves_per_iteration"],
        )
    return report
