"""Three-way derivative check: adjoint gradient, tangent-linear model, central FD.

Directions in pi0 are smooth sine modes defined on the domain, not on the
mesh, so a refined mesh sees the same continuous directions for the same
seed.
"""
from __future__ import annotations
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from ..adjoint import fd_directional
from ..logger import logger
from ..problem import EstimationProblem
from ..thermal import SensorRecord
from .report import ReportWriter
from .scenario import Scenario, build_problem
from .twin import generate_twin_data

__all__ = [
    "Tolerances",
    "GradcheckRow",
    "GradcheckReport",
    "random_directions",
    "run_gradcheck",
    "gradcheck",
]

FloatArray = NDArray[np.float64]

_MODES = 3


@dataclass(frozen=True, slots=True)
class Tolerances:
    adjoint_fd: float = 0.05
    tangent_fd: float = 0.01
    adjoint_tangent: float = 0.02


@dataclass(frozen=True, slots=True)
class GradcheckRow:
    direction: int
    adjoint: float
    tangent: float
    fd: float
    err_adjoint_fd: float
    err_tangent_fd: float
    err_adjoint_tangent: float
    passed: bool


@dataclass(eq=False)
class GradcheckReport:
    """Rows of one mesh, and optionally the same check on a mesh of half the spacing.

    The advective adjoint is the discretized continuous adjoint, so its
    disagreement with finite differences must shrink under refinement; a
    refined report that does not improve fails. The conservative adjoint is
    exact for the discrete cost and only has to pass its rows.
    """

    mesh_h: float
    fd_step: float
    tolerances: Tolerances
    adjoint_convection: str = "advective"
    rows: list[GradcheckRow] = field(default_factory=list)
    refined: Optional["GradcheckReport"] = None

    @property
    def rows_passed(self) -> bool:
        return all(row.passed for row in self.rows) and (self.refined is None or self.refined.rows_passed)

    @property
    def needs_refinement_gain(self) -> bool:
        return self.refined is not None and self.adjoint_convection == "advective"

    @property
    def passed(self) -> bool:
        return self.rows_passed and (not self.needs_refinement_gain or bool(self.refinement_improves))

    @property
    def mean_adjoint_fd_error(self) -> float:
        errors = [row.err_adjoint_fd for row in self.rows if row.fd != 0.0]
        return float(np.mean(errors)) if errors else 0.0

    @property
    def refinement_improves(self) -> Optional[bool]:
        if self.refined is None:
            return None
        return self.refined.mean_adjoint_fd_error < self.mean_adjoint_fd_error


def _relative(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), np.finfo(np.float64).tiny)


def random_directions(
    problem: EstimationProblem, n_directions: int, seed: int, *, include_zero: bool = True
) -> list[tuple[FloatArray, FloatArray]]:
    """Seeded (delta_pi0, delta_theta) pairs, the zero direction first.

    delta_theta is uniform in [-1, 1]^n_d; delta_pi0 combines the first
    sine modes of the domain with Gaussian coefficients damped by mode
    number, so it vanishes on the outer boundary.
    """
    rng = np.random.default_rng(seed)
    space = problem.temperature
    x, y = space.dof_coords[:, 0], space.dof_coords[:, 1]
    w, h = problem.plan.width, problem.plan.height
    out: list[tuple[FloatArray, FloatArray]] = []
    if include_zero:
        out.append((np.zeros(space.n_dofs), np.zeros(problem.n_doors)))
    for _ in range(n_directions):
        delta_theta = rng.uniform(-1.0, 1.0, problem.n_doors)
        coefficients = rng.normal(size=(_MODES, _MODES))
        delta_pi0 = np.zeros(space.n_dofs)
        for m in range(1, _MODES + 1):
            for n in range(1, _MODES + 1):
                delta_pi0 += coefficients[m - 1, n - 1] / (m * n) * np.sin(m * np.pi * x / w) * np.sin(n * np.pi * y / h)
        out.append((problem.pi0_field(delta_pi0).values, delta_theta))
    return out


def run_gradcheck(
    problem: EstimationProblem,
    sensors: SensorRecord,
    pi0: FloatArray,
    theta: Sequence[float] | FloatArray,
    directions: Sequence[tuple[FloatArray, FloatArray]],
    *,
    h: float = 1.0e-4,
    tolerances: Tolerances = Tolerances(),
) -> GradcheckReport:
    """Compare the three directional derivatives at (pi0, theta).

    theta must lie far enough inside the box for the central difference.
    """
    theta = problem.check_theta(theta)
    pi0_field = problem.pi0_field(pi0)
    model = problem.forward_model(theta)
    traj = problem.simulate(pi0_field, model)
    bundle, _ = problem.gradient(traj, model, sensors)
    report = GradcheckReport(
        mesh_h=problem.mesh.h_max,
        fd_step=h,
        tolerances=tolerances,
        adjoint_convection=problem.solver.adjoint_convection,
    )

    for index, (delta_pi0, delta_theta) in enumerate(directions):
        adjoint = bundle.directional(delta_pi0, delta_theta)
        tangent = problem.tangent(traj, model, sensors, delta_pi0, delta_theta).dJ
        fd = fd_directional(
            lambda p, th: problem.objective(p, th, sensors),
            delta_pi0,
            delta_theta,
            h,
            pi0=pi0_field.values,
            theta=theta,
        )
        errors = (_relative(adjoint, fd), _relative(tangent, fd), _relative(adjoint, tangent))
        passed = (
            errors[0] <= tolerances.adjoint_fd
            and errors[1] <= tolerances.tangent_fd
            and errors[2] <= tolerances.adjoint_tangent
        )
        row = GradcheckRow(index, adjoint, tangent, fd, *errors, passed=passed)
        report.rows.append(row)
        logger.info(
            "Gradcheck direction",
            direction=index,
            adjoint=adjoint,
            tangent=tangent,
            fd=fd,
            err_adjoint_fd=errors[0],
            err_tangent_fd=errors[1],
            passed=passed,
        )
    return report


def _problem_and_data(scenario: Scenario, mesh_h: float) -> tuple[EstimationProblem, SensorRecord, FloatArray]:
    problem = build_problem(scenario, mesh_h=mesh_h)
    truth = scenario.truth
    if truth is None:
        truth = [float(i % 2 == 0) for i in range(problem.n_doors)]
    twin = generate_twin_data(scenario, problem, theta=np.asarray(truth, dtype=np.float64))
    return problem, twin.record, twin.pi0_true.values


def _write_csv(writer: ReportWriter, name: str, reports: Sequence[GradcheckReport]) -> Path:
    header = [
        "mesh_h",
        "direction",
        "adjoint",
        "tangent",
        "fd",
        "err_adjoint_fd",
        "err_tangent_fd",
        "err_adjoint_tangent",
        "passed",
    ]
    rows = [
        [
            report.mesh_h,
            row.direction,
            row.adjoint,
            row.tangent,
            row.fd,
            row.err_adjoint_fd,
            row.err_tangent_fd,
            row.err_adjoint_tangent,
            int(row.passed),
        ]
        for report in reports
        for row in report.rows
    ]
    return writer.write_csv(name, header, rows)


def gradcheck(
    scenario: Scenario,
    n_directions: int = 5,
    seed: int = 0,
    out_dir: str | Path = "out",
    *,
    mesh_h: Optional[float] = None,
    refine: bool = False,
    h: float = 1.0e-4,
    tolerances: Tolerances = Tolerances(),
) -> tuple[Path, GradcheckReport]:
    """Run the derivative check on twin data and write ``gradcheck.csv``.

    The data come from the scenario's truth; derivatives are taken at
    theta = 0.5 and half the true initial temperature, so every term of the
    cost contributes. With ``refine`` the check is repeated on a mesh of
    half the spacing with the same directions.

    Returns:
        (csv path, report); ``report.passed`` is False if any row fails, or
        if a refined advective check does not reduce the adjoint-vs-FD error
    """
    h_mesh = mesh_h if mesh_h is not None else scenario.mesh_h
    meshes = [h_mesh, 0.5 * h_mesh] if refine else [h_mesh]
    reports: list[GradcheckReport] = []
    for spacing in meshes:
        problem, record, pi0_true = _problem_and_data(scenario, spacing)
        theta = np.full(problem.n_doors, 0.5)
        directions = random_directions(problem, n_directions, seed)
        result = run_gradcheck(problem, record, 0.5 * pi0_true, theta, directions, h=h, tolerances=tolerances)
        result.mesh_h = spacing
        reports.append(result)
    report = reports[0]
    if refine:
        report.refined = reports[1]
        logger.info(
            "Gradcheck refinement",
            coarse=report.mean_adjoint_fd_error,
            fine=report.refined.mean_adjoint_fd_error,
            improves=report.refinement_improves,
        )
    path = _write_csv(ReportWriter(out_dir), "gradcheck.csv", reports)
    if not report.rows_passed:
        logger.error("Gradcheck tolerance failure", csv=str(path))
    elif not report.passed:
        logger.error("Gradcheck refinement did not reduce the adjoint-vs-FD error", csv=str(path))
    return path, report
