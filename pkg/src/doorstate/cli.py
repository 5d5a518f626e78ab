"""Command-line interface for doorstate.

This module provides commands:
- mesh: Mesh a floor plan and report its size (optionally as VTK)
- forward: Solve flow and temperature for a scenario's true configuration
- twin: Generate synthetic thermostat data for a scenario
- estimate: Run the gradient method on twin or recorded data
- baseline: Run the enumeration baseline on twin or recorded data
- experiment: Run an experiment suite and write the report files
- gradcheck: Compare adjoint, tangent-linear and finite-difference derivatives
- calibrate: Fit vent forces to the plan's target air speeds
"""
from __future__ import annotations
import argparse
import json
import sys
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .constants import DEFAULT_LOG_LEVEL, DEFAULT_MESH_H, FULL_SCALE_MESH_H, __version__
from .estimate import baseline_estimate, binarize, error_metrics, estimate
from .exceptions import DoorstateError
from .floorplan import load_floor_plan, normalize_bumps
from .flow import divergence_norm, region_mean_speed
from .harness import (
    ReportWriter,
    Scenario,
    build_problem,
    calibrate_vent_forces,
    check_manifest,
    generate_twin_data,
    gradcheck,
    initial_field,
    load_scenario,
    measure,
    run_experiment,
)
from .logger import configure_logging, logger
from .mesh import generate_mesh
from .problem import EstimationProblem
from .thermal import SensorRecord, read_sensor_csv, write_sensor_csv
from .vtk import write_flow_vtk, write_mesh_vtk, write_temperature_vtk

GRADCHECK_FAILURE = 2


def _mesh_h(args: argparse.Namespace, default: float) -> float:
    if getattr(args, "full_scale", False):
        return FULL_SCALE_MESH_H
    if getattr(args, "mesh_h", None) is not None:
        return float(args.mesh_h)
    return default


def _scenario(args: argparse.Namespace) -> Scenario:
    """Load --config and apply the plan, mesh and seed flags."""
    if not args.config:
        raise SystemExit(f"{args.cmd} needs --config")
    scenario = load_scenario(args.config)
    updates: dict[str, Any] = {"mesh_h": _mesh_h(args, scenario.mesh_h)}
    if args.plan:
        updates["plan"] = Path(args.plan).resolve()
    if args.seed is not None:
        updates["estimator"] = scenario.estimator.model_copy(update={"seed": args.seed})
        updates["noise_seed"] = args.seed
    return scenario.model_copy(update=updates)


def _mesh(args: argparse.Namespace) -> None:
    """Mesh a plan and write a summary (and the tagged mesh as VTK)."""
    if args.config:
        scenario = _scenario(args)
        plan_path, h = scenario.plan, scenario.mesh_h
    elif args.plan:
        plan_path, h = Path(args.plan), _mesh_h(args, DEFAULT_MESH_H)
    else:
        raise SystemExit("mesh needs --plan or --config")
    plan = load_floor_plan(plan_path)
    mesh = generate_mesh(plan, h)
    plan = normalize_bumps(plan, mesh)
    writer = ReportWriter(args.out_dir)
    summary = {
        "plan": str(plan_path),
        "target_h": h,
        "h_max": mesh.h_max,
        "vertices": mesh.n_vertices,
        "triangles": mesh.n_triangles,
        "doors": plan.n_doors,
        "thermostat_sigma": {th.id: th.sigma for th in plan.thermostats},
        "fingerprint": mesh.fingerprint,
    }
    writer.write("mesh.json", summary)
    if args.vtk:
        write_mesh_vtk(writer.path("mesh.vtk"), mesh, plan)
    print(f"✓ Mesh: {mesh.n_triangles} triangles, {mesh.n_vertices} vertices, h_max={mesh.h_max:.3g} → {writer.root}")


def _forward(args: argparse.Namespace) -> None:
    """Forward solve at the scenario's true configuration."""
    scenario = _scenario(args)
    problem = build_problem(scenario)
    twin = generate_twin_data(scenario, problem)
    flow = twin.model.flow
    writer = ReportWriter(args.out_dir)
    summary = {
        "scenario": scenario.name,
        "theta": twin.theta_true,
        "divergence_norm": divergence_norm(flow),
        "newton_iterations": flow.newton_iterations,
        "continuation": list(flow.continuation),
        "door_mean_speed": {door.id: region_mean_speed(flow, door.rect) for door in problem.plan.doors},
        "vent_mean_speed": {vent.id: region_mean_speed(flow, vent.rect) for vent in problem.plan.vents},
        "pi0_norm": twin.pi0_true.l2_norm(),
        "final_temperature_norm": twin.trajectory.field(twin.trajectory.n_steps).l2_norm(),
    }
    writer.write("forward.json", summary)
    write_sensor_csv(writer.path("sensors.csv"), problem.observe(twin.trajectory))
    if args.vtk:
        write_flow_vtk(writer.path("flow.vtk"), flow)
        write_temperature_vtk(writer.path("temperature"), twin.trajectory)
    print(f"✓ Forward solve: div={summary['divergence_norm']:.2e} → {writer.root}")


def _twin(args: argparse.Namespace) -> None:
    scenario = _scenario(args)
    twin = generate_twin_data(scenario, seed=args.seed)
    path = write_sensor_csv(Path(args.out_dir) / "twin.csv", twin.record)
    print(f"✓ Twin data ({len(twin.record.sensor_ids)} sensors, {twin.record.times.size} levels) → {path}")


def _data(args: argparse.Namespace, scenario: Scenario, problem: EstimationProblem) -> tuple[SensorRecord, Optional[Any]]:
    """Recorded data from --data (manifest-checked), or fresh twin data."""
    if args.data:
        record = read_sensor_csv(args.data)
        check_manifest(scenario, record, problem)
        return record, None
    twin = generate_twin_data(scenario, problem, seed=args.seed)
    return twin.record, twin


def _truth(scenario: Scenario, problem: EstimationProblem, twin: Optional[Any]) -> Optional[tuple[Any, Any]]:
    if twin is not None:
        return twin.theta_true, twin.pi0_true
    if scenario.truth is None:
        return None
    return np.asarray(scenario.truth, dtype=np.float64), initial_field(scenario.pi0_true, problem)


def _estimate(args: argparse.Namespace, method: str) -> None:
    """Estimate theta and pi0 with the gradient method or the baseline."""
    scenario = _scenario(args)
    settings = scenario.estimator
    problem = build_problem(scenario)
    record, twin = _data(args, scenario, problem)
    theta_init = np.full(problem.n_doors, 0.5)
    pi0_init = np.zeros(problem.temperature.n_dofs)
    with measure() as usage:
        if method == "G":
            state = estimate(
                problem,
                record,
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
                record,
                theta_init,
                pi0_init,
                settings.max_iter,
                stop_tol=settings.stop_tol,
                gamma=settings.gamma,
                alpha_bar=settings.alpha_bar,
                beta_bar=settings.beta_bar,
                j_max=settings.j_max,
            )
            state, theta_hat, pi0_hat = baseline, baseline.p, baseline.e_pi0  # type: ignore[assignment]
    result: dict[str, Any] = {
        "method": method,
        "status": state.status,
        "theta_hat": theta_hat,
        "theta_binary": binarize(theta_hat),
        "iterations": state.iteration,
        "cost_history": [c.as_dict() for c in state.cost_history],
        "V_history": state.V_history,
        "solve_counts": state.solve_counter.as_dict(),
        "peak_memory_bytes": usage.peak_bytes,
        "max_rss_kb": usage.max_rss_kb,
        "wall_time": usage.wall_time,
    }
    truth = _truth(scenario, problem, twin)
    if truth is not None:
        metrics = error_metrics(truth[0], theta_hat, truth[1], pi0_hat)
        result.update(metrics.as_dict())
    name = "estimate.json" if method == "G" else "baseline.json"
    path = ReportWriter(args.out_dir).write(name, result)
    print(f"✓ {state.status} after {state.iteration} iterations, theta={np.round(theta_hat, 3).tolist()} → {path}")


def _experiment(args: argparse.Namespace) -> None:
    if not args.config:
        raise SystemExit("experiment needs --config")
    mesh_h = FULL_SCALE_MESH_H if args.full_scale else args.mesh_h
    report = run_experiment(
        args.config, args.out_dir, seed=args.seed, workers=args.workers, mesh_h=mesh_h, plan=args.plan
    )
    failed = sum(1 for run in report.runs if not run.ok)
    print(f"✓ {len(report.runs)} runs ({failed} failed) → {args.out_dir}")


def _gradcheck(args: argparse.Namespace) -> None:
    scenario = _scenario(args)
    path, report = gradcheck(
        scenario,
        args.directions,
        args.seed if args.seed is not None else scenario.estimator.seed,
        args.out_dir,
        refine=args.refine,
    )
    if report.refinement_improves is not None:
        print(f"Refinement improves adjoint-vs-FD error: {report.refinement_improves}")
    if not report.rows_passed:
        print(f"✗ Gradcheck tolerance failure → {path}", file=sys.stderr)
        sys.exit(GRADCHECK_FAILURE)
    if not report.passed:
        print(f"✗ Gradcheck refinement did not reduce the adjoint-vs-FD error → {path}", file=sys.stderr)
        sys.exit(GRADCHECK_FAILURE)
    print(f"✓ Gradcheck passed ({len(report.rows)} directions) → {path}")


def _calibrate(args: argparse.Namespace) -> None:
    scenario = _scenario(args)
    calibrated = calibrate_vent_forces(scenario)
    payload = json.loads(calibrated.model_dump_json(exclude={"plan"}))
    payload["plan"] = str(scenario.plan)
    path = ReportWriter(args.out_dir).write(f"{scenario.name}.calibrated.json", payload)
    print(f"✓ Vent forces {calibrated.vent_forces} → {path}")


def _add_common(parser: argparse.ArgumentParser, *, nested: bool = False) -> None:
    """Flags accepted before or after the subcommand.

    Subcommand copies default to SUPPRESS so they never overwrite a value
    given on the main parser.
    """

    def default(value: Any) -> Any:
        return argparse.SUPPRESS if nested else value

    parser.add_argument("--config", default=default(None), help="Scenario (or experiment) JSON file")
    parser.add_argument("--plan", default=default(None), help="Floor-plan JSON file (overrides the scenario's plan)")
    parser.add_argument("--out-dir", default=default("out"), help="Output directory (default: out)")
    parser.add_argument("--seed", type=int, default=default(None), help="Seed overriding the config")
    parser.add_argument("--mesh-h", type=float, default=default(None), help="Target mesh spacing")
    parser.add_argument(
        "--paper-scale",
        "--full-scale",
        dest="full_scale",
        action="store_true",
        default=default(False),
        help=f"Use the full-scale mesh (h={FULL_SCALE_MESH_H})",
    )
    parser.add_argument("--verbose", action="store_true", default=default(False), help="Log debug output")


def main(argv: Optional[list[str]] = None) -> None:
    p = argparse.ArgumentParser(prog="doorstate", description="Door configuration and initial temperature estimation")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_common(p)
    sub = p.add_subparsers(dest="cmd", required=True)

    s_mesh = sub.add_parser("mesh", help="Mesh a floor plan")
    _add_common(s_mesh, nested=True)
    s_mesh.add_argument("--vtk", action="store_true", help="Write mesh.vtk with region tags")

    s_forward = sub.add_parser("forward", help="Forward solve at the true configuration")
    _add_common(s_forward, nested=True)
    s_forward.add_argument("--vtk", action="store_true", help="Write flow and temperature VTK files")

    s_twin = sub.add_parser("twin", help="Generate synthetic sensor data")
    _add_common(s_twin, nested=True)

    s_est = sub.add_parser("estimate", help="Run the gradient method")
    _add_common(s_est, nested=True)
    s_est.add_argument("--data", help="Sensor CSV to estimate from (default: fresh twin data)")

    s_base = sub.add_parser("baseline", help="Run the enumeration baseline")
    _add_common(s_base, nested=True)
    s_base.add_argument("--data", help="Sensor CSV to estimate from (default: fresh twin data)")

    s_exp = sub.add_parser("experiment", help="Run an experiment suite")
    _add_common(s_exp, nested=True)
    s_exp.add_argument("--workers", type=int, default=None, help="Worker threads (default: config or DOORSTATE_WORKERS)")

    s_grad = sub.add_parser("gradcheck", help="Check adjoint and tangent derivatives against finite differences")
    _add_common(s_grad, nested=True)
    s_grad.add_argument("--directions", type=int, default=5, help="Random directions (default: 5)")
    s_grad.add_argument("--refine", action="store_true", help="Repeat on a mesh of half the spacing")

    s_cal = sub.add_parser("calibrate", help="Fit vent forces to target speeds")
    _add_common(s_cal, nested=True)

    args = p.parse_args(argv)
    configure_logging("DEBUG" if args.verbose else DEFAULT_LOG_LEVEL)
    logger.debug("doorstate", version=__version__, command=args.cmd)
    try:
        if args.cmd == "mesh":
            _mesh(args)
        elif args.cmd == "forward":
            _forward(args)
        elif args.cmd == "twin":
            _twin(args)
        elif args.cmd == "estimate":
            _estimate(args, "G")
        elif args.cmd == "baseline":
            _estimate(args, "B")
        elif args.cmd == "experiment":
            _experiment(args)
        elif args.cmd == "gradcheck":
            _gradcheck(args)
        elif args.cmd == "calibrate":
            _calibrate(args)
    except DoorstateError as e:
        print(f"✗ {e}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
