"""Vent force calibration against target mean air speeds.

Each vent's body-force magnitude is bisected until the solved mean speed
over the vent rectangle is within a relative tolerance of its target. Vents
interact through the flow, so the per-vent bisections are repeated in
Gauss-Seidel sweeps with the other vents held at their latest values, until
one solve with the final forces puts every vent within tolerance.
"""
from __future__ import annotations
from typing import Optional

import numpy as np

from ..exceptions import CalibrationError
from ..flow import FlowSolution, make_flow_problem, region_mean_speed, solve_flow, vent_forcing
from ..logger import logger
from ..problem import EstimationProblem
from .scenario import Scenario, build_problem

__all__ = ["calibrate_vent_forces"]


def calibrate_vent_forces(
    scenario: Scenario,
    problem: Optional[EstimationProblem] = None,
    *,
    tolerance: float = 0.05,
    initial_force: float = 1.0e-2,
    max_doublings: int = 30,
    max_bisections: int = 60,
    max_sweeps: int = 10,
) -> Scenario:
    """Fit vent force magnitudes to the plan's ``target_speed`` values.

    The flow is solved at the scenario's true door configuration, or with
    all doors open when none is set. Vents without a target keep their force;
    a zero target switches the vent off. Forces already within tolerance are
    returned without bisecting.

    Args:
        scenario: Scenario to calibrate
        problem: Problem built from the scenario (built when None)
        tolerance: Accepted relative speed error
        initial_force: First upper bracket for a vent without a force
        max_doublings: Bracket expansions before giving up
        max_bisections: Bisection steps before giving up
        max_sweeps: Passes over all vents before giving up

    Returns:
        Copy of the scenario with ``vent_forces`` set

    Raises:
        CalibrationError: If a target speed cannot be bracketed or reached, or
            the vents are still out of tolerance after ``max_sweeps`` passes
    """
    problem = problem if problem is not None else build_problem(scenario)
    plan = problem.plan
    theta = np.asarray(scenario.truth if scenario.truth is not None else np.ones(problem.n_doors), dtype=np.float64)
    alpha, _ = problem.material(theta)
    forces = {vent.id: vent.force_magnitude for vent in plan.vents}
    if scenario.vent_forces:
        forces.update(scenario.vent_forces)
    targets = {vent.id: vent.target_speed for vent in plan.vents if vent.target_speed is not None}
    if not targets:
        logger.warn("No vent has a target speed; nothing to calibrate")
        return scenario
    rects = {vent.id: vent.rect for vent in plan.vents}
    guess: list[Optional[FlowSolution]] = [None]

    def solve(trial: dict[int, float]) -> FlowSolution:
        flow_problem = make_flow_problem(
            problem.mesh,
            alpha,
            vent_forcing(plan, problem.points, trial),
            problem.params.reynolds,
            velocity=problem.velocity,
            pressure=problem.pressure,
        )
        flow = solve_flow(
            flow_problem,
            guess[0],
            tol=problem.solver.newton_tol,
            max_iter=problem.solver.newton_max_iter,
            continuation=problem.solver.continuation,
        )
        guess[0] = flow
        return flow

    def mean_speed(vent_id: int, force: float) -> float:
        return region_mean_speed(solve({**forces, vent_id: force}), rects[vent_id])

    def within(speed: float, target: float) -> bool:
        return abs(speed - target) <= tolerance * target

    def off_target() -> dict[int, float]:
        # zero targets are met by switching the vent off
        flow = solve(forces)
        speeds = {vent_id: region_mean_speed(flow, rects[vent_id]) for vent_id in targets}
        return {
            vent_id: speed
            for vent_id, speed in speeds.items()
            if targets[vent_id] > 0.0 and not within(speed, targets[vent_id])
        }

    for vent_id, target in targets.items():
        if target == 0.0:
            forces[vent_id] = 0.0
    missed = off_target()
    if not missed:
        logger.info("Vent forces already within tolerance", forces=forces)
        return scenario.model_copy(update={"vent_forces": forces})
    for sweep in range(max_sweeps):
        for vent_id, target in targets.items():
            if target == 0.0:
                continue
            lo, hi = 0.0, forces[vent_id] if forces[vent_id] > 0 else initial_force
            speed = mean_speed(vent_id, hi)
            doublings = 0
            while speed < target:
                if within(speed, target):
                    break
                lo, hi = hi, 2.0 * hi
                doublings += 1
                if doublings > max_doublings:
                    raise CalibrationError(
                        f"Vent {vent_id}: speed {speed:.3e} at force {hi:.3e} still below target {target:.3e}"
                    )
                speed = mean_speed(vent_id, hi)
            force = hi
            for step in range(max_bisections):
                if within(speed, target):
                    break
                force = 0.5 * (lo + hi)
                speed = mean_speed(vent_id, force)
                logger.debug("Calibration bisection", vent=vent_id, step=step, force=force, speed=speed, target=target)
                if speed < target:
                    lo = force
                else:
                    hi = force
            if not within(speed, target):
                raise CalibrationError(
                    f"Vent {vent_id}: no force within {tolerance:.0%} of target {target:.3e} after {max_bisections} bisections"
                )
            forces[vent_id] = force
            logger.debug("Vent bisected", sweep=sweep, vent=vent_id, force=force, speed=speed, target=target)
        missed = off_target()
        if not missed:
            logger.info("Vents calibrated", sweeps=sweep + 1, forces=forces)
            return scenario.model_copy(update={"vent_forces": forces})
        logger.debug("Calibration sweep left vents off target", sweep=sweep, vents=sorted(missed))
    detail = ", ".join(f"vent {vent_id} at {speed:.3e} (target {targets[vent_id]:.3e})" for vent_id, speed in sorted(missed.items()))
    raise CalibrationError(f"Vents off target by more than {tolerance:.0%} after {max_sweeps} sweeps: {detail}")
