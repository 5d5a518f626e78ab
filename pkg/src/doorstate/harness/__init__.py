"""Scenario configs, twin data, calibration, derivative checks and experiment suites."""
from .calibrate import calibrate_vent_forces
from .experiment import ExperimentConfig, ExperimentReport, RunRecord, load_experiment, run_experiment, run_suite
from .gradcheck import GradcheckReport, Tolerances, gradcheck, random_directions, run_gradcheck
from .instrumentation import Measurement, get_usage, measure
from .report import ReportWriter
from .scenario import (
    EstimatorSettings,
    InitialFieldSpec,
    Scenario,
    build_problem,
    check_manifest,
    load_plan,
    load_scenario,
    manifest_hash,
)
from .twin import TwinData, generate_twin_data, initial_field

__all__ = [
    "EstimatorSettings",
    "ExperimentConfig",
    "ExperimentReport",
    "GradcheckReport",
    "InitialFieldSpec",
    "Measurement",
    "ReportWriter",
    "RunRecord",
    "Scenario",
    "Tolerances",
    "TwinData",
    "build_problem",
    "calibrate_vent_forces",
    "check_manifest",
    "generate_twin_data",
    "get_usage",
    "gradcheck",
    "initial_field",
    "load_experiment",
    "load_plan",
    "load_scenario",
    "manifest_hash",
    "measure",
    "random_directions",
    "run_experiment",
    "run_gradcheck",
    "run_suite",
]
