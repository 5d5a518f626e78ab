"""doorstate - estimate door configurations and initial temperatures from thermostat data."""

from .constants import __version__
from .estimate import baseline_estimate, error_metrics, estimate
from .floorplan import FloorPlan, MaterialParams, load_floor_plan
from .harness import Scenario, generate_twin_data, load_scenario, run_experiment
from .mesh import generate_mesh
from .problem import EstimationProblem, SolverSettings

__all__ = [
    "EstimationProblem",
    "FloorPlan",
    "MaterialParams",
    "Scenario",
    "SolverSettings",
    "__version__",
    "baseline_estimate",
    "error_metrics",
    "estimate",
    "generate_mesh",
    "generate_twin_data",
    "load_floor_plan",
    "load_scenario",
    "run_experiment",
]
