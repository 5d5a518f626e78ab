"""Constants and default configuration values for doorstate.

Environment Variables:
    DOORSTATE_MESH_H: Default target mesh spacing for desk-scale runs (default: 0.35)
    DOORSTATE_WORKERS: Worker threads for independent solves (default: 1)
    DOORSTATE_LOG_LEVEL: Log level name used by the CLI (default: INFO)
    DOORSTATE_BASELINE_MAX_DOORS: Largest door count the enumeration baseline
        accepts before refusing the 2^n_d solve budget (default: 10)

Examples:
    # Run the experiment suite with four workers on a finer mesh:
    $ DOORSTATE_WORKERS=4 DOORSTATE_MESH_H=0.25 doorstate experiment --config configs/experiment_three_sensors.json
"""
from __future__ import annotations
import importlib.metadata
import os

# Package version - try to get from metadata, fallback to hardcoded
try:
    __version__ = importlib.metadata.version("doorstate")
except Exception:
    __version__ = "0.3.1"  # Fallback for development

# Material constants of the apartment scenario (nondimensional)
REYNOLDS = 100.0
ALPHA_OPEN = 0.0
ALPHA_WALL = 1.0e3
KAPPA_OPEN = 1.0e-2
KAPPA_WALL = 1.0e-4
AMBIENT_TEMPERATURE_C = 23.83
INLET_PRESSURE_KPA = 101.3

# Estimation horizon and cost weights
HORIZON = 300.0
TIME_STEP = 10.0
THERMOSTAT_RADIUS = 1.0
ETA0 = 1.0
ETA1 = 0.1

# Projected-gradient estimator
GAMMA = 1.0
ARMIJO_ALPHA = 0.01
ARMIJO_BETA = 0.7
ARMIJO_MAX_HALVINGS = 20
STOP_TOL = 1.0e-8
MAX_ITER = 30
MULTISTART = 5

# Solvers
NEWTON_TOL = 1.0e-9
NEWTON_MAX_ITER = 25
NEWTON_MAX_HALVINGS = 8
LINEAR_RTOL = 1.0e-10
BUMP_TOL = 1.0e-6
PECLET_WARN = 10.0
CONTINUATION_STEPS = (1.0, 10.0, 30.0)

# Meshing (can be overridden by environment variables)
DEFAULT_MESH_H = float(os.getenv("DOORSTATE_MESH_H", "0.35"))
FULL_SCALE_MESH_H = 0.2
GEOMETRY_TOL = 1.0e-9

# Execution
DEFAULT_WORKERS = int(os.getenv("DOORSTATE_WORKERS", "1"))
DEFAULT_LOG_LEVEL = os.getenv("DOORSTATE_LOG_LEVEL", "INFO")
BASELINE_MAX_DOORS = int(os.getenv("DOORSTATE_BASELINE_MAX_DOORS", "10"))
