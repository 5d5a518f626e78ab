"""Pytest configuration for doorstate tests."""
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

# Add src directory to path so we can import doorstate
src_dir = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_dir))

from doorstate.floorplan import FloorPlan, MaterialParams, load_floor_plan  # noqa: E402
from doorstate.harness.scenario import InitialFieldSpec  # noqa: E402
from doorstate.harness.twin import initial_field  # noqa: E402
from doorstate.mesh import Mesh  # noqa: E402
from doorstate.problem import EstimationProblem  # noqa: E402

REPO_ROOT = Path(__file__).parent.parent
CONFIGS = REPO_ROOT / "configs"
PLANS = CONFIGS / "plans"


# ============================================================================
# Plans and meshes
# ============================================================================

@pytest.fixture(scope="session")
def configs_dir() -> Path:
    return CONFIGS


@pytest.fixture(scope="session")
def two_room_plan() -> FloorPlan:
    """Two rooms joined by two doors, mirror-symmetric about y = 2."""
    return load_floor_plan(PLANS / "two_room.json")


@pytest.fixture(scope="session")
def channel_plan() -> FloorPlan:
    """Open channel with inlets at both ends and a uniform body force."""
    return load_floor_plan(PLANS / "channel.json")


@pytest.fixture(scope="session")
def square_plan() -> FloorPlan:
    """Unit square, no walls or doors, one thermostat in the middle."""
    return FloorPlan.model_validate(
        {
            "domain": {"width": 1.0, "height": 1.0},
            "thermostats": [{"id": 1, "position": [0.5, 0.5], "radius": 0.3}],
        }
    )


@pytest.fixture
def reference_triangle() -> Mesh:
    """Single reference triangle (0,0), (1,0), (0,1)."""
    return Mesh(
        vertices=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        triangles=np.array([[0, 1, 2]], dtype=np.int64),
        boundary_edges=np.array([[0, 1], [1, 2], [2, 0]], dtype=np.int64),
        boundary_tags=np.zeros(3, dtype=np.int8),
        xs=np.array([0.0, 1.0]),
        ys=np.array([0.0, 1.0]),
    )


# ============================================================================
# Estimation problems
# ============================================================================

# Coarse enough for a few seconds per solve, fine enough to resolve doors and bumps
SMALL_H = 0.35
SMALL_MATERIAL = MaterialParams(reynolds=20.0)


@pytest.fixture(scope="module")
def small_problem(two_room_plan) -> EstimationProblem:
    """Two-room problem on a coarse mesh with five time steps."""
    return EstimationProblem.build(
        two_room_plan,
        SMALL_H,
        SMALL_MATERIAL,
        horizon=50.0,
        dt=10.0,
    )


@pytest.fixture(scope="module")
def small_truth(small_problem):
    """(theta, pi0, record) of a noise-free truth on the small problem."""
    theta = np.array([1.0, 0.0])
    pi0 = initial_field(InitialFieldSpec(kind="smooth_bumps"), small_problem)
    model = small_problem.forward_model(theta, record=False)
    traj = small_problem.simulate(pi0, model, record=False)
    return theta, pi0, small_problem.observe(traj)


@pytest.fixture
def temp_output_dir():
    """Create a temporary directory for report files."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)
