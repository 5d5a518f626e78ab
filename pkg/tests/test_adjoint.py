"""Tests for the adjoint gradient, the tangent-linear model and finite differences."""
import numpy as np
import pytest

from doorstate.adjoint import fd_directional, solve_adjoint_flow, solve_adjoint_temperature
from doorstate.exceptions import (
    BoundaryConditionError,
    BoxConstraintError,
    GridMismatchError,
    PreconditionError,
)
from doorstate.floorplan import MaterialParams
from doorstate.harness.gradcheck import Tolerances, random_directions, run_gradcheck
from doorstate.problem import EstimationProblem, SolverSettings
from doorstate.thermal import SensorRecord

SMALL_H = 0.35
SMALL_MATERIAL = MaterialParams(reynolds=20.0)

# With C(u)^T in the adjoint the gradient is the exact derivative of the discrete cost
EXACT = SolverSettings(adjoint_convection="conservative", newton_tol=1e-11)


@pytest.fixture(scope="module")
def exact_problem(two_room_plan) -> EstimationProblem:
    return EstimationProblem.build(two_room_plan, SMALL_H, SMALL_MATERIAL, horizon=50.0, dt=10.0, solver=EXACT)


@pytest.fixture(scope="module")
def evaluation_point(exact_problem, small_truth):
    """Model, trajectory and gradient at theta = 0.5, pi0 = pi0_true / 2."""
    _, pi0_true, record = small_truth
    theta = np.array([0.5, 0.5])
    pi0 = exact_problem.pi0_field(0.5 * pi0_true.values)
    model = exact_problem.forward_model(theta, record=False)
    traj = exact_problem.simulate(pi0, model, record=False)
    bundle, adj = exact_problem.gradient(traj, model, record)
    return theta, pi0, model, traj, bundle, adj


class TestDerivativeAgreement:
    def test_adjoint_tangent_and_fd_agree(self, exact_problem, small_truth, evaluation_point):
        """Test the three directional derivatives agree on random directions."""
        _, _, record = small_truth
        theta, pi0, *_ = evaluation_point
        directions = random_directions(exact_problem, 3, seed=7)
        report = run_gradcheck(
            exact_problem,
            record,
            pi0.values,
            theta,
            directions,
            h=1e-3,
            tolerances=Tolerances(adjoint_fd=5e-3, tangent_fd=5e-3, adjoint_tangent=1e-6),
        )
        assert len(report.rows) == 4
        assert report.passed, [row for row in report.rows if not row.passed]

    def test_zero_direction(self, exact_problem, small_truth, evaluation_point):
        _, _, record = small_truth
        theta, pi0, *_ = evaluation_point
        directions = random_directions(exact_problem, 0, seed=0)
        report = run_gradcheck(exact_problem, record, pi0.values, theta, directions)
        row = report.rows[0]
        assert (row.adjoint, row.tangent, row.fd) == (0.0, 0.0, 0.0)
        assert row.passed

    def test_pi0_direction_matches_riesz_product(self, exact_problem, small_truth, evaluation_point):
        """Test d_pi0 is the mass-matrix Riesz representative."""
        _, _, record = small_truth
        _, _, model, traj, bundle, _ = evaluation_point
        delta = exact_problem.pi0_field(np.random.default_rng(3).normal(size=exact_problem.temperature.n_dofs)).values
        tangent = exact_problem.tangent(traj, model, record, delta, np.zeros(2))
        expected = bundle.d_pi0.values @ (exact_problem.temperature.mass @ delta)
        assert tangent.dJ == pytest.approx(expected, rel=1e-8)


class TestAdjointFields:
    def test_terminal_condition(self, evaluation_point):
        *_, adj = evaluation_point
        np.testing.assert_array_equal(adj.lambda1[-1], 0.0)
        np.testing.assert_array_equal(adj.lambda6.values, adj.lambda1[0])
        assert adj.lambda2 is not None and adj.lambda3 is not None

    def test_gradient_vanishes_on_boundary(self, evaluation_point):
        *_, bundle, _ = evaluation_point
        boundary = bundle.d_pi0.space.boundary_dofs()
        np.testing.assert_array_equal(bundle.d_pi0.values[boundary], 0.0)
        assert bundle.d_theta.shape == (2,)

    def test_forms_coincide_without_flow(self, two_room_plan, small_truth):
        """Test advective and conservative adjoints agree when the air is still."""
        _, pi0_true, record = small_truth
        results = []
        for form in ("advective", "conservative"):
            problem = EstimationProblem.build(
                two_room_plan,
                SMALL_H,
                SMALL_MATERIAL,
                horizon=50.0,
                dt=10.0,
                vent_forces={1: 0.0},
                solver=SolverSettings(adjoint_convection=form),
            )
            model = problem.forward_model([0.5, 0.5], record=False)
            traj = problem.simulate(pi0_true.values, model, record=False)
            bundle, _ = problem.gradient(traj, model, record)
            results.append(bundle)
        np.testing.assert_allclose(results[0].d_pi0.values, results[1].d_pi0.values, atol=1e-12)
        np.testing.assert_allclose(results[0].d_theta, results[1].d_theta, atol=1e-12)

    def test_sensor_grid_mismatch(self, exact_problem, small_truth, evaluation_point):
        _, _, record = small_truth
        _, _, model, traj, _, _ = evaluation_point
        short = SensorRecord(times=record.times[:3], values=record.values[:3], sensor_ids=record.sensor_ids)
        with pytest.raises(GridMismatchError):
            solve_adjoint_temperature(traj, model.flow, short, exact_problem.plan)

    def test_unknown_adjoint_form(self, exact_problem, small_truth, evaluation_point):
        _, _, record = small_truth
        _, _, model, traj, _, _ = evaluation_point
        with pytest.raises(PreconditionError):
            solve_adjoint_temperature(traj, model.flow, record, exact_problem.plan, convection="upwind")


class TestAdjointFlow:
    def test_matches_full_pass(self, evaluation_point):
        _, _, model, traj, _, adj = evaluation_point
        lambda2, lambda3 = solve_adjoint_flow(adj.lambda1, traj, model.flow, convection="conservative")
        np.testing.assert_allclose(lambda2.values, adj.lambda2.values, rtol=1e-10, atol=1e-14)
        np.testing.assert_allclose(lambda3.values, adj.lambda3.values, rtol=1e-10, atol=1e-14)

    def test_vanishes_on_walls(self, evaluation_point):
        _, _, model, traj, _, adj = evaluation_point
        lambda2, _ = solve_adjoint_flow(adj.lambda1, traj, model.flow)
        np.testing.assert_array_equal(lambda2.values[lambda2.space.boundary_dofs()], 0.0)
        assert lambda2.l2_norm() > 0

    def test_zero_coupling_gives_zero_fields(self, evaluation_point):
        """Test a vanishing adjoint temperature skips the solve and returns zeros."""
        _, _, model, traj, _, adj = evaluation_point
        lambda2, lambda3 = solve_adjoint_flow(np.zeros_like(adj.lambda1), traj, model.flow)
        assert not np.any(lambda2.values)
        assert not np.any(lambda3.values)


class TestTangent:
    def test_rejects_boundary_perturbation(self, exact_problem, small_truth, evaluation_point):
        _, _, record = small_truth
        _, _, model, traj, _, _ = evaluation_point
        delta = np.ones(exact_problem.temperature.n_dofs)
        with pytest.raises(BoundaryConditionError):
            exact_problem.tangent(traj, model, record, delta, np.zeros(2))

    def test_theta_direction_moves_flow(self, exact_problem, small_truth, evaluation_point):
        _, _, record = small_truth
        _, _, model, traj, _, _ = evaluation_point
        tangent = exact_problem.tangent(traj, model, record, np.zeros(exact_problem.temperature.n_dofs), [1.0, 0.0])
        assert tangent.delta_u.l2_norm() > 0
        np.testing.assert_array_equal(tangent.delta_Te[0], 0.0)


class TestFiniteDifference:
    def _never(self, pi0, theta):
        raise AssertionError("objective must not be evaluated")

    def test_zero_direction_skips_solves(self):
        value = fd_directional(self._never, np.zeros(3), np.zeros(2), 1e-4, pi0=np.zeros(3), theta=[0.5, 0.5])
        assert value == 0.0

    def test_step_must_be_positive(self):
        with pytest.raises(PreconditionError):
            fd_directional(self._never, np.ones(3), np.zeros(2), 0.0, pi0=np.zeros(3), theta=[0.5, 0.5])

    def test_box_is_respected(self):
        """Test a stencil leaving [0, 1] is refused before any solve."""
        with pytest.raises(BoxConstraintError):
            fd_directional(self._never, np.zeros(3), [1.0, 0.0], 1e-4, pi0=np.zeros(3), theta=[1.0, 0.0])

    def test_quadratic_is_exact(self):
        def objective(pi0, theta):
            return float(pi0 @ pi0 + 3.0 * theta[0] ** 2)

        value = fd_directional(objective, np.array([1.0, 2.0]), [1.0], 1e-2, pi0=np.array([0.5, -1.0]), theta=[0.25])
        assert value == pytest.approx(2.0 * (0.5 - 2.0) + 6.0 * 0.25)
