"""Tests for the projected-gradient estimator, the enumeration baseline and metrics."""
import logging

import numpy as np
import pytest

from doorstate.adjoint import GradientBundle
from doorstate.estimate import (
    DescentDirection,
    armijo,
    baseline_estimate,
    bernoulli_jacobian,
    bernoulli_weights,
    binarize,
    binary_configurations,
    check_box,
    descent_direction,
    error_metrics,
    estimate,
)
from doorstate.exceptions import (
    BoxConstraintError,
    BudgetExceededError,
    DimensionMismatchError,
    LineSearchStall,
    PreconditionError,
)
from doorstate.fem.spaces import Field, p1_space
from doorstate.mesh import generate_mesh


@pytest.fixture(scope="module")
def square_space(square_plan):
    return p1_space(generate_mesh(square_plan, 0.25))


def _bundle(space, d_pi0, d_theta):
    empty = np.zeros(0)
    return GradientBundle(
        d_pi0=Field(space, np.asarray(d_pi0, dtype=np.float64)),
        d_theta=np.asarray(d_theta, dtype=np.float64),
        d_alpha_field=empty,
        d_kappa_field=empty,
    )


def _interior_gradient(space, seed):
    values = np.random.default_rng(seed).normal(size=space.n_dofs)
    values[space.boundary_dofs()] = 0.0
    return values


class TestDescentDirection:
    @pytest.mark.parametrize(
        "d_theta, theta",
        [
            ([0.8], [0.5]),
            ([-3.0], [0.9]),
            ([2.0, -0.4], [0.1, 0.3]),
            ([-0.5, 5.0], [1.0, 0.0]),
        ],
    )
    def test_matches_lattice_minimum(self, square_space, d_theta, theta):
        """Test the closed form against a brute-force search over the box."""
        gamma = 2.0
        d_pi0 = _interior_gradient(square_space, 1)
        direction = descent_direction(_bundle(square_space, d_pi0, d_theta), theta, gamma)

        mass = square_space.mass
        pi0_part = -0.5 * float(d_pi0 @ (mass @ d_pi0)) / gamma
        g = np.asarray(d_theta)
        axes = [np.linspace(-t, 1.0 - t, 401) for t in theta]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(theta))
        best = float(np.min(grid @ g + 0.5 * gamma * np.sum(grid**2, axis=1)))
        lattice = min(pi0_part + best, 0.0)
        assert direction.V <= lattice + 1e-12
        assert direction.V >= lattice - 1e-4
        theta_new = np.asarray(theta) + direction.delta_theta
        assert np.all(theta_new >= 0.0) and np.all(theta_new <= 1.0)

    def test_zero_gradient_gives_zero(self, square_space):
        direction = descent_direction(_bundle(square_space, np.zeros(square_space.n_dofs), [0.0, 0.0]), [0.5, 0.5])
        assert direction.V == 0.0
        assert not np.any(direction.delta_theta)

    def test_pushing_against_the_box(self, square_space):
        """Test a door already open cannot open further."""
        direction = descent_direction(_bundle(square_space, np.zeros(square_space.n_dofs), [-1.0]), [1.0])
        assert direction.delta_theta[0] == 0.0
        assert direction.V == 0.0

    def test_value_never_positive(self, square_space):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            bundle = _bundle(square_space, _interior_gradient(square_space, seed), rng.normal(size=3))
            assert descent_direction(bundle, rng.uniform(size=3), gamma=rng.uniform(0.1, 5.0)).V <= 0.0

    def test_positive_subproblem_value_is_reported(self, square_space, caplog):
        """Test a theta outside the box, where the clipped step goes uphill, is logged before clamping."""
        package_logger = logging.getLogger("doorstate")
        package_logger.addHandler(caplog.handler)
        try:
            with caplog.at_level(logging.WARNING, logger="doorstate"):
                inside = descent_direction(_bundle(square_space, np.zeros(square_space.n_dofs), [-1.0]), [0.5])
                assert "positive" not in caplog.text
                outside = descent_direction(_bundle(square_space, np.zeros(square_space.n_dofs), [-1.0]), [1.5])
        finally:
            package_logger.removeHandler(caplog.handler)
        assert inside.V < 0.0
        assert outside.V == 0.0
        assert "Descent subproblem value is positive" in caplog.text

    def test_gamma_must_be_positive(self, square_space):
        with pytest.raises(PreconditionError):
            descent_direction(_bundle(square_space, np.zeros(square_space.n_dofs), [0.0]), [0.5], gamma=0.0)


class TestArmijo:
    @staticmethod
    def _quadratic(pi0, theta):
        return float(pi0 @ pi0 + theta @ theta)

    def _direction(self, square_space, pi0, theta, V):
        return DescentDirection(delta_pi0=Field(square_space, -pi0), delta_theta=-np.asarray(theta), V=V)

    def test_full_step_accepted(self, square_space):
        pi0 = _interior_gradient(square_space, 2)
        theta = np.array([0.4, 0.6])
        direction = self._direction(square_space, pi0, theta, V=-1e-3)
        step = armijo(self._quadratic, pi0, theta, direction)
        assert step.j == 0
        assert step.step == 1.0
        assert step.cost == pytest.approx(0.0)
        assert step.trials == 1

    def test_overshoot_is_shortened(self, square_space):
        """Test a direction twice too long is accepted only after shrinking."""
        pi0 = np.zeros(square_space.n_dofs)
        theta = np.array([0.5])
        direction = DescentDirection(delta_pi0=Field(square_space, pi0), delta_theta=np.array([-1.0]), V=-0.25)
        step = armijo(self._quadratic, pi0, theta, direction, alpha_bar=0.5, beta_bar=0.5)
        assert step.j == 1
        assert step.cost == pytest.approx(0.0)

    def test_stall(self, square_space):
        pi0 = np.zeros(square_space.n_dofs)
        direction = DescentDirection(delta_pi0=Field(square_space, pi0), delta_theta=np.array([0.1]), V=-1.0)
        with pytest.raises(LineSearchStall) as exc_info:
            armijo(lambda p, t: 1.0, pi0, np.array([0.5]), direction, j_max=4, current=0.0)
        assert exc_info.value.trials == 5

    def test_needs_descent(self, square_space):
        pi0 = np.zeros(square_space.n_dofs)
        direction = DescentDirection(delta_pi0=Field(square_space, pi0), delta_theta=np.zeros(1), V=0.0)
        with pytest.raises(PreconditionError):
            armijo(self._quadratic, pi0, np.array([0.5]), direction)

    def test_factors_in_unit_interval(self, square_space):
        pi0 = np.zeros(square_space.n_dofs)
        direction = DescentDirection(delta_pi0=Field(square_space, pi0), delta_theta=np.zeros(1), V=-1.0)
        with pytest.raises(PreconditionError):
            armijo(self._quadratic, pi0, np.array([0.5]), direction, beta_bar=1.0)


@pytest.fixture(scope="module")
def zero_pi0_record(small_problem):
    """Readings of theta = (1, 0) from a domain starting at ambient."""
    model = small_problem.forward_model([1.0, 0.0], record=False)
    traj = small_problem.simulate(np.zeros(small_problem.temperature.n_dofs), model, record=False)
    return small_problem.observe(traj)


class TestEstimate:
    def test_truth_is_a_fixed_point(self, small_problem, zero_pi0_record):
        """Test starting at the truth stops at once with zero cost."""
        state = estimate(small_problem, zero_pi0_record, np.zeros(small_problem.temperature.n_dofs), [1.0, 0.0])
        assert state.status == "converged"
        assert state.iteration == 1
        assert state.cost == pytest.approx(0.0, abs=1e-20)
        np.testing.assert_array_equal(state.theta, [1.0, 0.0])

    def test_cost_decreases_and_theta_stays_in_box(self, small_problem, small_truth):
        _, _, record = small_truth
        state = estimate(small_problem, record, np.zeros(small_problem.temperature.n_dofs), [0.5, 0.5], max_iter=3)
        assert state.status in {"converged", "max_iter", "stalled"}
        totals = [c.total for c in state.cost_history]
        assert all(b <= a for a, b in zip(totals, totals[1:]))
        assert len(totals) >= 2
        for theta in state.theta_history:
            assert np.all(theta >= 0.0) and np.all(theta <= 1.0)
        assert all(v <= 0.0 for v in state.V_history)

    def test_one_forward_solve_per_iteration(self, small_problem, small_truth):
        """Test line-search trials are not counted as iteration solves."""
        _, _, record = small_truth
        state = estimate(small_problem, record, np.zeros(small_problem.temperature.n_dofs), [0.5, 0.5], max_iter=2)
        counter = state.solve_counter
        assert counter.per_iteration == [1] * state.iteration
        assert counter.adjoint_passes == state.iteration

    def test_start_outside_box(self, small_problem, small_truth):
        _, _, record = small_truth
        with pytest.raises(BoxConstraintError):
            estimate(small_problem, record, np.zeros(small_problem.temperature.n_dofs), [1.5, 0.0])

    def test_check_box(self):
        np.testing.assert_array_equal(check_box([0.0, 1.0]), [0.0, 1.0])
        with pytest.raises(BoxConstraintError):
            check_box([np.nan])


class TestBernoulli:
    def test_configurations(self):
        configs = binary_configurations(2)
        np.testing.assert_array_equal(configs, [[0, 0], [0, 1], [1, 0], [1, 1]])
        assert binary_configurations(0).shape == (1, 0)

    def test_weights(self):
        weights = bernoulli_weights([0.3, 0.8])
        np.testing.assert_allclose(weights, [0.7 * 0.2, 0.7 * 0.8, 0.3 * 0.2, 0.3 * 0.8])
        assert weights.sum() == pytest.approx(1.0)

    def test_jacobian_matches_differences(self):
        p = np.array([0.3, 0.6, 0.9])
        jac = bernoulli_jacobian(p)
        h = 1e-6
        for i in range(p.size):
            step = np.zeros_like(p)
            step[i] = h
            fd = (bernoulli_weights(p + step) - bernoulli_weights(p - step)) / (2 * h)
            np.testing.assert_allclose(jac[:, i], fd, atol=1e-8)


class TestBaseline:
    def test_enumerates_every_configuration(self, small_problem, small_truth):
        """Test each evaluation solves all 2^n_d configurations."""
        _, _, record = small_truth
        state = baseline_estimate(
            small_problem, record, [0.5, 0.5], np.zeros(small_problem.temperature.n_dofs), max_iter=2, workers=1
        )
        assert state.n_configurations == 4
        assert state.cached_configurations == 4
        assert state.solve_counter.flow_solves == 4
        assert state.solve_counter.per_iteration == [4] * state.iteration
        assert state.config_weights.sum() == pytest.approx(1.0)
        totals = [c.total for c in state.cost_history]
        assert all(b <= a for a, b in zip(totals, totals[1:]))
        assert np.all(state.p >= 0.0) and np.all(state.p <= 1.0)

    def test_workers_do_not_change_the_result(self, small_problem, small_truth):
        _, _, record = small_truth
        runs = [
            baseline_estimate(
                small_problem, record, [0.5, 0.5], np.zeros(small_problem.temperature.n_dofs), max_iter=1, workers=w
            )
            for w in (1, 2)
        ]
        np.testing.assert_array_equal(runs[0].p, runs[1].p)
        assert runs[0].cost == runs[1].cost

    def test_budget(self, small_problem, small_truth):
        """Test the baseline refuses door counts above its budget before solving."""
        _, _, record = small_truth
        with pytest.raises(BudgetExceededError, match="2\\^2"):
            baseline_estimate(small_problem, record, [0.5, 0.5], np.zeros(small_problem.temperature.n_dofs), max_doors=1)


class TestMetrics:
    def test_door_errors(self, square_space):
        truth = Field(square_space, _interior_gradient(square_space, 4))
        metrics = error_metrics([1.0, 0.0], [0.8, 0.1], truth, truth)
        assert metrics.e_theta == pytest.approx(0.15)
        assert metrics.per_door == pytest.approx((0.2, 0.1))
        assert metrics.e_pi0 == 0.0
        assert metrics.relative

    def test_relative_pi0_error(self, square_space):
        truth = Field(square_space, _interior_gradient(square_space, 5))
        est = Field(square_space, 1.5 * truth.values)
        metrics = error_metrics([], [], truth, est)
        assert metrics.e_pi0 == pytest.approx(0.5)
        assert metrics.e_theta == 0.0

    def test_zero_truth_is_absolute(self, square_space):
        est = Field(square_space, _interior_gradient(square_space, 6))
        metrics = error_metrics([1.0], [1.0], Field.zeros(square_space), est)
        assert not metrics.relative
        assert metrics.e_pi0 == pytest.approx(est.l2_norm())
        assert metrics.as_dict()["e_pi0_relative"] is False

    def test_shape_mismatch(self, square_space):
        field = Field.zeros(square_space)
        with pytest.raises(DimensionMismatchError):
            error_metrics([1.0, 0.0], [1.0], field, field)

    def test_binarize(self):
        np.testing.assert_array_equal(binarize([0.49, 0.5, 0.9]), [0.0, 1.0, 1.0])
