"""Tests for the implicit Euler temperature march, sensors and the cost."""
import numpy as np
import pytest

from doorstate.exceptions import (
    BoundaryConditionError,
    DimensionMismatchError,
    GridMismatchError,
    PreconditionError,
)
from doorstate.fem import integrate, load_vector
from doorstate.fem.spaces import Field, p1_space
from doorstate.mesh import generate_mesh
from doorstate.thermal import (
    SensorRecord,
    cost,
    read_sensor_csv,
    simulate_temperature,
    thermal_operator,
    vent_heat_source,
    write_sensor_csv,
)


@pytest.fixture(scope="module")
def fine_square(square_plan):
    return p1_space(generate_mesh(square_plan, 1.0 / 32.0))


def _heat_kernel_error(space, dt, kappa=0.1, horizon=1.0):
    """Error at the centre for T = exp(-2 pi^2 kappa t) sin(pi x) sin(pi y)."""
    pi0 = Field(space, space.interpolate(lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)))
    coefficient = np.full(space.jxw.shape, kappa)
    traj = simulate_temperature(pi0, None, coefficient, None, horizon, dt)
    centre = int(np.argmin(np.hypot(space.dof_coords[:, 0] - 0.5, space.dof_coords[:, 1] - 0.5)))
    exact = np.exp(-2.0 * np.pi**2 * kappa * horizon)
    return abs(traj.values[-1, centre] - exact)


class TestSimulate:
    def test_first_order_in_time(self, fine_square):
        """Test halving dt halves the error of the manufactured solution."""
        errors = [_heat_kernel_error(fine_square, dt) for dt in (0.1, 0.05, 0.025)]
        ratios = [errors[0] / errors[1], errors[1] / errors[2]]
        for ratio in ratios:
            assert 1.6 < ratio < 2.5

    def test_levels_and_initial_state(self, small_problem, small_truth):
        _, pi0, _ = small_truth
        model = small_problem.forward_model([1.0, 0.0], record=False)
        traj = small_problem.simulate(pi0, model, record=False)
        assert traj.n_steps == 5
        assert traj.dt == pytest.approx(10.0)
        np.testing.assert_array_equal(traj.values[0], pi0.values)
        boundary = traj.space.boundary_dofs()
        np.testing.assert_array_equal(traj.values[:, boundary], 0.0)

    def test_dt_must_divide_horizon(self, fine_square):
        pi0 = Field.zeros(fine_square)
        with pytest.raises(PreconditionError, match="divide"):
            simulate_temperature(pi0, None, np.full(fine_square.jxw.shape, 0.1), None, 1.0, 0.3)

    def test_initial_state_must_vanish_on_boundary(self, fine_square):
        pi0 = Field(fine_square, np.ones(fine_square.n_dofs))
        with pytest.raises(BoundaryConditionError):
            simulate_temperature(pi0, None, np.full(fine_square.jxw.shape, 0.1), None, 1.0, 0.1)

    def test_unknown_convection_mode(self, fine_square):
        velocity = np.zeros(fine_square.jxw.shape + (2,))
        with pytest.raises(PreconditionError):
            thermal_operator(fine_square, np.full(fine_square.jxw.shape, 0.1), velocity, 0.1, convection="upwind")

    def test_source_heats_from_rest(self, small_problem):
        """Test the vent heat source warms a domain starting at ambient."""
        model = small_problem.forward_model([1.0, 1.0], record=False)
        traj = small_problem.simulate(np.zeros(small_problem.temperature.n_dofs), model, record=False)
        readings = small_problem.observe(traj).values
        assert np.all(readings[0] == 0.0)
        assert readings[-1, 0] > 0.0

    def test_vent_heat_total(self, small_problem, two_room_plan):
        vent = two_room_plan.vents[0]
        load = vent_heat_source(two_room_plan, small_problem.temperature, scale=2.0)
        assert load.sum() == pytest.approx(2.0 * vent.heat_rate * vent.rect.area)


class TestCost:
    def test_zero_on_own_readings(self, small_problem, small_truth):
        """Test the data terms vanish when the data are the model's readings."""
        theta, pi0, record = small_truth
        model = small_problem.forward_model(theta, record=False)
        traj = small_problem.simulate(pi0, model, record=False)
        breakdown = small_problem.cost(traj, record)
        assert breakdown.tracking_term == pytest.approx(0.0, abs=1e-16)
        assert breakdown.initial_match_term == pytest.approx(0.0, abs=1e-16)
        expected = small_problem.eta1 * pi0.values @ (pi0.space.mass @ pi0.values)
        assert breakdown.regularization_term == pytest.approx(expected)
        assert breakdown.total == pytest.approx(expected)

    def test_constant_offset(self, small_problem, small_truth):
        """Test an offset c in every reading costs c^2 T per sensor plus the initial match."""
        theta, pi0, record = small_truth
        offset = 0.3
        shifted = SensorRecord(times=record.times, values=record.values + offset, sensor_ids=record.sensor_ids)
        model = small_problem.forward_model(theta, record=False)
        traj = small_problem.simulate(pi0, model, record=False)
        breakdown = cost(traj, pi0, shifted, 1.0, 0.0, small_problem.plan)
        n_sensors = len(record.sensor_ids)
        assert breakdown.tracking_term == pytest.approx(offset**2 * n_sensors * small_problem.horizon)
        assert breakdown.initial_match_term == pytest.approx(offset**2 * n_sensors)
        assert breakdown.regularization_term == 0.0
        assert set(breakdown.as_dict()) == {"tracking", "initial_match", "regularization", "total"}

    def test_grid_mismatch(self, small_problem, small_truth):
        theta, pi0, record = small_truth
        coarse = SensorRecord(times=record.times[::2], values=record.values[::2], sensor_ids=record.sensor_ids)
        model = small_problem.forward_model(theta, record=False)
        traj = small_problem.simulate(pi0, model, record=False)
        with pytest.raises(GridMismatchError):
            small_problem.cost(traj, coarse)


class TestSensorRecord:
    def test_shape_is_checked(self):
        with pytest.raises(DimensionMismatchError):
            SensorRecord(times=np.arange(3.0), values=np.zeros((3, 2)), sensor_ids=(1,))

    def test_series_by_id(self):
        record = SensorRecord(times=np.arange(2.0), values=np.array([[1.0, 2.0], [3.0, 4.0]]), sensor_ids=(2, 5))
        np.testing.assert_array_equal(record.series(5), [2.0, 4.0])
        np.testing.assert_array_equal(record.initial, [1.0, 2.0])

    def test_csv_with_manifest(self, temp_output_dir):
        """Test CSV output keeps every digit and the manifest sidecar."""
        record = SensorRecord(
            times=np.array([0.0, 10.0, 20.0]),
            values=np.array([[0.1, 1.0 / 3.0], [0.2, -2.5e-7], [0.3, 4.0]]),
            sensor_ids=(1, 3),
            manifest="abc123",
        )
        path = write_sensor_csv(temp_output_dir / "data" / "twin.csv", record)
        assert path.with_suffix(".manifest.json").exists()
        back = read_sensor_csv(path)
        assert back.sensor_ids == (1, 3)
        assert back.manifest == "abc123"
        np.testing.assert_array_equal(back.values, record.values)
        np.testing.assert_array_equal(back.times, record.times)

    def test_csv_without_sidecar(self, temp_output_dir):
        path = temp_output_dir / "external.csv"
        path.write_text("time,sensor_2\n0.0,1.5\n10.0,1.25\n", encoding="utf-8")
        record = read_sensor_csv(path)
        assert record.manifest is None
        assert record.sensor_ids == (2,)
        np.testing.assert_array_equal(record.series(2), [1.5, 1.25])

    def test_csv_bad_header(self, temp_output_dir):
        path = temp_output_dir / "bad.csv"
        path.write_text("t,reading\n0.0,1.0\n", encoding="utf-8")
        with pytest.raises(DimensionMismatchError):
            read_sensor_csv(path)


def test_second_order_in_space(square_plan):
    """Test the steady manufactured solution converges at second order in L2."""
    kappa = 0.1
    errors = []
    for h in (0.25, 0.125, 0.0625):
        space = p1_space(generate_mesh(square_plan, h))
        points = space.quadrature_points
        exact = np.sin(np.pi * points[..., 0]) * np.sin(np.pi * points[..., 1])
        load = load_vector(space, 2.0 * np.pi**2 * kappa * exact)
        # One very long step reaches the steady state of -kappa lap T = f
        traj = simulate_temperature(Field.zeros(space), None, np.full(space.jxw.shape, kappa), load, 1.0e8, 1.0e8)
        diff = space.at_quadrature(traj.values[-1]) - exact
        errors.append(np.sqrt(integrate(space.mesh, diff**2)))
    orders = [np.log2(errors[0] / errors[1]), np.log2(errors[1] / errors[2])]
    assert min(orders) >= 1.8
