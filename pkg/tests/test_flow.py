"""Tests for the penalized Navier-Stokes solver."""
import numpy as np
import pytest

from doorstate.exceptions import ContinuationError, PreconditionError
from doorstate.fem.quadrature import physical_points
from doorstate.floorplan import MaterialParams, material_fields
from doorstate.flow import (
    divergence_norm,
    make_flow_problem,
    region_mean_speed,
    reynolds_continuation,
    solve_flow,
    vent_forcing,
)
from doorstate.mesh import generate_mesh
from doorstate.problem import EstimationProblem


def _flow_problem(plan, h, reynolds, theta=None):
    mesh = generate_mesh(plan, h)
    points = physical_points(mesh)
    theta = [1.0] * plan.n_doors if theta is None else theta
    alpha, _ = material_fields(plan, MaterialParams(reynolds=reynolds), theta, points)
    return make_flow_problem(mesh, alpha, vent_forcing(plan, points), reynolds)


@pytest.fixture(scope="module")
def channel_flow(channel_plan):
    return solve_flow(_flow_problem(channel_plan, 0.125, 100.0))


class TestChannel:
    """Body-force driven channel with do-nothing ends: the exact solution is Poiseuille."""

    def test_poiseuille_profile(self, channel_flow, channel_plan):
        force = channel_plan.vents[0].force_magnitude
        space = channel_flow.u.space
        coords = space.dof_coords
        u = space.components(channel_flow.u.values)
        exact = force * 100.0 * coords[:, 1] * (1.0 - coords[:, 1]) / 2.0
        assert exact.max() == pytest.approx(1.0)
        np.testing.assert_allclose(u[:, 0], exact, atol=0.02)
        np.testing.assert_allclose(u[:, 1], 0.0, atol=0.02)

    def test_divergence_free(self, channel_flow):
        assert divergence_norm(channel_flow) <= 1e-8

    def test_inlet_sets_pressure_datum(self, channel_flow):
        """Test the pressure is not pinned when inlets exist."""
        assert channel_flow.problem.has_inlet
        assert channel_flow.problem.n_velocity in set(channel_flow.problem.free.tolist())
        np.testing.assert_allclose(channel_flow.p.values, 0.0, atol=0.02)


class TestClosedPlan:
    def test_newton_converges(self, small_problem):
        model = small_problem.forward_model([1.0, 1.0], record=False)
        assert model.flow.residual_norm <= small_problem.solver.newton_tol
        assert model.flow.theta_used == (1.0, 1.0)

    def test_weakly_divergence_free(self, small_problem):
        model = small_problem.forward_model([1.0, 0.0], record=False)
        assert divergence_norm(model.flow) <= 1e-7

    def test_wall_velocity_vanishes(self, small_problem):
        model = small_problem.forward_model([1.0, 1.0], record=False)
        wall = model.flow.problem.wall_dofs
        np.testing.assert_array_equal(model.flow.u.values[wall], 0.0)

    def test_closed_doors_block_flow(self, small_problem, two_room_plan):
        """Test closing both doors starves the east room of flow."""
        east = two_room_plan.rooms[1].rect
        open_flow = small_problem.forward_model([1.0, 1.0], record=False).flow
        closed_flow = small_problem.forward_model([0.0, 0.0], record=False).flow
        open_speed = region_mean_speed(open_flow, east)
        closed_speed = region_mean_speed(closed_flow, east)
        assert open_speed > 0
        assert closed_speed < 0.1 * open_speed

    def test_warm_start_needs_no_iterations(self, small_problem):
        model = small_problem.forward_model([1.0, 0.0], record=False)
        again = solve_flow(model.flow.problem, model.flow)
        assert again.newton_iterations == 0
        np.testing.assert_allclose(again.u.values, model.flow.u.values)


class TestContinuation:
    def test_matches_direct_solve(self, two_room_plan):
        problem = _flow_problem(two_room_plan, 0.35, 20.0)
        direct = solve_flow(problem)
        stepped = reynolds_continuation(problem, [1.0, 10.0, 20.0])
        assert stepped.continuation == (1.0, 10.0, 20.0)
        np.testing.assert_allclose(stepped.u.values, direct.u.values, atol=1e-5)

    def test_steps_must_increase(self, two_room_plan):
        problem = _flow_problem(two_room_plan, 0.35, 20.0)
        with pytest.raises(PreconditionError):
            reynolds_continuation(problem, [10.0, 1.0, 20.0])

    def test_last_step_must_be_target(self, two_room_plan):
        problem = _flow_problem(two_room_plan, 0.35, 20.0)
        with pytest.raises(PreconditionError):
            reynolds_continuation(problem, [1.0, 10.0])

    def test_failure_reports_reynolds(self, two_room_plan):
        """Test a Newton failure inside continuation names the failing Re."""
        problem = _flow_problem(two_room_plan, 0.35, 20.0)
        with pytest.raises(ContinuationError) as exc_info:
            reynolds_continuation(problem, [1.0, 20.0], max_iter=0)
        assert exc_info.value.reynolds == 1.0
        assert len(exc_info.value.trace) == 1
        assert "Re=1" in str(exc_info.value)

    def test_solve_flow_falls_back_to_continuation(self, two_room_plan):
        problem = _flow_problem(two_room_plan, 0.35, 20.0)
        with pytest.raises(ContinuationError):
            solve_flow(problem, max_iter=0)


def test_negative_friction_rejected(two_room_plan):
    mesh = generate_mesh(two_room_plan, 0.35)
    points = physical_points(mesh)
    alpha = -np.ones(points.shape[:-1])
    with pytest.raises(PreconditionError):
        make_flow_problem(mesh, alpha, vent_forcing(two_room_plan, points), 20.0)


def test_vent_force_override(two_room_plan):
    mesh = generate_mesh(two_room_plan, 0.35)
    points = physical_points(mesh)
    assert np.any(vent_forcing(two_room_plan, points))
    assert not np.any(vent_forcing(two_room_plan, points, {1: 0.0}))


def test_brinkman_blocking_strengthens_with_friction(two_room_plan):
    """Test a closed door carries a vanishing fraction of the free-room speed."""
    lower = two_room_plan.doors[0].rect
    west = two_room_plan.rooms[0].rect
    ratios = []
    for alpha_w in (1.0e3, 1.0e5):
        problem = EstimationProblem.build(
            two_room_plan, 0.35, MaterialParams(reynolds=20.0, alpha_w=alpha_w), horizon=50.0, dt=10.0
        )
        flow = problem.forward_model([0.0, 0.0], record=False).flow
        ratios.append(region_mean_speed(flow, lower) / region_mean_speed(flow, west))
    assert ratios[0] <= 1e-2
    assert ratios[1] < ratios[0]
