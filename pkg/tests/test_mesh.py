"""Tests for the structured floor-plan mesher."""
import numpy as np
import pytest

from doorstate.exceptions import MeshResolutionError, PreconditionError
from doorstate.mesh import BoundaryTag, generate_mesh, mark_boundaries


def test_element_count_matches_grid(two_room_plan):
    """Test every grid cell is split into two triangles."""
    mesh = generate_mesh(two_room_plan, 0.35)
    nx, ny = mesh.xs.size - 1, mesh.ys.size - 1
    assert mesh.n_triangles == 2 * nx * ny
    assert mesh.n_vertices == (nx + 1) * (ny + 1)


def test_triangles_are_counter_clockwise_and_cover_domain(two_room_plan):
    mesh = generate_mesh(two_room_plan, 0.35)
    assert np.all(mesh.signed_areas > 0)
    assert mesh.areas.sum() == pytest.approx(two_room_plan.width * two_room_plan.height)


def test_spacing_bound(two_room_plan):
    mesh = generate_mesh(two_room_plan, 0.35)
    assert np.all(np.diff(mesh.xs) <= 0.35 + 1e-12)
    assert np.all(np.diff(mesh.ys) <= 0.35 + 1e-12)
    assert mesh.h_max <= 0.35 * np.sqrt(2.0) + 1e-12


def test_grid_lines_pass_through_features(two_room_plan):
    """Test wall, door and vent edges are grid lines."""
    mesh = generate_mesh(two_room_plan, 0.35)
    for x in (0.4, 1.0, 1.9, 2.1):
        assert np.min(np.abs(mesh.xs - x)) < 1e-12
    for y in (0.8, 1.6, 1.7, 2.3, 2.4, 3.2):
        assert np.min(np.abs(mesh.ys - y)) < 1e-12


def test_door_region_is_element_aligned(two_room_plan):
    mesh = generate_mesh(two_room_plan, 0.35)
    door = two_room_plan.doors[0].rect
    assert mesh.areas[mesh.region_mask(door)].sum() == pytest.approx(door.area)


def test_mirror_symmetry(two_room_plan):
    """Test the vertex set of a y-symmetric plan is y-symmetric."""
    mesh = generate_mesh(two_room_plan, 0.35)
    np.testing.assert_allclose(mesh.ys + mesh.ys[::-1], two_room_plan.height, atol=1e-12)
    mirrored = mesh.vertices.copy()
    mirrored[:, 1] = two_room_plan.height - mirrored[:, 1]
    key = lambda v: np.lexsort((np.round(v[:, 1], 9), np.round(v[:, 0], 9)))  # noqa: E731
    np.testing.assert_allclose(mesh.vertices[key(mesh.vertices)], mirrored[key(mirrored)], atol=1e-9)


def test_door_too_narrow_for_spacing(two_room_plan):
    """Test a spacing coarser than a door opening is refused."""
    with pytest.raises(MeshResolutionError) as exc_info:
        generate_mesh(two_room_plan, 1.0)
    assert exc_info.value.feature == "door 1"


def test_nonpositive_spacing(two_room_plan):
    with pytest.raises(PreconditionError):
        generate_mesh(two_room_plan, 0.0)


class TestBoundaryTags:
    def test_closed_plan_is_all_wall(self, two_room_plan):
        mesh = generate_mesh(two_room_plan, 0.35)
        assert np.all(mesh.boundary_tags == BoundaryTag.WALL)
        assert mesh.tagged_length(BoundaryTag.WALL) == pytest.approx(16.0)
        assert mesh.tagged_length(BoundaryTag.INLET) == 0.0

    def test_channel_inlets(self, channel_plan):
        """Test both channel ends are tagged as inlet."""
        mesh = generate_mesh(channel_plan, 0.25)
        assert mesh.tagged_length(BoundaryTag.INLET) == pytest.approx(2.0)
        assert mesh.tagged_length(BoundaryTag.WALL) == pytest.approx(8.0)
        inlet = mesh.vertices[mesh.boundary_vertices(BoundaryTag.INLET)]
        assert np.all(np.isclose(inlet[:, 0], 0.0) | np.isclose(inlet[:, 0], 4.0))

    def test_boundary_edges_are_mesh_edges(self, two_room_plan):
        mesh = generate_mesh(two_room_plan, 0.35)
        ids = mesh.boundary_edge_ids()
        assert ids.size == mesh.boundary_edges.shape[0]
        assert np.all(mesh.edge_triangle_counts[ids] == 1)
        interior = np.setdiff1d(np.arange(mesh.edges.shape[0]), ids)
        assert np.all(mesh.edge_triangle_counts[interior] == 2)

    def test_remarking_against_another_plan(self, channel_plan, two_room_plan):
        """Test mark_boundaries retags a mesh from the given plan's inlets only."""
        mesh = generate_mesh(channel_plan, 0.25)
        remarked = mark_boundaries(mesh, two_room_plan)
        assert np.all(remarked.boundary_tags == BoundaryTag.WALL)
        assert remarked.n_triangles == mesh.n_triangles
        np.testing.assert_array_equal(mark_boundaries(remarked, channel_plan).boundary_tags, mesh.boundary_tags)


def test_fingerprint(two_room_plan):
    """Test the fingerprint identifies the mesh, not the call."""
    a = generate_mesh(two_room_plan, 0.35)
    b = generate_mesh(two_room_plan, 0.35)
    c = generate_mesh(two_room_plan, 0.3)
    assert a.fingerprint == b.fingerprint
    assert a.fingerprint != c.fingerprint
