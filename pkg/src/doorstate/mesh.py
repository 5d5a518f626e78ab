"""Structured triangulation of a floor plan.

Grid lines pass through every rectangle edge and inlet endpoint of the plan,
so indicator functions of walls, doors and vents are element-aligned. Each
interval between feature lines is split uniformly with spacing at most
``target_h``; every grid cell is cut into two triangles.
"""
from __future__ import annotations
import math
from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

from .constants import GEOMETRY_TOL
from .exceptions import BoundaryMarkingError, MeshResolutionError, PreconditionError
from .floorplan import FloorPlan, Rect
from .logger import logger
from .utils import array_digest

__all__ = ["BoundaryTag", "Mesh", "generate_mesh", "mark_boundaries"]


class BoundaryTag(IntEnum):
    WALL = 0
    INLET = 1


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangular mesh with tagged boundary edges.

    Attributes:
        vertices: (n_v, 2) coordinates
        triangles: (n_t, 3) counter-clockwise vertex indices
        boundary_edges: (n_b, 2) vertex pairs, counter-clockwise around the domain
        boundary_tags: (n_b,) BoundaryTag values
        xs, ys: grid lines of the structured triangulation
    """

    vertices: NDArray[np.float64]
    triangles: NDArray[np.int64]
    boundary_edges: NDArray[np.int64]
    boundary_tags: NDArray[np.int8]
    xs: NDArray[np.float64]
    ys: NDArray[np.float64]

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_triangles(self) -> int:
        return int(self.triangles.shape[0])

    @cached_property
    def signed_areas(self) -> NDArray[np.float64]:
        p = self.vertices[self.triangles]
        return 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
        )

    @cached_property
    def areas(self) -> NDArray[np.float64]:
        return np.abs(self.signed_areas)

    @cached_property
    def centroids(self) -> NDArray[np.float64]:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def diameters(self) -> NDArray[np.float64]:
        """Longest edge of each triangle."""
        p = self.vertices[self.triangles]
        lengths = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
        return lengths.max(axis=1)

    @property
    def h_max(self) -> float:
        return float(self.diameters.max())

    @cached_property
    def edges(self) -> NDArray[np.int64]:
        """Unique undirected edges (sorted vertex pairs) in first-seen order."""
        return self._edge_table[0]

    @cached_property
    def triangle_edges(self) -> NDArray[np.int64]:
        """(n_t, 3) edge ids for local edges (0,1), (1,2), (2,0)."""
        return self._edge_table[1]

    @cached_property
    def _edge_table(self) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
        local = self.triangles[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2)
        keyed = np.sort(local, axis=1)
        unique, first, inverse = np.unique(keyed, axis=0, return_index=True, return_inverse=True)
        # renumber in first-seen order so numbering follows the element loop
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        edges = unique[order].astype(np.int64)
        tri_edges = rank[np.asarray(inverse).reshape(-1)].reshape(-1, 3).astype(np.int64)
        return edges, tri_edges

    @cached_property
    def edge_triangle_counts(self) -> NDArray[np.int64]:
        return np.bincount(self.triangle_edges.ravel(), minlength=self.edges.shape[0]).astype(np.int64)

    def boundary_vertices(self, tag: BoundaryTag | None = None) -> NDArray[np.int64]:
        """Sorted vertex ids on boundary edges with ``tag`` (all tags when None)."""
        edges = self.boundary_edges if tag is None else self.boundary_edges[self.boundary_tags == tag]
        return np.unique(edges.ravel())

    def boundary_edge_ids(self, tag: BoundaryTag | None = None) -> NDArray[np.int64]:
        """Global edge ids (into ``edges``) of boundary edges with ``tag``."""
        edges = self.boundary_edges if tag is None else self.boundary_edges[self.boundary_tags == tag]
        lookup = {(int(a), int(b)): i for i, (a, b) in enumerate(self.edges)}
        keyed = np.sort(edges, axis=1)
        return np.array([lookup[(int(a), int(b))] for a, b in keyed], dtype=np.int64)

    def tagged_length(self, tag: BoundaryTag) -> float:
        edges = self.boundary_edges[self.boundary_tags == tag]
        if edges.size == 0:
            return 0.0
        d = self.vertices[edges[:, 1]] - self.vertices[edges[:, 0]]
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    def region_mask(self, rect: Rect) -> NDArray[np.bool_]:
        """Triangles whose centroid lies inside ``rect``."""
        return rect.contains(self.centroids)

    @cached_property
    def fingerprint(self) -> str:
        return array_digest(self.vertices, self.triangles)


def _breakpoints(values: list[float], lo: float, hi: float) -> list[float]:
    points = sorted(v for v in values if lo - GEOMETRY_TOL <= v <= hi + GEOMETRY_TOL)
    merged: list[float] = []
    for value in [lo] + points + [hi]:
        value = min(max(value, lo), hi)
        if not merged or value - merged[-1] > GEOMETRY_TOL * max(1.0, hi - lo):
            merged.append(value)
    merged[-1] = hi
    return merged


def _grid_lines(breaks: list[float], target_h: float) -> NDArray[np.float64]:
    lines = [breaks[0]]
    for a, b in zip(breaks[:-1], breaks[1:]):
        pieces = max(1, math.ceil((b - a) / target_h - 1e-9))
        lines.extend(np.linspace(a, b, pieces + 1)[1:].tolist())
    return np.asarray(lines, dtype=np.float64)


def generate_mesh(plan: FloorPlan, target_h: float) -> Mesh:
    """Triangulate the plan on a feature-aligned structured grid.

    Args:
        plan: Validated floor plan
        target_h: Maximum grid spacing

    Returns:
        Mesh with boundary edges tagged by mark_boundaries

    Raises:
        PreconditionError: If target_h is not positive
        MeshResolutionError: If a door opening or inlet is shorter than target_h
    """
    if not target_h > 0:
        raise PreconditionError(f"target_h must be positive, got {target_h}")
    for door in plan.doors:
        r = door.rect
        opening = max(r.x1 - r.x0, r.y1 - r.y0)
        if opening < target_h:
            raise MeshResolutionError(
                f"door {door.id}",
                f"target_h={target_h:g} cannot resolve door {door.id} (opening {opening:g})",
            )
    for index, inlet in enumerate(plan.inlets, start=1):
        if inlet.length < target_h:
            raise MeshResolutionError(
                f"inlet {index}",
                f"target_h={target_h:g} cannot resolve inlet {index} (length {inlet.length:g})",
            )

    rects = list(plan.walls) + [d.rect for d in plan.doors] + [v.rect for v in plan.vents]
    x_feats = [c for r in rects for c in (r.x0, r.x1)]
    y_feats = [c for r in rects for c in (r.y0, r.y1)]
    for inlet in plan.inlets:
        x_feats.extend([inlet.start[0], inlet.end[0]])
        y_feats.extend([inlet.start[1], inlet.end[1]])
    xs = _grid_lines(_breakpoints(x_feats, 0.0, plan.width), target_h)
    ys = _grid_lines(_breakpoints(y_feats, 0.0, plan.height), target_h)
    nx, ny = xs.size - 1, ys.size - 1

    gx, gy = np.meshgrid(xs, ys)
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    a = j * (nx + 1) + i
    b = a + 1
    c = a + nx + 2
    d = a + nx + 1
    # "/" cells in the lower-left and upper-right quadrants, "\" elsewhere;
    # the pattern is mirror-symmetric when nx and ny are even
    slash = (2 * i < nx) == (2 * j < ny)
    first = np.where(slash[:, None], np.column_stack([a, b, c]), np.column_stack([a, b, d]))
    second = np.where(slash[:, None], np.column_stack([a, c, d]), np.column_stack([b, c, d]))
    triangles = np.empty((2 * a.size, 3), dtype=np.int64)
    triangles[0::2] = first
    triangles[1::2] = second

    def vid(ii: int, jj: int) -> int:
        return jj * (nx + 1) + ii

    loop: list[tuple[int, int]] = []
    loop += [(vid(k, 0), vid(k + 1, 0)) for k in range(nx)]
    loop += [(vid(nx, k), vid(nx, k + 1)) for k in range(ny)]
    loop += [(vid(k + 1, ny), vid(k, ny)) for k in range(nx - 1, -1, -1)]
    loop += [(vid(0, k + 1), vid(0, k)) for k in range(ny - 1, -1, -1)]
    boundary_edges = np.asarray(loop, dtype=np.int64)

    mesh = Mesh(
        vertices=vertices,
        triangles=triangles,
        boundary_edges=boundary_edges,
        boundary_tags=np.zeros(boundary_edges.shape[0], dtype=np.int8),
        xs=xs,
        ys=ys,
    )
    mesh = mark_boundaries(mesh, plan)
    logger.debug("Generated mesh", triangles=mesh.n_triangles, vertices=mesh.n_vertices, h=target_h)
    return mesh


def mark_boundaries(mesh: Mesh, plan: FloorPlan) -> Mesh:
    """Tag each boundary edge INLET iff its midpoint lies on an inlet segment.

    Raises:
        BoundaryMarkingError: If an inlet is not on the exterior boundary or
            no boundary edge lies on it
    """
    mid = 0.5 * (mesh.vertices[mesh.boundary_edges[:, 0]] + mesh.vertices[mesh.boundary_edges[:, 1]])
    tags = np.full(mesh.boundary_edges.shape[0], BoundaryTag.WALL, dtype=np.int8)
    for index, inlet in enumerate(plan.inlets, start=1):
        if not inlet.on_boundary(plan.width, plan.height):
            raise BoundaryMarkingError(f"Inlet {index} {inlet.start}->{inlet.end} does not lie on the exterior boundary")
        hit = np.array([inlet.contains((float(x), float(y))) for x, y in mid], dtype=bool)
        if not np.any(hit):
            raise BoundaryMarkingError(f"Inlet {index} {inlet.start}->{inlet.end} matches no boundary edge")
        tags[hit] = BoundaryTag.INLET
    return Mesh(
        vertices=mesh.vertices,
        triangles=mesh.triangles,
        boundary_edges=mesh.boundary_edges,
        boundary_tags=tags,
        xs=mesh.xs,
        ys=mesh.ys,
    )
