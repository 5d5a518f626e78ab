"""Lagrange function spaces on a triangular mesh.

P1 spaces number their dofs by vertex. The P2 vector space numbers scalar P2
dofs as all vertices followed by all unique edges (midpoints) and stacks the
two velocity components as ``[u_x; u_y]``.
"""
from __future__ import annotations
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from ..exceptions import DimensionMismatchError
from ..mesh import BoundaryTag, Mesh
from .quadrature import DEGREE5, QuadratureRule, physical_points

__all__ = ["SpaceKind", "FemSpace", "Field", "p1_space", "p2_vector_space", "pressure_space"]

FloatArray = NDArray[np.float64]


class SpaceKind(Enum):
    P1_SCALAR = "p1"
    P2_VECTOR = "p2v"
    P1_SCALAR_PRESSURE = "p1p"
    # one velocity component of P2_VECTOR
    P2_SCALAR = "p2"

    @property
    def degree(self) -> int:
        return 2 if self in (SpaceKind.P2_VECTOR, SpaceKind.P2_SCALAR) else 1

    @property
    def components(self) -> int:
        return 2 if self is SpaceKind.P2_VECTOR else 1


def _p1_basis(bary: FloatArray) -> FloatArray:
    return bary.copy()


def _p2_basis(bary: FloatArray) -> FloatArray:
    l0, l1, l2 = bary[:, 0], bary[:, 1], bary[:, 2]
    return np.column_stack(
        [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0]
    )


@dataclass(frozen=True, eq=False)
class FemSpace:
    """Finite element space: element dof map, coordinates and quadrature data.

    For the vector space, ``dof_map`` indexes the scalar P2 space and
    ``n_dofs`` counts both components.
    """

    mesh: Mesh
    kind: SpaceKind
    dof_map: NDArray[np.int64]
    n_scalar: int
    dof_coords: FloatArray
    rule: QuadratureRule = field(default=DEGREE5)

    @property
    def n_dofs(self) -> int:
        return self.n_scalar * self.kind.components

    @property
    def n_local(self) -> int:
        return int(self.dof_map.shape[1])

    @cached_property
    def basis(self) -> FloatArray:
        """Reference basis values at quadrature points, (n_q, n_local)."""
        if self.kind.degree == 1:
            return _p1_basis(self.rule.points)
        return _p2_basis(self.rule.points)

    @cached_property
    def barycentric_gradients(self) -> FloatArray:
        """Physical gradients of the barycentric coordinates, (n_t, 3, 2)."""
        p = self.mesh.vertices[self.mesh.triangles]
        twice_area = 2.0 * self.mesh.signed_areas
        grads = np.empty((p.shape[0], 3, 2))
        for k in range(3):
            k1, k2 = (k + 1) % 3, (k + 2) % 3
            grads[:, k, 0] = (p[:, k1, 1] - p[:, k2, 1]) / twice_area
            grads[:, k, 1] = (p[:, k2, 0] - p[:, k1, 0]) / twice_area
        return grads

    @cached_property
    def grads(self) -> FloatArray:
        """Physical basis gradients at quadrature points, (n_t, n_q, n_local, 2)."""
        gl = self.barycentric_gradients
        n_t, n_q = gl.shape[0], self.rule.size
        if self.kind.degree == 1:
            return np.broadcast_to(gl[:, None, :, :], (n_t, n_q, 3, 2)).copy()
        bary = self.rule.points
        out = np.empty((n_t, n_q, 6, 2))
        for k in range(3):
            out[:, :, k, :] = (4 * bary[None, :, k, None] - 1) * gl[:, None, k, :]
        for local, (a, b) in enumerate([(0, 1), (1, 2), (2, 0)], start=3):
            out[:, :, local, :] = 4 * (
                bary[None, :, b, None] * gl[:, None, a, :] + bary[None, :, a, None] * gl[:, None, b, :]
            )
        return out

    @cached_property
    def jxw(self) -> FloatArray:
        """Physical quadrature weights, (n_t, n_q)."""
        return self.mesh.areas[:, None] * self.rule.weights[None, :]

    @cached_property
    def quadrature_points(self) -> FloatArray:
        return physical_points(self.mesh, self.rule)

    @cached_property
    def mass(self) -> sp.csr_matrix:
        """Scalar mass matrix (per component for vector spaces)."""
        from .assembly import Form, assemble

        return assemble(Form.MASS, self.scalar)

    @cached_property
    def scalar(self) -> "FemSpace":
        """The scalar space sharing this dof map."""
        if self.kind is not SpaceKind.P2_VECTOR:
            return self
        return FemSpace(
            mesh=self.mesh,
            kind=SpaceKind.P2_SCALAR,
            dof_map=self.dof_map,
            n_scalar=self.n_scalar,
            dof_coords=self.dof_coords,
            rule=self.rule,
        )

    def boundary_dofs(self, tag: BoundaryTag | None = None) -> NDArray[np.int64]:
        """Dofs on boundary edges with ``tag`` (all boundary dofs when None).

        Vector spaces return the dofs of both components.
        """
        scalar = self.mesh.boundary_vertices(tag)
        if self.kind.degree == 2:
            edge_ids = self.mesh.boundary_edge_ids(tag)
            scalar = np.concatenate([scalar, self.mesh.n_vertices + edge_ids])
        scalar = np.unique(scalar)
        if self.kind.components == 1:
            return scalar
        return np.concatenate([scalar, scalar + self.n_scalar])

    def interior_dofs(self) -> NDArray[np.int64]:
        return np.setdiff1d(np.arange(self.n_dofs), self.boundary_dofs())

    def interpolate(self, fn: Callable[[FloatArray, FloatArray], FloatArray]) -> FloatArray:
        """Nodal interpolant of ``fn(x, y)``; vector spaces expect (n, 2) output."""
        x, y = self.dof_coords[:, 0], self.dof_coords[:, 1]
        values = np.asarray(fn(x, y), dtype=np.float64)
        if self.kind.components == 2:
            values = np.broadcast_to(values, (self.n_scalar, 2))
            return np.concatenate([values[:, 0], values[:, 1]])
        return np.broadcast_to(values, (self.n_scalar,)).copy()

    def components(self, values: FloatArray) -> FloatArray:
        """Reshape a vector-space coefficient array to (n_scalar, 2)."""
        return np.column_stack([values[: self.n_scalar], values[self.n_scalar :]])

    def at_quadrature(self, values: FloatArray) -> FloatArray:
        """Evaluate at quadrature points: (n_t, n_q) or (n_t, n_q, 2)."""
        self._check(values)
        if self.kind.components == 1:
            return np.einsum("ql,tl->tq", self.basis, values[self.dof_map])
        comps = [values[c * self.n_scalar : (c + 1) * self.n_scalar] for c in range(2)]
        return np.stack([np.einsum("ql,tl->tq", self.basis, u[self.dof_map]) for u in comps], axis=-1)

    def grad_at_quadrature(self, values: FloatArray) -> FloatArray:
        """Gradient at quadrature points: (n_t, n_q, 2) or (n_t, n_q, 2, 2) as [component, derivative]."""
        self._check(values)
        if self.kind.components == 1:
            return np.einsum("tqld,tl->tqd", self.grads, values[self.dof_map])
        comps = [values[c * self.n_scalar : (c + 1) * self.n_scalar] for c in range(2)]
        return np.stack([np.einsum("tqld,tl->tqd", self.grads, u[self.dof_map]) for u in comps], axis=2)

    def _check(self, values: FloatArray) -> None:
        if values.shape != (self.n_dofs,):
            raise DimensionMismatchError(
                f"{self.kind.name} space has {self.n_dofs} dofs, got array of shape {values.shape}"
            )


@dataclass(frozen=True, eq=False)
class Field:
    """Coefficient vector bound to a space."""

    space: FemSpace
    values: FloatArray

    def __post_init__(self) -> None:
        if self.values.shape != (self.space.n_dofs,):
            raise DimensionMismatchError(
                f"Field of shape {self.values.shape} does not match {self.space.n_dofs} dofs"
            )

    @classmethod
    def zeros(cls, space: FemSpace) -> "Field":
        return cls(space, np.zeros(space.n_dofs))

    def l2_norm(self) -> float:
        """Mesh L2 norm (both components for vector fields)."""
        m = self.space.mass
        if self.space.kind.components == 1:
            return float(np.sqrt(max(self.values @ (m @ self.values), 0.0)))
        n = self.space.n_scalar
        total = sum(float(c @ (m @ c)) for c in (self.values[:n], self.values[n:]))
        return float(np.sqrt(max(total, 0.0)))


def p1_space(mesh: Mesh, kind: SpaceKind = SpaceKind.P1_SCALAR) -> FemSpace:
    return FemSpace(
        mesh=mesh,
        kind=kind,
        dof_map=mesh.triangles.copy(),
        n_scalar=mesh.n_vertices,
        dof_coords=mesh.vertices,
    )


def pressure_space(mesh: Mesh) -> FemSpace:
    return p1_space(mesh, SpaceKind.P1_SCALAR_PRESSURE)


def p2_vector_space(mesh: Mesh) -> FemSpace:
    dof_map = np.concatenate([mesh.triangles, mesh.n_vertices + mesh.triangle_edges], axis=1)
    midpoints = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    return FemSpace(
        mesh=mesh,
        kind=SpaceKind.P2_VECTOR,
        dof_map=dof_map,
        n_scalar=mesh.n_vertices + mesh.edges.shape[0],
        dof_coords=np.vstack([mesh.vertices, midpoints]),
    )
