"""Triangle quadrature rules in barycentric form."""
from __future__ import annotations
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import NDArray

if TYPE_CHECKING:
    from ..mesh import Mesh

__all__ = ["QuadratureRule", "DEGREE5", "physical_points", "integrate"]


@dataclass(frozen=True, slots=True)
class QuadratureRule:
    """Barycentric points (n_q, 3) and weights summing to one.

    Physical weights are ``weights * area``.
    """

    degree: int
    points: NDArray[np.float64]
    weights: NDArray[np.float64]

    @property
    def size(self) -> int:
        return int(self.weights.size)


def _dunavant5() -> QuadratureRule:
    a1, b1, w1 = 0.059715871789770, 0.470142064105115, 0.132394152788506
    a2, b2, w2 = 0.797426985353087, 0.101286507323456, 0.125939180544827
    points = np.array(
        [
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            [a1, b1, b1],
            [b1, a1, b1],
            [b1, b1, a1],
            [a2, b2, b2],
            [b2, a2, b2],
            [b2, b2, a2],
        ]
    )
    weights = np.array([0.225, w1, w1, w1, w2, w2, w2])
    return QuadratureRule(degree=5, points=points, weights=weights / weights.sum())


# Exact for the quartic P2 x P2 mass products and the quintic convection terms
DEGREE5 = _dunavant5()


def physical_points(mesh: "Mesh", rule: QuadratureRule = DEGREE5) -> NDArray[np.float64]:
    """Quadrature points of every triangle, shape (n_t, n_q, 2)."""
    corners = mesh.vertices[mesh.triangles]
    return np.einsum("qk,tkd->tqd", rule.points, corners)


def integrate(mesh: "Mesh", values: NDArray[np.float64], rule: QuadratureRule = DEGREE5) -> float:
    """Integral of a function sampled at quadrature points, shape (n_t, n_q)."""
    return float(np.einsum("tq,t,q->", values, mesh.areas, rule.weights))
