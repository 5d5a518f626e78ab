"""Finite element machinery: quadrature, spaces, assembly and solvers."""
from .assembly import Form, assemble, block_diagonal, load_vector
from .quadrature import DEGREE5, QuadratureRule, integrate, physical_points
from .solvers import Factorization, NewtonResult, newton_solve, restrict, solve_linear
from .spaces import FemSpace, Field, SpaceKind, p1_space, p2_vector_space, pressure_space

__all__ = [
    "DEGREE5",
    "Factorization",
    "FemSpace",
    "Field",
    "Form",
    "NewtonResult",
    "QuadratureRule",
    "SpaceKind",
    "assemble",
    "block_diagonal",
    "integrate",
    "load_vector",
    "newton_solve",
    "p1_space",
    "p2_vector_space",
    "physical_points",
    "pressure_space",
    "restrict",
    "solve_linear",
]
