"""Vectorized assembly of the catalogued bilinear forms.

Element matrices are built for all triangles at once with ``einsum`` and
scattered into a COO matrix; duplicate entries are summed on conversion to
CSR. Rows index test functions, columns trial functions.

Coefficients are sampled at quadrature points: scalar coefficients have shape
(n_t, n_q) (or are plain floats), velocities (n_t, n_q, 2), velocity
gradients (n_t, n_q, 2, 2) indexed [component, derivative].
"""
from __future__ import annotations
from enum import Enum
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from ..exceptions import AssemblyError
from .spaces import FemSpace, SpaceKind

__all__ = ["Form", "assemble", "load_vector", "block_diagonal"]

FloatArray = NDArray[np.float64]
Coefficient = Union[float, FloatArray, None]


class Form(Enum):
    MASS = "mass"
    DIFFUSION = "diffusion"
    CONVECTION = "convection"
    ADJOINT_CONVECTION = "adjoint_convection"
    BRINKMAN = "brinkman"
    VECTOR_LAPLACIAN = "vector_laplacian"
    CONVECTION_LINEARIZATION = "convection_linearization"
    DIVERGENCE = "divergence"


def _weights(space: FemSpace, coefficient: Coefficient) -> FloatArray:
    jxw = space.jxw
    if coefficient is None:
        return jxw
    if np.isscalar(coefficient):
        return jxw * float(coefficient)  # type: ignore[arg-type]
    coef = np.asarray(coefficient, dtype=np.float64)
    if coef.shape != jxw.shape:
        raise AssemblyError(f"Coefficient of shape {coef.shape} does not match quadrature shape {jxw.shape}")
    return jxw * coef


def _scatter(test: FemSpace, trial: FemSpace, local: FloatArray) -> sp.csr_matrix:
    rows = np.broadcast_to(test.dof_map[:, :, None], local.shape)
    cols = np.broadcast_to(trial.dof_map[:, None, :], local.shape)
    shape = (test.n_scalar, trial.n_scalar)
    return sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()


def block_diagonal(block: sp.spmatrix) -> sp.csr_matrix:
    return sp.block_diag([block, block], format="csr")


def _mass(space: FemSpace, coefficient: Coefficient) -> sp.csr_matrix:
    w = _weights(space, coefficient)
    phi = space.basis
    local = np.einsum("tq,qi,qj->tij", w, phi, phi)
    return _scatter(space, space, local)


def _diffusion(space: FemSpace, coefficient: Coefficient) -> sp.csr_matrix:
    w = _weights(space, coefficient)
    g = space.grads
    local = np.einsum("tq,tqid,tqjd->tij", w, g, g)
    return _scatter(space, space, local)


def _convection(space: FemSpace, velocity: FloatArray) -> sp.csr_matrix:
    """(w . grad phi_j) phi_i."""
    velocity = np.asarray(velocity, dtype=np.float64)
    if velocity.shape != space.jxw.shape + (2,):
        raise AssemblyError(f"Velocity of shape {velocity.shape} does not match quadrature shape")
    advective = np.einsum("tqd,tqjd->tqj", velocity, space.grads)
    local = np.einsum("tq,qi,tqj->tij", space.jxw, space.basis, advective)
    return _scatter(space, space, local)


def _divergence(pressure: FemSpace, velocity: FemSpace) -> sp.csr_matrix:
    """B[q, (c, j)] = psi_q d_c phi_j."""
    blocks = []
    for c in range(2):
        local = np.einsum("tq,qi,tqj->tij", velocity.jxw, pressure.basis, velocity.grads[..., c])
        blocks.append(_scatter(pressure, velocity.scalar, local))
    return sp.hstack(blocks, format="csr")


def assemble(
    form: Form,
    space: FemSpace,
    *,
    trial_space: Optional[FemSpace] = None,
    coefficient: Coefficient = None,
    velocity: Optional[FloatArray] = None,
) -> sp.csr_matrix:
    """Assemble a bilinear form into a CSR matrix.

    Args:
        form: Which form to assemble
        space: Test space (and trial space unless ``trial_space`` is given)
        trial_space: Trial space, only used by DIVERGENCE (the P2 vector space)
        coefficient: Scalar coefficient for MASS / DIFFUSION / BRINKMAN /
            VECTOR_LAPLACIAN, or the velocity gradient for
            CONVECTION_LINEARIZATION
        velocity: Advecting velocity at quadrature points for the
            convection forms

    Returns:
        Sparse matrix; vector spaces yield 2x2 block matrices over [u_x; u_y]

    Raises:
        AssemblyError: Unknown form, missing data, or space mismatch
    """
    vector = space.kind is SpaceKind.P2_VECTOR
    scalar = space.scalar

    if form is Form.MASS:
        block = _mass(scalar, coefficient)
        return block_diagonal(block) if vector else block
    if form is Form.DIFFUSION:
        if vector:
            raise AssemblyError("DIFFUSION is a scalar form; use VECTOR_LAPLACIAN")
        return _diffusion(space, coefficient)
    if form is Form.BRINKMAN:
        if not vector:
            raise AssemblyError("BRINKMAN expects the P2 vector space")
        return block_diagonal(_mass(scalar, coefficient))
    if form is Form.VECTOR_LAPLACIAN:
        if not vector:
            raise AssemblyError("VECTOR_LAPLACIAN expects the P2 vector space")
        return block_diagonal(_diffusion(scalar, coefficient))
    if form in (Form.CONVECTION, Form.ADJOINT_CONVECTION):
        if velocity is None:
            raise AssemblyError(f"{form.name} needs a velocity")
        block = _convection(scalar, velocity)
        if form is Form.ADJOINT_CONVECTION:
            block = block.T.tocsr()
        return block_diagonal(block) if vector else block
    if form is Form.CONVECTION_LINEARIZATION:
        if not vector:
            raise AssemblyError("CONVECTION_LINEARIZATION expects the P2 vector space")
        grad_u = np.asarray(coefficient, dtype=np.float64)
        if grad_u.shape != scalar.jxw.shape + (2, 2):
            raise AssemblyError("CONVECTION_LINEARIZATION needs the velocity gradient (n_t, n_q, 2, 2)")
        # (du . grad) u0 . v: block (c, d) is the mass form weighted by d_d u0_c
        blocks = [[_mass(scalar, grad_u[..., c, d]) for d in range(2)] for c in range(2)]
        return sp.bmat(blocks, format="csr")
    if form is Form.DIVERGENCE:
        if trial_space is None or trial_space.kind is not SpaceKind.P2_VECTOR or space.kind.degree != 1:
            raise AssemblyError("DIVERGENCE needs a P1 test space and the P2 vector trial space")
        if trial_space.mesh is not space.mesh:
            raise AssemblyError("DIVERGENCE spaces live on different meshes")
        return _divergence(space, trial_space)
    raise AssemblyError(f"Unknown form {form!r}")


def load_vector(space: FemSpace, values: FloatArray) -> FloatArray:
    """Load vector of a function sampled at quadrature points.

    Scalar spaces take (n_t, n_q) samples; the P2 vector space takes
    (n_t, n_q, 2) and returns ``[f_x; f_y]`` blocks.
    """
    values = np.asarray(values, dtype=np.float64)
    scalar = space.scalar
    if space.kind is SpaceKind.P2_VECTOR:
        if values.shape != scalar.jxw.shape + (2,):
            raise AssemblyError(f"Vector load of shape {values.shape} does not match quadrature shape")
        return np.concatenate([load_vector(scalar, values[..., c]) for c in range(2)])
    if values.shape != space.jxw.shape:
        raise AssemblyError(f"Load of shape {values.shape} does not match quadrature shape {space.jxw.shape}")
    local = np.einsum("tq,qi->ti", space.jxw * values, space.basis)
    return np.bincount(space.dof_map.ravel(), weights=local.ravel(), minlength=space.n_scalar)
