"""Voxel-hexahedral linear elasticity.

The grid of nx*ny*nz voxels carries (nx+1)*(ny+1)*(nz+1) nodes with three
displacement DOFs each. Elements are trilinear 8-node hexahedra integrated
with 2x2x2 Gauss quadrature; the element stiffness is computed once per
(material, voxel size) and scaled per voxel by the penalized Young's modulus
E(rho) = E0 * rho**p. The global operator is never assembled: K(rho) u is
evaluated matrix-free and the system is solved with Jacobi-preconditioned
conjugate gradients.

Dirichlet handling: a directional flag on a voxel pins that direction's DOF
on all 8 of its corner nodes. Constrained rows/columns act as the identity,
so constrained entries pass through unchanged and never couple to free DOFs.

All reductions are fixed-order and serial, so repeated solves on the same
inputs are reproducible on a given installation.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import ConvergenceError, ShapeError, SingularSystemError
from .grid import Material, Problem

#: Local node order within an element: corner offsets (di, dj, dk), k fastest.
CORNER_OFFSETS = np.array(
    [(di, dj, dk) for di in (0, 1) for dj in (0, 1) for dk in (0, 1)], dtype=np.int64
)

_GAUSS_1D = (-1.0 / np.sqrt(3.0), 1.0 / np.sqrt(3.0))


def constitutive_matrix(young_modulus: float, poisson_ratio: float) -> np.ndarray:
    """6x6 isotropic elasticity matrix in Voigt order [xx, yy, zz, xy, yz, zx]."""
    if not 0.0 <= poisson_ratio < 0.5:
        raise ValueError(f"poisson_ratio must lie in [0, 0.5), got {poisson_ratio}")
    e, nu = young_modulus, poisson_ratio
    lam = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = e / (2.0 * (1.0 + nu))
    c = np.zeros((6, 6))
    c[:3, :3] = lam
    c[np.diag_indices(3)] += 2.0 * mu
    c[3, 3] = c[4, 4] = c[5, 5] = mu
    return c


def _strain_matrix(voxel_size, xi: float, eta: float, zeta: float) -> np.ndarray:
    """6x24 strain-displacement matrix B at a local point of the unit cube.

    DOF order is node-major ([n0x n0y n0z n1x ...]) with nodes in
    CORNER_OFFSETS order; shear rows use engineering strains.
    """
    sx, sy, sz = voxel_size
    b = np.zeros((6, 24))
    for a, (di, dj, dk) in enumerate(CORNER_OFFSETS):
        xa, ya, za = 2 * di - 1, 2 * dj - 1, 2 * dk - 1
        gx = xa * (1 + ya * eta) * (1 + za * zeta) / 8.0 * (2.0 / sx)
        gy = ya * (1 + xa * xi) * (1 + za * zeta) / 8.0 * (2.0 / sy)
        gz = za * (1 + xa * xi) * (1 + ya * eta) / 8.0 * (2.0 / sz)
        col = 3 * a
        b[0, col + 0] = gx
        b[1, col + 1] = gy
        b[2, col + 2] = gz
        b[3, col + 0] = gy
        b[3, col + 1] = gx
        b[4, col + 1] = gz
        b[4, col + 2] = gy
        b[5, col + 0] = gz
        b[5, col + 2] = gx
    return b


@dataclass(frozen=True)
class ElementStiffness:
    """24x24 hexahedral stiffness for unit Young's modulus and fixed voxel size."""

    matrix: np.ndarray
    voxel_size: Tuple[float, float, float]
    poisson_ratio: float


def element_stiffness(material: Material, voxel_size) -> ElementStiffness:
    """Integrate the trilinear element stiffness with 2x2x2 Gauss quadrature.

    The returned matrix uses E = 1; per-voxel scaling by E0 * rho**p happens
    in apply_stiffness. Symmetry is enforced to machine precision by
    averaging with the transpose.
    """
    sx, sy, sz = (float(s) for s in voxel_size)
    if min(sx, sy, sz) <= 0:
        raise ValueError(f"voxel_size must be positive, got {voxel_size}")
    c = constitutive_matrix(1.0, material.poisson_ratio)
    det_j = sx * sy * sz / 8.0
    k = np.zeros((24, 24))
    for xi in _GAUSS_1D:
        for eta in _GAUSS_1D:
            for zeta in _GAUSS_1D:
                b = _strain_matrix((sx, sy, sz), xi, eta, zeta)
                k += b.T @ c @ b * det_j
    k = 0.5 * (k + k.T)
    return ElementStiffness(matrix=k, voxel_size=(sx, sy, sz), poisson_ratio=material.poisson_ratio)


def node_count(dims) -> int:
    nx, ny, nz = dims
    return (nx + 1) * (ny + 1) * (nz + 1)


def element_dof_map(dims) -> np.ndarray:
    """(n_elements, 24) global DOF indices per element.

    Elements and nodes are both enumerated C-order (z fastest); node DOFs are
    node-major: dof = 3 * node_id + axis. Cached per grid size since solvers
    call this every operator application.
    """
    return _element_dof_map(tuple(int(d) for d in dims))


@lru_cache(maxsize=8)
def _element_dof_map(dims: Tuple[int, int, int]) -> np.ndarray:
    nx, ny, nz = dims
    nny, nnz = ny + 1, nz + 1
    ex, ey, ez = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    ex, ey, ez = ex.ravel(), ey.ravel(), ez.ravel()
    nodes = np.empty((ex.size, 8), dtype=np.int64)
    for a, (di, dj, dk) in enumerate(CORNER_OFFSETS):
        nodes[:, a] = ((ex + di) * nny + (ey + dj)) * nnz + (ez + dk)
    dofs = (nodes[:, :, None] * 3 + np.arange(3)).reshape(-1, 24)
    dofs.setflags(write=False)
    return dofs


def field_to_flat(field: np.ndarray) -> np.ndarray:
    """[3, nnx, nny, nnz] nodal field -> flat node-major DOF vector."""
    return np.ascontiguousarray(np.moveaxis(field, 0, 3)).reshape(-1)


def flat_to_field(vec: np.ndarray, dims) -> np.ndarray:
    """Flat node-major DOF vector -> [3, nx+1, ny+1, nz+1]."""
    nx, ny, nz = dims
    return np.moveaxis(vec.reshape(nx + 1, ny + 1, nz + 1, 3), 3, 0).copy()


def constrained_dof_mask(problem: Problem) -> np.ndarray:
    """Boolean [3, nx+1, ny+1, nz+1]: True where a DOF is pinned to zero."""
    nx, ny, nz = problem.dims
    mask = np.zeros((3, nx + 1, ny + 1, nz + 1), dtype=bool)
    for axis in range(3):
        flagged = problem.dirichlet[axis] != 0
        for di, dj, dk in CORNER_OFFSETS:
            mask[axis, di : nx + di, dj : ny + dj, dk : nz + dk] |= flagged
    return mask


def assemble_loads(problem: Problem) -> np.ndarray:
    """Nodal load vector [3, nx+1, ny+1, nz+1] in newtons.

    Each voxel's force density times its volume is split equally over its 8
    corner nodes, so the total nodal force per axis equals the integrated
    volumetric force exactly (up to float summation).
    """
    nx, ny, nz = problem.dims
    share = problem.forces.astype(np.float64) * (problem.voxel_volume / 8.0)
    loads = np.zeros((3, nx + 1, ny + 1, nz + 1))
    for di, dj, dk in CORNER_OFFSETS:
        loads[:, di : nx + di, dj : ny + dj, dk : nz + dk] += share
    return loads


def _element_scales(problem: Problem, rho: np.ndarray) -> np.ndarray:
    m = problem.material
    rho = np.asarray(rho, dtype=np.float64)
    if rho.shape != problem.dims:
        raise ShapeError(f"density shape {rho.shape} does not match dims {problem.dims}")
    return m.young_modulus * rho.ravel() ** m.penalization_p


def apply_stiffness(
    problem: Problem,
    rho: np.ndarray,
    u: np.ndarray,
    ke: Optional[ElementStiffness] = None,
    constrained: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Matrix-free y = K(rho) u on nodal fields [3, nx+1, ny+1, nz+1].

    Constrained DOFs behave as identity rows/columns: their input values pass
    through to the output and do not couple to free DOFs.
    """
    if ke is None:
        ke = element_stiffness(problem.material, problem.voxel_size)
    if constrained is None:
        constrained = constrained_dof_mask(problem)
    edof = element_dof_map(problem.dims)
    scales = _element_scales(problem, rho)

    u_flat = field_to_flat(np.asarray(u, dtype=np.float64))
    c_flat = field_to_flat(constrained)
    u_free = np.where(c_flat, 0.0, u_flat)

    gathered = u_free[edof]
    per_elem = (gathered @ ke.matrix) * scales[:, None]
    y = np.bincount(edof.ravel(), weights=per_elem.ravel(), minlength=u_flat.size)
    y[c_flat] = u_flat[c_flat]
    return flat_to_field(y, problem.dims)


def stiffness_diagonal(
    problem: Problem,
    rho: np.ndarray,
    ke: ElementStiffness,
    constrained: np.ndarray,
) -> np.ndarray:
    """Flat diagonal of K(rho) with ones on constrained DOFs (Jacobi preconditioner)."""
    edof = element_dof_map(problem.dims)
    scales = _element_scales(problem, rho)
    contrib = scales[:, None] * np.diag(ke.matrix)[None, :]
    diag = np.bincount(edof.ravel(), weights=contrib.ravel(), minlength=3 * node_count(problem.dims))
    diag[field_to_flat(constrained)] = 1.0
    return diag


@dataclass(frozen=True)
class SolveStats:
    iterations: int
    residual: float
    ndof: int


def solve_displacements(
    problem: Problem,
    rho: np.ndarray,
    tol: float = 1e-8,
    max_iter: Optional[int] = None,
) -> Tuple[np.ndarray, SolveStats]:
    """Solve K(rho) u = F for the nodal displacements.

    Jacobi-preconditioned CG on the constrained operator; the convergence
    criterion is the true relative residual ||K u - F|| / ||F||, re-verified
    against the recurrence residual before accepting. Raises
    SingularSystemError when no DOF is constrained and ConvergenceError
    (carrying the final residual) when max_iter is exhausted.
    """
    ke = element_stiffness(problem.material, problem.voxel_size)
    constrained = constrained_dof_mask(problem)
    if not constrained.any():
        raise SingularSystemError(
            "no Dirichlet constraint anywhere: the system has rigid-body modes"
        )
    ndof = 3 * node_count(problem.dims)
    if max_iter is None:
        max_iter = 10 * ndof

    c_flat = field_to_flat(constrained)
    b = field_to_flat(assemble_loads(problem))
    b[c_flat] = 0.0
    diag = stiffness_diagonal(problem, rho, ke, constrained)

    def apply_flat(vec: np.ndarray) -> np.ndarray:
        return field_to_flat(
            apply_stiffness(problem, rho, flat_to_field(vec, problem.dims), ke, constrained)
        )

    u, stats = _pcg(apply_flat, b, diag, tol, max_iter)
    return flat_to_field(u, problem.dims), stats


def _pcg(
    apply_op: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    diag: np.ndarray,
    tol: float,
    max_iter: int,
) -> Tuple[np.ndarray, SolveStats]:
    b_norm = float(np.linalg.norm(b))
    u = np.zeros_like(b)
    if b_norm == 0.0:
        return u, SolveStats(iterations=0, residual=0.0, ndof=b.size)

    r = b.copy()
    z = r / diag
    p = z.copy()
    rz = float(r @ z)
    residual = 1.0
    for it in range(1, max_iter + 1):
        q = apply_op(p)
        pq = float(p @ q)
        if pq <= 0.0:
            raise ConvergenceError(
                f"CG breakdown: non-positive curvature at iteration {it}",
                residual=residual,
                iterations=it,
            )
        alpha = rz / pq
        u += alpha * p
        r -= alpha * q
        residual = float(np.linalg.norm(r)) / b_norm
        if residual <= tol:
            # Recurrence residuals drift; accept only the true residual.
            r_true = b - apply_op(u)
            residual = float(np.linalg.norm(r_true)) / b_norm
            if residual <= tol:
                return u, SolveStats(iterations=it, residual=residual, ndof=b.size)
            r = r_true
        z = r / diag
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(
        f"CG did not reach tol={tol:g} within {max_iter} iterations "
        f"(residual {residual:.3e})",
        residual=residual,
        iterations=max_iter,
    )


def element_stresses(problem: Problem, u: np.ndarray) -> np.ndarray:
    """Per-voxel centroid stress tensors, shape (n_elements, 6) in Voigt order.

    Stresses are evaluated with the solid (un-penalized) material stiffness:
    yield checks concern the physical material, and normalized uses cancel
    the constant factor anyway.
    """
    ke = element_stiffness(problem.material, problem.voxel_size)
    b = _strain_matrix(ke.voxel_size, 0.0, 0.0, 0.0)
    c = constitutive_matrix(problem.material.young_modulus, problem.material.poisson_ratio)
    edof = element_dof_map(problem.dims)
    u_elems = field_to_flat(np.asarray(u, dtype=np.float64))[edof]
    strains = u_elems @ b.T
    return strains @ c.T


def von_mises(problem: Problem, rho: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Per-voxel von Mises stress (nx, ny, nz) at element centroids, in Pa.

    rho is accepted for signature symmetry with the solve it postprocesses;
    the stress itself uses the solid constitutive matrix (see
    element_stresses).
    """
    s = element_stresses(problem, u)
    sx, sy, sz, txy, tyz, tzx = (s[:, i] for i in range(6))
    vm_sq = 0.5 * ((sx - sy) ** 2 + (sy - sz) ** 2 + (sz - sx) ** 2) + 3.0 * (
        txy**2 + tyz**2 + tzx**2
    )
    return np.sqrt(vm_sq).reshape(problem.dims)


def compliance(u: np.ndarray, loads: np.ndarray) -> float:
    """Work of the external loads F^T u, in joules.

    Displacements vanish on constrained DOFs, so summing over all DOFs equals
    the sum over free DOFs.
    """
    u = np.asarray(u, dtype=np.float64)
    loads = np.asarray(loads, dtype=np.float64)
    if u.shape != loads.shape:
        raise ShapeError(f"displacement shape {u.shape} vs load shape {loads.shape}")
    return float(np.dot(u.ravel(), loads.ravel()))
