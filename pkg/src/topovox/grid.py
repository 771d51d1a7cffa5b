"""Problem data model on a structured voxel grid.

A problem couples material constants with three voxel tensors: directional
Dirichlet flags [3, nx, ny, nz], volumetric force densities [3, nx, ny, nz]
in N/m^3, and a ternary design tensor [1, nx, ny, nz] whose -1/0/1 entries
mark free, forced-void and forced-solid voxels. All in-memory quantities are
SI (meters, pascals); unit conversion happens only at the I/O boundary.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ShapeError

DESIGN_FREE = -1
DESIGN_VOID = 0
DESIGN_SOLID = 1


@dataclass(frozen=True)
class Material:
    """Isotropic linear-elastic material plus density-penalization constants.

    young_modulus and yield_stress are in Pa; poisson_ratio must stay strictly
    below 0.5 so the constitutive matrix remains nonsingular; rho_min > 0 keeps
    void voxels solvable.
    """

    young_modulus: float
    poisson_ratio: float
    yield_stress: float
    penalization_p: float = 3.0
    rho_min: float = 1e-3

    def __post_init__(self):
        if not self.young_modulus > 0:
            raise ValueError(f"young_modulus must be > 0, got {self.young_modulus}")
        if not 0.0 <= self.poisson_ratio < 0.5:
            raise ValueError(f"poisson_ratio must lie in [0, 0.5), got {self.poisson_ratio}")
        if not self.yield_stress > 0:
            raise ValueError(f"yield_stress must be > 0, got {self.yield_stress}")
        if not self.penalization_p > 1:
            raise ValueError(f"penalization_p must be > 1, got {self.penalization_p}")
        if not 0.0 < self.rho_min < 1.0:
            raise ValueError(f"rho_min must lie in (0, 1), got {self.rho_min}")


#: 70 GPa / 0.3 / 450 MPa, the constants used throughout the bundled demos.
DEFAULT_MATERIAL = Material(young_modulus=70e9, poisson_ratio=0.3, yield_stress=450e6)


def _as_tensor(name: str, arr, dtype, shape) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=dtype)
    if out.shape != shape:
        raise ShapeError(f"{name} must have shape {shape}, got {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Problem:
    """One topology-optimization problem instance. Immutable after construction.

    Construction only enforces structural consistency (shapes, dtypes,
    positive sizes); content rules such as the ternary design domain are
    reported by :func:`validate_problem` so that deliberately broken
    instances can still be built and diagnosed.
    """

    dims: Tuple[int, int, int]
    voxel_size: Tuple[float, float, float]
    material: Material
    dirichlet: np.ndarray
    forces: np.ndarray
    design: np.ndarray
    volume_fraction_max: float = 1.0

    def __post_init__(self):
        nx, ny, nz = (int(d) for d in self.dims)
        if min(nx, ny, nz) < 1:
            raise ShapeError(f"dims must be positive, got {self.dims}")
        sx, sy, sz = (float(s) for s in self.voxel_size)
        if min(sx, sy, sz) <= 0:
            raise ValueError(f"voxel_size must be positive, got {self.voxel_size}")
        if not 0.0 < self.volume_fraction_max <= 1.0:
            raise ValueError(
                f"volume_fraction_max must lie in (0, 1], got {self.volume_fraction_max}"
            )
        object.__setattr__(self, "dims", (nx, ny, nz))
        object.__setattr__(self, "voxel_size", (sx, sy, sz))
        object.__setattr__(
            self, "dirichlet", _as_tensor("dirichlet", self.dirichlet, np.uint8, (3, nx, ny, nz))
        )
        object.__setattr__(
            self, "forces", _as_tensor("forces", self.forces, np.float32, (3, nx, ny, nz))
        )
        object.__setattr__(
            self, "design", _as_tensor("design", self.design, np.int8, (1, nx, ny, nz))
        )

    def __eq__(self, other):
        if not isinstance(other, Problem):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.voxel_size == other.voxel_size
            and self.material == other.material
            and self.volume_fraction_max == other.volume_fraction_max
            and np.array_equal(self.dirichlet, other.dirichlet)
            and np.array_equal(self.forces, other.forces)
            and np.array_equal(self.design, other.design)
        )

    @property
    def voxel_volume(self) -> float:
        sx, sy, sz = self.voxel_size
        return sx * sy * sz

    @property
    def design_map(self) -> np.ndarray:
        """Design tensor without its channel axis, shape (nx, ny, nz)."""
        return self.design[0]

    def load_mask(self) -> np.ndarray:
        """Boolean (nx, ny, nz): voxels carrying any nonzero force component."""
        return np.any(self.forces != 0, axis=0)

    def dirichlet_mask(self) -> np.ndarray:
        """Boolean (nx, ny, nz): voxels carrying any directional constraint."""
        return np.any(self.dirichlet != 0, axis=0)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate_problem: one (code, message) pair per violation."""

    violations: Tuple[Tuple[str, str], ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def codes(self) -> Tuple[str, ...]:
        return tuple(code for code, _ in self.violations)

    def __str__(self):
        if self.ok:
            return "valid"
        return "; ".join(f"{code}: {msg}" for code, msg in self.violations)


def validate_problem(problem: Problem) -> ValidationReport:
    """Check all content invariants of a problem without mutating it.

    Structural defects (mismatched tensor shapes) are rejected earlier, at
    Problem construction, with a ShapeError; this reports the per-voxel
    content rules.
    """
    violations = []
    dirichlet = problem.dirichlet
    design = problem.design_map

    if not np.all((dirichlet == 0) | (dirichlet == 1)):
        violations.append(("dirichlet_domain", "dirichlet entries must be exactly 0 or 1"))
    if not np.all((design == DESIGN_FREE) | (design == DESIGN_VOID) | (design == DESIGN_SOLID)):
        violations.append(("design_domain", "design entries must lie in the ternary domain {-1, 0, 1}"))

    flagged = problem.dirichlet_mask() | problem.load_mask()
    if np.any(flagged & (design != DESIGN_SOLID)):
        violations.append(
            ("design_at_loads", "design must be 1 at every voxel carrying loads or constraints")
        )
    if not problem.dirichlet_mask().any():
        violations.append(("no_dirichlet", "at least one voxel must carry a Dirichlet constraint"))
    if not problem.load_mask().any():
        violations.append(("no_loads", "at least one voxel must carry a force"))

    return ValidationReport(tuple(violations))


def binarize(
    density: np.ndarray,
    threshold: float = 0.5,
    design: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Threshold a density field into a {0, 1} mask.

    Voxels with density >= threshold become 1. When a design tensor is given,
    forced-void voxels are reset to 0 and forced-solid voxels to 1 afterwards,
    so the mask always honors the frozen regions.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    density = np.asarray(density)
    if density.ndim != 3:
        raise ShapeError(f"density must be a 3D field, got shape {density.shape}")
    mask = (density >= threshold).astype(np.uint8)
    if design is not None:
        design = np.asarray(design)
        if design.ndim == 4:
            design = design[0]
        if design.shape != density.shape:
            raise ShapeError(
                f"design shape {design.shape} does not match density shape {density.shape}"
            )
        mask[design == DESIGN_VOID] = 0
        mask[design == DESIGN_SOLID] = 1
    return mask


def clamp_density(
    density: np.ndarray, design: np.ndarray, rho_min: float
) -> np.ndarray:
    """Force rho_min on forced-void voxels and 1.0 on forced-solid voxels."""
    design = np.asarray(design)
    if design.ndim == 4:
        design = design[0]
    out = np.array(density, dtype=np.float64)
    out[design == DESIGN_VOID] = rho_min
    out[design == DESIGN_SOLID] = 1.0
    return out


def make_problem(
    dims: Sequence[int],
    voxel_size: Sequence[float] = (1e-3, 1e-3, 1e-3),
    material: Material = DEFAULT_MATERIAL,
    dirichlet: Optional[np.ndarray] = None,
    forces: Optional[np.ndarray] = None,
    design: Optional[np.ndarray] = None,
    volume_fraction_max: float = 1.0,
) -> Problem:
    """Convenience constructor filling missing tensors with zeros / all-free design."""
    nx, ny, nz = (int(d) for d in dims)
    if dirichlet is None:
        dirichlet = np.zeros((3, nx, ny, nz), dtype=np.uint8)
    if forces is None:
        forces = np.zeros((3, nx, ny, nz), dtype=np.float32)
    if design is None:
        design = np.full((1, nx, ny, nz), DESIGN_FREE, dtype=np.int8)
    return Problem(
        dims=(nx, ny, nz),
        voxel_size=tuple(float(s) for s in voxel_size),
        material=material,
        dirichlet=dirichlet,
        forces=forces,
        design=design,
        volume_fraction_max=volume_fraction_max,
    )
