"""Density-based compliance minimization (SIMP) with optimality-criteria updates.

The loop is the classic one: solve the elastic system, form compliance
sensitivities, regularize them with a cone filter, then update densities with
a bisection-controlled optimality-criteria step under a volume bound. Voxels
frozen by the design tensor (forced void / forced solid) never move; the
volume budget applies to the free region only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from .elasticity import (
    assemble_loads,
    compliance,
    element_dof_map,
    element_stiffness,
    field_to_flat,
    solve_displacements,
)
from .errors import BisectionError
from .grid import DESIGN_FREE, Problem, clamp_density

_VOLUME_RTOL = 1e-4


@dataclass(frozen=True)
class SimpParams:
    """Optimizer knobs. volume_fraction_max is the material budget as a
    fraction of the free design region."""

    volume_fraction_max: float
    filter_radius: float = 1.5
    move_limit: float = 0.2
    oc_damping: float = 0.5
    max_iters: int = 200
    change_tol: float = 0.01
    filter_mode: str = "sensitivity"  # or "density"
    solve_tol: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.volume_fraction_max <= 1.0:
            raise ValueError(f"volume_fraction_max must lie in (0, 1], got {self.volume_fraction_max}")
        if not self.filter_radius >= 1.0:
            raise ValueError(f"filter_radius must be >= 1, got {self.filter_radius}")
        if not 0.0 < self.move_limit < 1.0:
            raise ValueError(f"move_limit must lie in (0, 1), got {self.move_limit}")
        if not 0.0 < self.oc_damping <= 1.0:
            raise ValueError(f"oc_damping must lie in (0, 1], got {self.oc_damping}")
        if self.filter_mode not in ("sensitivity", "density"):
            raise ValueError(f"filter_mode must be 'sensitivity' or 'density', got {self.filter_mode}")


@dataclass
class SimpState:
    """Snapshot of a finished (or in-progress) optimization run."""

    rho: np.ndarray
    iteration: int
    compliance_history: List[float] = field(default_factory=list)
    volume_history: List[float] = field(default_factory=list)
    change_history: List[float] = field(default_factory=list)
    last_change: float = float("inf")


def sensitivity(problem: Problem, rho: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Compliance derivative dc/drho per voxel, shape (nx, ny, nz). Always <= 0.

    For K(rho) u = F the self-adjoint chain rule gives
    dc/drho_e = -p * E0 * rho_e**(p-1) * u_e^T K_e u_e.
    """
    m = problem.material
    ke = element_stiffness(m, problem.voxel_size)
    edof = element_dof_map(problem.dims)
    u_elems = field_to_flat(np.asarray(u, dtype=np.float64))[edof]
    quad = np.einsum("ei,ei->e", u_elems @ ke.matrix, u_elems)
    quad = np.maximum(quad, 0.0)  # K_e is PSD; clip float dust
    rho_flat = np.asarray(rho, dtype=np.float64).ravel()
    sens = -m.penalization_p * m.young_modulus * rho_flat ** (m.penalization_p - 1.0) * quad
    return sens.reshape(problem.dims)


def _cone_kernel(radius: float) -> np.ndarray:
    reach = int(np.ceil(radius)) - 1 if float(radius).is_integer() else int(np.floor(radius))
    offsets = np.arange(-reach, reach + 1)
    dx, dy, dz = np.meshgrid(offsets, offsets, offsets, indexing="ij")
    kernel = radius - np.sqrt(dx**2 + dy**2 + dz**2)
    return np.maximum(kernel, 0.0)


def density_filter(
    values: np.ndarray, radius: float, design: Optional[np.ndarray] = None
) -> np.ndarray:
    """Cone-weighted neighborhood average with weights w(d) = max(0, radius - d).

    Weights are renormalized per voxel over the in-grid neighborhood, so
    constant fields are preserved exactly. With a design tensor the output is
    only changed on free voxels; frozen voxels keep their input values (and
    still contribute those values to their neighbors' averages).
    """
    if not radius >= 1.0:
        raise ValueError(f"radius must be >= 1, got {radius}")
    values = np.asarray(values, dtype=np.float64)
    kernel = _cone_kernel(radius)
    num = ndimage.correlate(values, kernel, mode="constant", cval=0.0)
    den = ndimage.correlate(np.ones_like(values), kernel, mode="constant", cval=0.0)
    out = num / den
    if design is not None:
        design = np.asarray(design)
        if design.ndim == 4:
            design = design[0]
        out = np.where(design == DESIGN_FREE, out, values)
    return out


def oc_update(
    rho: np.ndarray,
    sens: np.ndarray,
    dv,
    params: SimpParams,
    design: np.ndarray,
    rho_min: float,
) -> np.ndarray:
    """One optimality-criteria step under the volume bound.

    rho_new = clamp(rho * (-sens / (lam * dv))**oc_damping, move window), with
    lam bisected so the free-region volume fraction hits volume_fraction_max
    to relative 1e-4. Frozen voxels are returned untouched. If even the
    smallest multiplier cannot reach the bound (all free voxels at their upper
    clamp) the under-budget update is accepted.
    """
    rho = np.asarray(rho, dtype=np.float64)
    sens = np.asarray(sens, dtype=np.float64)
    design = np.asarray(design)
    if design.ndim == 4:
        design = design[0]
    free = design == DESIGN_FREE
    if not free.any():
        return rho.copy()

    dv = np.broadcast_to(np.asarray(dv, dtype=np.float64), rho.shape)
    if np.any(dv[free] <= 0):
        raise BisectionError("volume derivatives must be positive on the free region")
    if np.any(sens[free] > 0) or not np.all(np.isfinite(sens[free])):
        raise BisectionError("sensitivities must be finite and non-positive")

    r = rho[free]
    b = -sens[free] / dv[free]
    lower = np.maximum(rho_min, r - params.move_limit)
    upper = np.minimum(1.0, r + params.move_limit)
    target = params.volume_fraction_max * free.sum()

    def volume_at(lam: float) -> Tuple[float, np.ndarray]:
        cand = r * (b / lam) ** params.oc_damping
        cand = np.clip(cand, lower, upper)
        return float(cand.sum()), cand

    if not b.any():
        vol, cand = float(lower.sum()), lower
        if vol > target * (1.0 + _VOLUME_RTOL):
            raise BisectionError("degenerate sensitivities: zero everywhere but volume bound exceeded")
    else:
        lam_lo = 1e-12 * float(b[b > 0].min())
        lam_hi = 1e12 * float(b.max())
        vol_lo, cand = volume_at(lam_lo)
        if vol_lo <= target:
            vol = vol_lo  # cannot add more material than the upper clamps allow
        else:
            vol_hi, _ = volume_at(lam_hi)
            if vol_hi > target * (1.0 + _VOLUME_RTOL):
                raise BisectionError(
                    "bisection bracket failure: volume bound unreachable from below"
                )
            for _ in range(200):
                lam_mid = np.sqrt(lam_lo * lam_hi)  # log-space bisection
                vol, cand = volume_at(lam_mid)
                if abs(vol - target) <= _VOLUME_RTOL * target:
                    break
                if vol > target:
                    lam_lo = lam_mid
                else:
                    lam_hi = lam_mid
            else:
                raise BisectionError(
                    f"volume bisection did not converge (volume {vol:.6g}, target {target:.6g})"
                )

    out = rho.copy()
    out[free] = cand
    return out


def run_simp(problem: Problem, params: SimpParams) -> Tuple[np.ndarray, SimpState]:
    """Full optimization loop: solve -> sensitivities -> filter -> OC update.

    Stops when the per-iteration max density change drops below change_tol or
    max_iters is reached. Returns the final density and the run history.
    Solver errors propagate annotated with the iteration index.
    """
    design = problem.design_map
    rho_min = problem.material.rho_min
    free = design == DESIGN_FREE
    rho = clamp_density(
        np.full(problem.dims, params.volume_fraction_max, dtype=np.float64), design, rho_min
    )
    rho[free] = np.clip(rho[free], rho_min, 1.0)
    state = SimpState(rho=rho, iteration=0)
    if not free.any():
        return rho, state

    loads = assemble_loads(problem)
    for it in range(1, params.max_iters + 1):
        try:
            u, _ = solve_displacements(problem, rho, tol=params.solve_tol)
        except Exception as exc:
            raise type(exc)(f"iteration {it}: {exc}") from exc
        state.compliance_history.append(compliance(u, loads))
        sens = sensitivity(problem, rho, u)
        if params.filter_mode == "sensitivity":
            sens = density_filter(sens * rho, params.filter_radius, design) / np.maximum(rho, 1e-3)
            rho_new = oc_update(rho, sens, problem.voxel_volume, params, design, rho_min)
        else:
            rho_new = oc_update(rho, sens, problem.voxel_volume, params, design, rho_min)
            rho_new = clamp_density(
                density_filter(rho_new, params.filter_radius, design), design, rho_min
            )
        state.last_change = float(np.max(np.abs(rho_new - rho)))
        rho = rho_new
        state.iteration = it
        state.rho = rho
        state.volume_history.append(float(rho[free].sum() / free.sum()))
        state.change_history.append(state.last_change)
        if state.last_change < params.change_tol:
            break
    return rho, state
