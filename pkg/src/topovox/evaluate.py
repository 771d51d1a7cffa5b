"""Physical-correctness and accuracy metrics.

IoU is counted on the editable design region only. A structure fails if any
loaded voxel cannot reach a constrained voxel through solid material
(6-connectivity) or if, after re-solving the elastic system on the binarized
structure, the peak von Mises stress over solid voxels exceeds the yield
stress by more than the tolerance factor (default 10%). Sample-efficiency
curves aggregate a criterion over training-set sizes; their headline numbers
are the normalized area under the curve up to 150 samples (integrated on a
log10 sample axis) and the value at the largest size.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .elasticity import solve_displacements, von_mises
from .errors import EvaluationError, ShapeError, TopovoxError
from .grid import DESIGN_FREE, Problem

#: Training subset sizes used for sample-efficiency sweeps.
TRAIN_SIZE_PRESETS: Dict[str, Tuple[int, ...]] = {
    "long": (2, 4, 10, 50, 100, 150, 250, 500, 1000, 1500),
    "short": (2, 4, 10, 50, 100, 150),
}

_SIX_CONNECTED = ndimage.generate_binary_structure(3, 1)


def iou(pred: np.ndarray, gt: np.ndarray, design: np.ndarray) -> float:
    """Intersection over union TP / (TP + FN + FP), restricted to free voxels.

    Both masks empty on the free region counts as perfect agreement (1.0).
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    design = np.asarray(design)
    if design.ndim == 4:
        design = design[0]
    if pred.shape != gt.shape or pred.shape != design.shape:
        raise ShapeError(
            f"shape mismatch: pred {pred.shape}, gt {gt.shape}, design {design.shape}"
        )
    free = design == DESIGN_FREE
    p = pred[free] != 0
    g = gt[free] != 0
    tp = int(np.sum(p & g))
    fn = int(np.sum(~p & g))
    fp = int(np.sum(p & ~g))
    if tp + fn + fp == 0:
        return 1.0
    return tp / (tp + fn + fp)


def connectivity_ok(mask: np.ndarray, problem: Problem) -> Tuple[bool, int]:
    """Check that every loaded voxel reaches a constrained voxel through solid.

    Flood-fills the solid voxels (6-connectivity) and compares component
    labels. Returns (ok, number of unreached loaded voxels); a loaded voxel
    that is itself void counts as unreached.
    """
    mask = np.asarray(mask)
    if mask.shape != problem.dims:
        raise ShapeError(f"mask shape {mask.shape} does not match dims {problem.dims}")
    solid = mask != 0
    labels, _ = ndimage.label(solid, structure=_SIX_CONNECTED)
    anchored = set(np.unique(labels[solid & problem.dirichlet_mask()]))
    load_labels = labels[problem.load_mask()]
    unreached = int(np.sum([lab == 0 or lab not in anchored for lab in load_labels]))
    return unreached == 0, unreached


@dataclass(frozen=True)
class FailReport:
    """Verdict of the physical-correctness check for one structure."""

    stress_failed: bool
    max_von_mises: float
    disconnected: bool
    unreached_load_voxels: int

    @property
    def failed(self) -> bool:
        return self.stress_failed or self.disconnected

    @property
    def reason(self) -> str:
        if self.disconnected:
            return "disconnected"
        if self.stress_failed:
            return "overstressed"
        return ""


def check_fail(
    mask: np.ndarray,
    problem: Problem,
    tol_factor: float = 1.10,
    solve_tol: float = 1e-8,
    max_iter: Optional[int] = None,
) -> FailReport:
    """Judge a binarized structure: connectivity first, then the stress check.

    Disconnected structures fail immediately and skip the solve (the elastic
    system would be singular for floating loads). Otherwise the system is
    re-solved with solid voxels at density 1 and void at rho_min, and the
    structure fails if the peak von Mises stress over solid voxels exceeds
    tol_factor times the yield stress. A solver breakdown on a connected
    structure is an evaluation error, not a fail verdict.
    """
    ok, unreached = connectivity_ok(mask, problem)
    if not ok:
        return FailReport(
            stress_failed=False,
            max_von_mises=float("nan"),
            disconnected=True,
            unreached_load_voxels=unreached,
        )
    rho = np.where(np.asarray(mask) != 0, 1.0, problem.material.rho_min)
    try:
        u, _ = solve_displacements(problem, rho, tol=solve_tol, max_iter=max_iter)
    except TopovoxError as exc:
        raise EvaluationError(f"stress check solve failed: {exc}") from exc
    vm = von_mises(problem, rho, u)
    solid = np.asarray(mask) != 0
    max_vm = float(vm[solid].max()) if solid.any() else 0.0
    return FailReport(
        stress_failed=bool(max_vm > tol_factor * problem.material.yield_stress),
        max_von_mises=max_vm,
        disconnected=False,
        unreached_load_voxels=0,
    )


def fail_percentage(reports: Sequence[FailReport]) -> float:
    """Share of failed structures, in percent."""
    if not reports:
        raise EvaluationError("fail_percentage needs at least one report")
    return 100.0 * sum(r.failed for r in reports) / len(reports)


def bce_weight(gts: Sequence[np.ndarray], designs: Sequence[np.ndarray]) -> float:
    """Positive-class weight for weighted BCE: void/solid voxel ratio over
    the free regions of the whole training set."""
    if not gts:
        raise EvaluationError("bce_weight needs a non-empty training set")
    if len(gts) != len(designs):
        raise ShapeError(f"{len(gts)} ground truths but {len(designs)} design tensors")
    void = solid = 0
    for gt, design in zip(gts, designs):
        design = np.asarray(design)
        if design.ndim == 4:
            design = design[0]
        g = np.asarray(gt)[design == DESIGN_FREE] != 0
        solid += int(np.sum(g))
        void += int(np.sum(~g))
    if solid == 0 or void == 0:
        raise EvaluationError(
            f"degenerate training set (solid={solid}, void={void}); weight undefined"
        )
    return void / solid


def weighted_bce(
    pred: np.ndarray,
    gt: np.ndarray,
    weight: float,
    design: Optional[np.ndarray] = None,
    eps: float = 1e-7,
) -> float:
    """Mean weighted binary cross-entropy over the free region.

    Predictions are clamped into [eps, 1 - eps] before the logs.
    """
    pred = np.clip(np.asarray(pred, dtype=np.float64), eps, 1.0 - eps)
    gt = np.asarray(gt, dtype=np.float64)
    if design is not None:
        design = np.asarray(design)
        if design.ndim == 4:
            design = design[0]
        sel = design == DESIGN_FREE
        pred, gt = pred[sel], gt[sel]
    loss = -(weight * gt * np.log(pred) + (1.0 - gt) * np.log(1.0 - pred))
    return float(loss.mean())


@dataclass(frozen=True)
class SECurve:
    """Metric values per training-set size; sizes strictly increasing."""

    points: Tuple[Tuple[int, float, float], ...]

    def __post_init__(self):
        pts = tuple((int(n), float(i), float(f)) for n, i, f in self.points)
        sizes = [n for n, _, _ in pts]
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("train sizes must be strictly increasing")
        for _, iou_value, fail_value in pts:
            if not 0.0 <= iou_value <= 1.0:
                raise ValueError(f"iou {iou_value} outside [0, 1]")
            if not 0.0 <= fail_value <= 100.0:
                raise ValueError(f"fail percentage {fail_value} outside [0, 100]")
        object.__setattr__(self, "points", pts)

    def sizes(self) -> Tuple[int, ...]:
        return tuple(n for n, _, _ in self.points)

    def values(self, criterion: str) -> Tuple[float, ...]:
        idx = {"iou": 1, "fail_pct": 2}[criterion]
        return tuple(p[idx] for p in self.points)


def auc_150(curve: SECurve, criterion: str = "iou") -> float:
    """Normalized area under the criterion curve up to 150 training samples.

    Trapezoidal integration over log10(train size), divided by the integrated
    log-width, so a constant curve maps to its constant value. Needs at least
    two points with size <= 150.
    """
    pts = [(n, v) for n, v in zip(curve.sizes(), curve.values(criterion)) if n <= 150]
    if len(pts) < 2:
        raise EvaluationError("auc_150 needs at least two points with train size <= 150")
    xs = np.log10([n for n, _ in pts])
    ys = [v for _, v in pts]
    return float(np.trapezoid(ys, xs) / (xs[-1] - xs[0]))


def final_score(curve: SECurve, criterion: str = "iou") -> float:
    """Criterion value at the largest training size."""
    if not curve.points:
        raise EvaluationError("final_score needs a non-empty curve")
    return curve.values(criterion)[-1]
