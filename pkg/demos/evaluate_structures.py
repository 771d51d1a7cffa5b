"""Judge predicted structures the way the evaluation pipeline does.

Runs the full verdict chain on three structures: a sound optimized-style
strut, one with the load left floating, and one loaded far beyond yield.
Then aggregates a toy sample-efficiency curve into its two headline numbers.
"""
import numpy as np

from topovox import (
    SECurve,
    auc_150,
    binarize,
    check_fail,
    fail_percentage,
    final_score,
    iou,
    make_problem,
)
from topovox.grid import DESIGN_FREE, DESIGN_SOLID


def bridge_problem(load_scale=1.0):
    dims = (8, 3, 3)
    dirichlet = np.zeros((3,) + dims, dtype=np.uint8)
    dirichlet[:, 0, :, :] = 1
    forces = np.zeros((3,) + dims, dtype=np.float32)
    forces[2, 7, 1, 1] = -1e6 * load_scale
    design = np.full((1,) + dims, DESIGN_FREE, dtype=np.int8)
    design[0, 0, :, :] = DESIGN_SOLID
    design[0, 7, 1, 1] = DESIGN_SOLID
    return make_problem(dims, (1e-3, 1e-3, 1e-3), dirichlet=dirichlet, forces=forces, design=design)


problem = bridge_problem()
solid = np.ones(problem.dims, dtype=np.uint8)

floating = solid.copy()
floating[4, :, :] = 0  # sever the load from the supports

reports = {
    "solid bar": check_fail(solid, problem),
    "floating load": check_fail(floating, problem),
    "overloaded": check_fail(solid, bridge_problem(load_scale=1e4)),
}
for name, report in reports.items():
    verdict = report.reason or "ok"
    peak = "n/a" if np.isnan(report.max_von_mises) else f"{report.max_von_mises/1e6:7.1f} MPa"
    print(f"{name:14s} -> {verdict:13s} peak von Mises {peak}")

print(f"\nfail percentage over the three: {fail_percentage(list(reports.values())):.1f}%")

gt = binarize(np.ones(problem.dims), 0.5, problem.design)
pred = binarize(floating.astype(float), 0.5, problem.design)
print(f"IoU of the floating structure vs the solid ground truth: {iou(pred, gt, problem.design):.3f}")

# sample-efficiency bookkeeping: one (train size, iou, fail%) point per run
curve = SECurve(
    (
        (2, 0.22, 78.0),
        (10, 0.41, 55.0),
        (50, 0.63, 21.0),
        (150, 0.74, 6.0),
        (500, 0.80, 2.0),
    )
)
print(f"\nAUC up to 150 samples: iou {auc_150(curve, 'iou'):.3f}, fail% {auc_150(curve, 'fail_pct'):.1f}")
print(f"final scores:          iou {final_score(curve, 'iou'):.3f}, fail% {final_score(curve, 'fail_pct'):.1f}")
