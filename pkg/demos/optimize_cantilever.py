"""Optimize a small cantilever end to end.

Builds an 8x4x4 cantilever (clamped x=0 face, downward tip load), runs the
density optimizer under a 40% volume budget, and prints the compliance trace.
The result is written in the sample directory format next to this script.
"""
import pathlib

import numpy as np

from topovox import (
    DESIGN_FREE,
    DESIGN_SOLID,
    Material,
    SimpParams,
    assemble_loads,
    binarize,
    compliance,
    make_problem,
    run_simp,
    solve_displacements,
    write_sample,
)

material = Material(young_modulus=70e9, poisson_ratio=0.3, yield_stress=450e6)

nx, ny, nz = 8, 4, 4
dirichlet = np.zeros((3, nx, ny, nz), dtype=np.uint8)
dirichlet[:, 0, :, :] = 1  # clamp the x = 0 voxel layer in all directions

forces = np.zeros((3, nx, ny, nz), dtype=np.float32)
forces[2, nx - 1, :, 0] = -2e7  # downward force density along the far bottom edge

design = np.full((1, nx, ny, nz), DESIGN_FREE, dtype=np.int8)
design[0, 0, :, :] = DESIGN_SOLID
design[0, nx - 1, :, 0] = DESIGN_SOLID

problem = make_problem(
    (nx, ny, nz), (1e-3, 1e-3, 1e-3), material, dirichlet, forces, design,
    volume_fraction_max=0.4,
)

params = SimpParams(volume_fraction_max=0.4, filter_radius=1.5, max_iters=60)
rho, state = run_simp(problem, params)

print(f"converged after {state.iteration} iterations (last change {state.last_change:.4f})")
for it, (c, v) in enumerate(zip(state.compliance_history, state.volume_history), start=1):
    print(f"  iter {it:3d}  compliance {c:10.4e} J  volume {v:.3f}")

loads = assemble_loads(problem)
u, _ = solve_displacements(problem, rho, tol=1e-8)
print(f"final compliance: {compliance(u, loads):.4e} J")

free = problem.design_map == DESIGN_FREE
print(f"final volume fraction: {rho[free].sum() / free.sum():.4f}")

mask = binarize(rho, 0.5, problem.design)
print(f"solid voxels after binarization: {int(mask.sum())} / {mask.size}")

out = pathlib.Path(__file__).parent / "out" / "cantilever"
write_sample(out, problem, rho.astype(np.float32))
print(f"sample written to {out}")
