"""Shared fixture builders for small, fully-specified test problems."""
import numpy as np
import pytest

from topovox import DESIGN_FREE, DESIGN_SOLID, Material, make_problem

TEST_MATERIAL = Material(young_modulus=70e9, poisson_ratio=0.3, yield_stress=450e6)


def cantilever(dims, voxel_size=(1e-3, 1e-3, 1e-3), material=TEST_MATERIAL,
               load_axis=2, load_sign=-1.0, vmax=0.4):
    """Clamp the x=0 voxel layer in all directions, load the far x edge.

    The load is a volumetric force density on the voxels at x = nx-1, applied
    along load_axis. Clamped and loaded voxels are marked forced-solid.
    """
    nx, ny, nz = dims
    dirichlet = np.zeros((3, nx, ny, nz), dtype=np.uint8)
    dirichlet[:, 0, :, :] = 1
    forces = np.zeros((3, nx, ny, nz), dtype=np.float32)
    forces[load_axis, nx - 1, :, :] = load_sign * 1e7
    design = np.full((1, nx, ny, nz), DESIGN_FREE, dtype=np.int8)
    design[0, 0, :, :] = DESIGN_SOLID
    design[0, nx - 1, :, :] = DESIGN_SOLID
    return make_problem(dims, voxel_size, material, dirichlet, forces, design,
                        volume_fraction_max=vmax)


def random_problem(rng, dims, voxel_size=(1e-3, 1e-3, 1e-3), material=TEST_MATERIAL,
                   with_void=False):
    """Random valid problem: one clamped voxel region, random loads elsewhere."""
    nx, ny, nz = dims
    dirichlet = np.zeros((3, nx, ny, nz), dtype=np.uint8)
    dirichlet[:, 0, 0, 0] = 1
    forces = np.zeros((3, nx, ny, nz), dtype=np.float32)
    n_loads = int(rng.integers(1, 3))
    design = np.full((1, nx, ny, nz), DESIGN_FREE, dtype=np.int8)
    if with_void:
        void = rng.random((nx, ny, nz)) < 0.2
        design[0, void] = 0
    design[0, 0, 0, 0] = DESIGN_SOLID
    for _ in range(n_loads):
        i, j, k = (int(rng.integers(0, d)) for d in dims)
        if (i, j, k) == (0, 0, 0):
            i = nx - 1
        forces[:, i, j, k] = rng.normal(scale=1e7, size=3).astype(np.float32)
        design[0, i, j, k] = DESIGN_SOLID
    return make_problem(dims, voxel_size, material, dirichlet, forces, design)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
