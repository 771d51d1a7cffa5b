"""Build network input tensors with all three preprocessings.

Fits the normalization constants on a tiny 'training set', then assembles the
7-channel raw encoding, the 1-channel initial-stress field from the elastic
solve, and the convex-hull channel, concatenated into one input tensor.
"""
import numpy as np

from topovox import (
    PreprocConfig,
    concat,
    convex_hull_preprocess,
    fit_normalization,
    make_problem,
    pde_preprocess,
    preprocess,
    trivial_preprocess,
)
from topovox.grid import DESIGN_FREE, DESIGN_SOLID


def corner_load_problem(seed):
    gen = np.random.default_rng(seed)
    dims = (6, 6, 4)
    dirichlet = np.zeros((3,) + dims, dtype=np.uint8)
    dirichlet[:, :, :, 0] = 1  # ground plate
    forces = np.zeros((3,) + dims, dtype=np.float32)
    i, j = gen.integers(0, 6, size=2)
    forces[:, i, j, 3] = gen.normal(scale=3e6, size=3)
    design = np.full((1,) + dims, DESIGN_FREE, dtype=np.int8)
    design[0, :, :, 0] = DESIGN_SOLID
    design[0, i, j, 3] = DESIGN_SOLID
    return make_problem(dims, (1e-3, 1e-3, 1e-3), dirichlet=dirichlet, forces=forces, design=design)


training = [corner_load_problem(s) for s in range(4)]
cfg = PreprocConfig(kinds=("trivial", "pde", "convex_hull"), pde_output="von_mises")
cfg = fit_normalization(training, cfg)
print(f"force_norm  = {cfg.force_norm:.4e} N/m^3")
print(f"stress_norm = {cfg.stress_norm:.4e} Pa")

sample = corner_load_problem(99)

trivial = trivial_preprocess(sample, cfg)
print(f"\ntrivial channels {trivial.channels.shape}: {trivial.channel_tags}")

stress = pde_preprocess(sample, cfg)
print(f"pde channel {stress.channels.shape}: peak normalized stress {stress.channels.max():.3f}")

hull = convex_hull_preprocess(sample)
print(f"hull channel: {int(hull.channels.sum())} voxels inside")

combined = concat(trivial, stress, hull)
print(f"\nconcatenated input: {combined.channels.shape[0]} channels")
print("tags:", ", ".join(combined.channel_tags))

# the one-call version used by the command line
assert np.array_equal(preprocess(sample, cfg).channels, combined.channels)
