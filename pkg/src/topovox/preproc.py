"""Neural-network input tensors built from problems.

Three preprocessings are available and can be concatenated channel-wise:

* trivial: the raw 7-channel encoding [dirichlet(3), forces(3), design(1)],
  with forces divided by a normalization constant fitted on training data
  (the mean over samples of the max-abs force entry);
* pde: solve the elastic system once on the initial density distribution
  (solid everywhere except forced-void voxels) and emit the resulting von
  Mises stress (1 channel), full stress tensor (6) or centroid-averaged
  displacements (3), divided by an analogously fitted constant;
* convex_hull: binary channel marking voxel centers inside the convex hull
  of all constrained or loaded voxel centers. Hull membership is decided
  with exact integer predicates on doubled index coordinates, boundary ties
  counting as inside, so the channel is deterministic at any resolution.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Optional, Tuple

import numpy as np

from .elasticity import solve_displacements, element_stresses, von_mises
from .errors import NormalizationError, NotFittedError, ShapeError, TopovoxError
from .grid import DESIGN_VOID, Problem

KINDS = ("trivial", "pde", "convex_hull")
PDE_OUTPUTS = ("von_mises", "full_stress", "displacements")

TRIVIAL_TAGS = (
    "dirichlet_x",
    "dirichlet_y",
    "dirichlet_z",
    "force_x",
    "force_y",
    "force_z",
    "design",
)
_PDE_TAGS = {
    "von_mises": ("vm_stress",),
    "full_stress": (
        "stress_xx",
        "stress_yy",
        "stress_zz",
        "stress_xy",
        "stress_yz",
        "stress_zx",
    ),
    "displacements": ("disp_x", "disp_y", "disp_z"),
}


@dataclass(frozen=True)
class PreprocConfig:
    """Which preprocessings to build and the fitted normalization constants."""

    kinds: Tuple[str, ...] = ("trivial",)
    pde_output: str = "von_mises"
    force_norm: Optional[float] = None
    stress_norm: Optional[float] = None
    solve_tol: float = 1e-12

    def __post_init__(self):
        if not self.kinds:
            raise ValueError("kinds must be non-empty")
        for kind in self.kinds:
            if kind not in KINDS:
                raise ValueError(f"unknown preprocessing kind {kind!r}")
        if self.pde_output not in PDE_OUTPUTS:
            raise ValueError(f"unknown pde_output {self.pde_output!r}")
        for name in ("force_norm", "stress_norm"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be > 0 once fitted, got {value}")


@dataclass(frozen=True)
class InputTensor:
    """Channels [C, nx, ny, nz] plus one semantic tag per channel."""

    channels: np.ndarray
    channel_tags: Tuple[str, ...]

    def __post_init__(self):
        channels = np.ascontiguousarray(self.channels, dtype=np.float64)
        if channels.ndim != 4:
            raise ShapeError(f"channels must be [C, nx, ny, nz], got {channels.shape}")
        if channels.shape[0] != len(self.channel_tags):
            raise ShapeError(
                f"{channels.shape[0]} channels but {len(self.channel_tags)} tags"
            )
        channels.setflags(write=False)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "channel_tags", tuple(self.channel_tags))


def build_rho_init(problem: Problem) -> np.ndarray:
    """Initial density: 1 on free and forced-solid voxels, rho_min on forced void.

    Forced-void voxels get rho_min rather than a literal zero so the elastic
    system stays solvable.
    """
    rho = np.ones(problem.dims, dtype=np.float64)
    rho[problem.design_map == DESIGN_VOID] = problem.material.rho_min
    return rho


def _pde_raw(problem: Problem, pde_output: str, solve_tol: float) -> np.ndarray:
    """Unnormalized PDE-preprocessing channels for one problem."""
    rho = build_rho_init(problem)
    try:
        u, _ = solve_displacements(problem, rho, tol=solve_tol)
    except TopovoxError as exc:
        raise type(exc)(f"pde-preprocess: {exc}") from exc
    if pde_output == "von_mises":
        return von_mises(problem, rho, u)[None]
    if pde_output == "full_stress":
        s = element_stresses(problem, u)  # (n_e, 6) Voigt
        return np.moveaxis(s.reshape(problem.dims + (6,)), 3, 0).copy()
    # displacements: average the 8 corner nodes to voxel centers so every
    # preprocessing channel lives on the same voxel grid
    nx, ny, nz = problem.dims
    out = np.zeros((3, nx, ny, nz))
    for di in (0, 1):
        for dj in (0, 1):
            for dk in (0, 1):
                out += u[:, di : nx + di, dj : ny + dj, dk : nz + dk]
    return out / 8.0


def fit_normalization(problems: Iterable[Problem], cfg: PreprocConfig) -> PreprocConfig:
    """Fit force_norm (and stress_norm when 'pde' is requested) on a training set.

    Each constant is the arithmetic mean over samples of the max-abs entry of
    the relevant raw tensor; zero-force samples contribute zeros to the mean.
    An all-zero constant is an error.
    """
    problems = list(problems)
    if not problems:
        raise NormalizationError("cannot fit normalization on an empty training set")
    force_peaks = [float(np.max(np.abs(p.forces))) for p in problems]
    force_norm = float(np.mean(force_peaks))
    if force_norm <= 0:
        raise NormalizationError("all training forces are zero; force_norm undefined")
    stress_norm = cfg.stress_norm
    if "pde" in cfg.kinds:
        peaks = [
            float(np.max(np.abs(_pde_raw(p, cfg.pde_output, cfg.solve_tol))))
            for p in problems
        ]
        stress_norm = float(np.mean(peaks))
        if stress_norm <= 0:
            raise NormalizationError("all PDE-preprocessing outputs are zero; stress_norm undefined")
    return replace(cfg, force_norm=force_norm, stress_norm=stress_norm)


def trivial_preprocess(problem: Problem, cfg: PreprocConfig) -> InputTensor:
    """7-channel tensor [dirichlet(3), forces(3)/force_norm, design(1)]."""
    if cfg.force_norm is None:
        raise NotFittedError("force_norm is not fitted; call fit_normalization first")
    channels = np.concatenate(
        [
            problem.dirichlet.astype(np.float64),
            problem.forces.astype(np.float64) / cfg.force_norm,
            problem.design.astype(np.float64),
        ]
    )
    return InputTensor(channels=channels, channel_tags=TRIVIAL_TAGS)


def pde_preprocess(problem: Problem, cfg: PreprocConfig) -> InputTensor:
    """Initial-solve stress/displacement channels divided by stress_norm."""
    if cfg.stress_norm is None:
        raise NotFittedError("stress_norm is not fitted; call fit_normalization first")
    raw = _pde_raw(problem, cfg.pde_output, cfg.solve_tol)
    return InputTensor(channels=raw / cfg.stress_norm, channel_tags=_PDE_TAGS[cfg.pde_output])


def concat(*tensors: InputTensor) -> InputTensor:
    """Channel-wise concatenation in argument order; spatial dims must agree."""
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    spatial = tensors[0].channels.shape[1:]
    for t in tensors[1:]:
        if t.channels.shape[1:] != spatial:
            raise ShapeError(
                f"spatial dims differ: {t.channels.shape[1:]} vs {spatial}"
            )
    return InputTensor(
        channels=np.concatenate([t.channels for t in tensors]),
        channel_tags=tuple(tag for t in tensors for tag in t.channel_tags),
    )


def preprocess(problem: Problem, cfg: PreprocConfig) -> InputTensor:
    """Build and concatenate all kinds requested by the config, in order."""
    parts = []
    for kind in cfg.kinds:
        if kind == "trivial":
            parts.append(trivial_preprocess(problem, cfg))
        elif kind == "pde":
            parts.append(pde_preprocess(problem, cfg))
        else:
            parts.append(convex_hull_preprocess(problem))
    return concat(*parts)


# ---------------------------------------------------------------------------
# Convex hull channel. All predicates run on doubled integer indices
# (voxel center i -> 2i + 1), so every test below is exact integer
# arithmetic; convexity is affine-invariant, so membership in index space
# equals membership in physical coordinates for any voxel size.
# ---------------------------------------------------------------------------


def _affine_basis(points: np.ndarray):
    """Greedy integer basis of the point set's affine span.

    Returns (p0, basis_vectors) where len(basis_vectors) is the affine rank.
    """
    p0 = points[0]
    basis = []
    for q in points[1:]:
        v = q - p0
        if not v.any():
            continue
        if len(basis) == 0:
            basis.append(v)
        elif len(basis) == 1:
            if np.cross(basis[0], v).any():
                basis.append(v)
        elif len(basis) == 2:
            if int(np.dot(np.cross(basis[0], basis[1]), v)) != 0:
                basis.append(v)
                break
    return p0, basis


def _hull_rank1(points, queries, p0, direction):
    t = (points - p0) @ direction
    q_t = (queries - p0) @ direction
    on_line = np.all(np.cross(queries - p0, direction) == 0, axis=1)
    return on_line & (q_t >= t.min()) & (q_t <= t.max())


def _hull_2d(points2d: np.ndarray) -> np.ndarray:
    """Monotone-chain hull of integer 2D points, counterclockwise, no duplicates."""
    pts = sorted({(int(x), int(y)) for x, y in points2d})
    if len(pts) <= 2:
        return np.asarray(pts, dtype=np.int64)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.asarray(lower[:-1] + upper[:-1], dtype=np.int64)


def _hull_rank2(points, queries, p0, basis):
    normal = np.cross(basis[0], basis[1])
    in_plane = (queries - p0) @ normal == 0
    drop = int(np.argmax(np.abs(normal)))
    keep = [a for a in range(3) if a != drop]
    hull2d = _hull_2d(points[:, keep])
    q2d = queries[:, keep]
    inside = in_plane.copy()
    if len(hull2d) == 1:
        inside &= np.all(q2d == hull2d[0], axis=1)
        return inside
    if len(hull2d) == 2:
        a, b = hull2d
        d = b - a
        cr = (q2d[:, 0] - a[0]) * d[1] - (q2d[:, 1] - a[1]) * d[0]
        t = (q2d - a) @ d
        return inside & (cr == 0) & (t >= 0) & (t <= d @ d)
    for k in range(len(hull2d)):
        a = hull2d[k]
        b = hull2d[(k + 1) % len(hull2d)]
        d = b - a
        # left-of-edge test on the ccw hull, boundary included
        cr = d[0] * (q2d[:, 1] - a[1]) - d[1] * (q2d[:, 0] - a[0])
        inside &= cr >= 0
    return inside


def _hull_rank3(points, queries):
    from scipy.spatial import ConvexHull

    hull = ConvexHull(points.astype(np.float64))
    vertices = points[hull.vertices]
    centroid_n = vertices.sum(axis=0)  # centroid * n_vertices, kept integer
    n_vert = len(vertices)
    inside = np.ones(len(queries), dtype=bool)
    for simplex in hull.simplices:
        a, b, c = points[simplex]
        normal = np.cross(b - a, c - a)
        # orient outward: the vertex centroid is strictly interior
        if int(normal @ (n_vert * a - centroid_n)) < 0:
            normal = -normal
        inside &= (queries - a) @ normal <= 0
    return inside


def convex_hull_preprocess(problem: Problem) -> InputTensor:
    """Binary channel: voxel centers inside the hull of all flagged voxel centers.

    Flagged means carrying any Dirichlet constraint or any nonzero force.
    Membership is inclusive of the hull boundary and, by construction,
    invariant to the force magnitudes and directions.
    """
    flagged = problem.dirichlet_mask() | problem.load_mask()
    if not flagged.any():
        raise TopovoxError("convex hull needs at least one constrained or loaded voxel")
    points = 2 * np.argwhere(flagged).astype(np.int64) + 1

    nx, ny, nz = problem.dims
    grid = np.indices((nx, ny, nz)).reshape(3, -1).T.astype(np.int64)
    queries = 2 * grid + 1

    p0, basis = _affine_basis(points)
    if len(basis) == 0:
        inside = np.all(queries == p0, axis=1)
    elif len(basis) == 1:
        inside = _hull_rank1(points, queries, p0, basis[0])
    elif len(basis) == 2:
        inside = _hull_rank2(points, queries, p0, basis)
    else:
        inside = _hull_rank3(points, queries)
    channel = inside.reshape(problem.dims).astype(np.float64)[None]
    return InputTensor(channels=channel, channel_tags=("convex_hull",))
