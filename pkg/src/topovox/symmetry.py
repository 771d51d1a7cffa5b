"""Finite grid symmetries and the group-averaging equivariance wrapper.

Group elements are signed permutation matrices acting about the grid center,
so scalar fields transform by pure index permutation (transpose + axis flips,
no interpolation) and vector fields additionally mix their channels through
the rotation matrix. Applying an element and then its inverse is a bitwise
identity.

The wrapper turns any predictor into an exactly group-equivariant one by
averaging the inverse-transformed predictions over all transformed inputs;
equivariance holds up to float summation order only.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations, product
from typing import Callable, Sequence, Tuple

import numpy as np

from .errors import GroupActionError, PredictorError
from .grid import Problem

_AXES = "xyz"


@dataclass(frozen=True, eq=False)
class GroupElement:
    """One rigid grid symmetry: a 3x3 signed permutation matrix plus a label."""

    rotation: np.ndarray
    name: str

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.int64)
        if r.shape != (3, 3) or not np.all(np.isin(r, (-1, 0, 1))):
            raise ValueError("rotation must be a 3x3 matrix with entries in {-1, 0, 1}")
        if np.any(np.count_nonzero(r, axis=0) != 1) or np.any(np.count_nonzero(r, axis=1) != 1):
            raise ValueError("rotation must have exactly one nonzero per row and column")
        r.setflags(write=False)
        object.__setattr__(self, "rotation", r)

    def __eq__(self, other):
        if not isinstance(other, GroupElement):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation)

    def __hash__(self):
        return hash(self.rotation.tobytes())

    @property
    def axis_map(self) -> Tuple[Tuple[int, int], ...]:
        """Per output axis r: (source axis, sign) such that out_r = sign * in_src."""
        out = []
        for r in range(3):
            c = int(np.nonzero(self.rotation[r])[0][0])
            out.append((c, int(self.rotation[r, c])))
        return tuple(out)


def _element_name(rotation: np.ndarray) -> str:
    parts = []
    for row in rotation:
        c = int(np.nonzero(row)[0][0])
        parts.append(("-" if row[c] < 0 else "+") + _AXES[c])
    return "".join(parts)


def _make(rotation, name=None) -> GroupElement:
    r = np.asarray(rotation, dtype=np.int64)
    return GroupElement(rotation=r, name=name or _element_name(r))


class SymmetryGroup:
    """A closed set of GroupElements with composition and inverse tables."""

    def __init__(self, elements: Sequence[GroupElement], name: str):
        self.name = name
        self.elements: Tuple[GroupElement, ...] = tuple(elements)
        index = {g: i for i, g in enumerate(self.elements)}
        if len(index) != len(self.elements):
            raise ValueError("duplicate group elements")
        n = len(self.elements)
        self.compose_table = np.empty((n, n), dtype=np.int64)
        self.inverse_table = np.empty(n, dtype=np.int64)
        for i, g in enumerate(self.elements):
            for j, h in enumerate(self.elements):
                prod_ = _make(g.rotation @ h.rotation)
                if prod_ not in index:
                    raise ValueError(f"group not closed: {g.name} * {h.name}")
                self.compose_table[i, j] = index[prod_]
            inv = _make(g.rotation.T)
            if inv not in index:
                raise ValueError(f"missing inverse of {g.name}")
            self.inverse_table[i] = index[inv]
        self._index = index

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    @property
    def identity(self) -> GroupElement:
        return self.elements[0]

    def compose(self, g: GroupElement, h: GroupElement) -> GroupElement:
        return self.elements[self.compose_table[self._index[g], self._index[h]]]

    def inverse(self, g: GroupElement) -> GroupElement:
        return self.elements[self.inverse_table[self._index[g]]]


def _d4_elements() -> Tuple[GroupElement, ...]:
    i2 = np.eye(3, dtype=np.int64)
    rz90 = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1]], dtype=np.int64)
    mx = np.diag([-1, 1, 1]).astype(np.int64)
    my = np.diag([1, -1, 1]).astype(np.int64)
    mxy = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 1]], dtype=np.int64)
    myx = np.array([[0, -1, 0], [-1, 0, 0], [0, 0, 1]], dtype=np.int64)
    return (
        _make(i2, "id"),
        _make(rz90, "rz90"),
        _make(rz90 @ rz90, "rz180"),
        _make(rz90 @ rz90 @ rz90, "rz270"),
        _make(mx, "mx"),
        _make(my, "my"),
        _make(mxy, "mxy"),
        _make(myx, "myx"),
    )


def _oh_elements() -> Tuple[GroupElement, ...]:
    elements = []
    for perm in sorted(permutations(range(3))):
        for signs in product((1, -1), repeat=3):
            r = np.zeros((3, 3), dtype=np.int64)
            for row, (col, sign) in enumerate(zip(perm, signs)):
                r[row, col] = sign
            elements.append(_make(r))
    # identity (the all-positive identity permutation) sorts first already
    return tuple(elements)


def group(kind: str) -> SymmetryGroup:
    """Build a named symmetry group: 'd4' (8 elements, z-axis fixed) or
    'oh' (all 48 signed permutations)."""
    key = kind.lower().replace("_", "")
    if key == "d4":
        return SymmetryGroup(_d4_elements(), "d4")
    if key == "oh":
        return SymmetryGroup(_oh_elements(), "oh")
    raise ValueError(f"unknown group kind {kind!r}; expected 'd4' or 'oh'")


def trivial_group() -> SymmetryGroup:
    """The one-element group; wrapping with it reproduces the raw predictor."""
    return SymmetryGroup((_make(np.eye(3, dtype=np.int64), "id"),), "trivial")


def _spatial_op(g: GroupElement, shape: Tuple[int, ...]):
    """Validate dims for g and return (transpose axes, flip axes)."""
    axes = []
    flips = []
    for r, (c, sign) in enumerate(g.axis_map):
        if shape[r] != shape[c]:
            raise GroupActionError(
                f"element {g.name} maps axis {c} onto axis {r} but dims "
                f"{shape[c]} != {shape[r]}"
            )
        axes.append(c)
        if sign < 0:
            flips.append(r)
    return axes, flips


def act_scalar(g: GroupElement, values: np.ndarray) -> np.ndarray:
    """Move voxel (or node) values to their rotated positions; pure permutation.

    The pivot is the grid center, so negated axes become index reversals and
    odd and even dims both stay lattice-aligned.
    """
    values = np.asarray(values)
    if values.ndim != 3:
        raise GroupActionError(f"scalar field must be 3D, got shape {values.shape}")
    axes, flips = _spatial_op(g, values.shape)
    out = np.transpose(values, axes)
    if flips:
        out = np.flip(out, axis=flips)
    return np.ascontiguousarray(out)


def act_vector(g: GroupElement, values: np.ndarray) -> np.ndarray:
    """Rotate a vector field [3, nx, ny, nz]: spatial permutation per channel,
    then channel mixing v' = R v (exact: the channels permute with signs)."""
    values = np.asarray(values)
    if values.ndim != 4 or values.shape[0] != 3:
        raise GroupActionError(f"vector field must be [3, nx, ny, nz], got {values.shape}")
    out = np.empty_like(values)
    for r, (c, sign) in enumerate(g.axis_map):
        moved = act_scalar(g, values[c])
        out[r] = -moved if sign < 0 else moved
    return out


def transform_problem(g: GroupElement, problem: Problem) -> Problem:
    """Apply a symmetry to a whole problem.

    Forces rotate as a vector field; the design tensor moves as a scalar
    field; Dirichlet channels permute spatially and across channels by |R|
    with signs dropped, since a reflected "fixed in x" is still "fixed in x".
    """
    for r, (c, _) in enumerate(g.axis_map):
        if problem.dims[r] != problem.dims[c]:
            raise GroupActionError(
                f"element {g.name} requires dims[{r}] == dims[{c}], got {problem.dims}"
            )
        if problem.voxel_size[r] != problem.voxel_size[c]:
            raise GroupActionError(
                f"element {g.name} requires voxel_size[{r}] == voxel_size[{c}], "
                f"got {problem.voxel_size}"
            )
    dirichlet = np.empty_like(problem.dirichlet)
    for r, (c, _) in enumerate(g.axis_map):
        dirichlet[r] = act_scalar(g, problem.dirichlet[c])
    forces = act_vector(g, problem.forces.astype(np.float32))
    design = act_scalar(g, problem.design[0])[None]
    return Problem(
        dims=problem.dims,
        voxel_size=problem.voxel_size,
        material=problem.material,
        dirichlet=dirichlet,
        forces=forces,
        design=design,
        volume_fraction_max=problem.volume_fraction_max,
    )


def wrap(
    predictor: Callable[..., np.ndarray],
    group_: SymmetryGroup,
    preprocess: Callable[[Problem], object],
) -> Callable[[Problem], np.ndarray]:
    """Group-averaging equivariance wrapper.

    Returns a predictor mapping a problem x to
    (1/|G|) sum_g act_scalar(g^-1, predictor(preprocess(transform(g, x)))),
    which is exactly G-equivariant by construction (up to float summation
    order). Inner predictor failures re-raise tagged with the group element.
    """

    def wrapped(problem: Problem) -> np.ndarray:
        outs = []
        for g in group_.elements:
            try:
                pred = np.asarray(predictor(preprocess(transform_problem(g, problem))))
            except Exception as exc:
                raise PredictorError(f"inner predictor failed for element {g.name}: {exc}") from exc
            if pred.shape != problem.dims:
                raise PredictorError(
                    f"inner predictor returned shape {pred.shape} for element {g.name}, "
                    f"expected {problem.dims}"
                )
            outs.append(act_scalar(group_.inverse(g), pred.astype(np.float64)))
        return np.sum(np.stack(outs), axis=0) / len(outs)

    return wrapped
