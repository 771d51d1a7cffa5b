"""Bit-exact on-disk sample format.

One directory per sample: a ``meta.json`` with dims, voxel sizes, material
constants and a tensor manifest (dtype, shape, CRC-32), plus one raw binary
file per tensor. Raw payloads are little-endian, C-contiguous over
[C, nx, ny, nz] with z fastest: float32 for forces and densities, uint8 for
Dirichlet flags, int8 for the design tensor.

meta.json carries the material/grid scalars twice: once in mm/GPa/MPa for
human consumption and interop, and once in SI float64, which is what the
reader consumes. Re-serializing the SI numbers through JSON round-trips
exactly, so read(write(x)) == x bit for bit.
"""
from __future__ import annotations

import json
import zlib
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import ChecksumError, ManifestError, TruncatedTensorError, VersionError
from .grid import Material, Problem

FORMAT_VERSION = 1

_DTYPES = {
    "float32": np.dtype("<f4"),
    "uint8": np.dtype("u1"),
    "int8": np.dtype("i1"),
}


def _crc32(buf: bytes) -> int:
    return zlib.crc32(buf) & 0xFFFFFFFF


def _write_raw(path: Path, array: np.ndarray, dtype_name: str) -> Dict:
    data = np.ascontiguousarray(array, dtype=_DTYPES[dtype_name])
    buf = data.tobytes()
    path.write_bytes(buf)
    return {
        "file": path.name,
        "dtype": dtype_name,
        "shape": list(data.shape),
        "crc32": _crc32(buf),
    }


def _read_raw(directory: Path, name: str, entry: Dict) -> np.ndarray:
    for key in ("file", "dtype", "shape", "crc32"):
        if key not in entry:
            raise ManifestError(f"tensor '{name}' manifest entry missing '{key}'")
    dtype = _DTYPES.get(entry["dtype"])
    if dtype is None:
        raise ManifestError(f"tensor '{name}' has unknown dtype '{entry['dtype']}'")
    shape = tuple(int(s) for s in entry["shape"])
    path = directory / entry["file"]
    if not path.exists():
        raise TruncatedTensorError(f"tensor '{name}' file {path.name} is missing")
    buf = path.read_bytes()
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(buf) != expected:
        raise TruncatedTensorError(
            f"tensor '{name}': expected {expected} bytes, found {len(buf)}"
        )
    if _crc32(buf) != int(entry["crc32"]):
        raise ChecksumError(f"tensor '{name}': checksum mismatch")
    return np.frombuffer(buf, dtype=dtype).reshape(shape)


def _dump_meta(path: Path, meta: Dict) -> None:
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _load_meta(directory: Path) -> Dict:
    path = directory / "meta.json"
    if not path.exists():
        raise ManifestError(f"no meta.json in {directory}")
    try:
        meta = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"meta.json is not valid JSON: {exc}") from exc
    version = meta.get("version")
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported format version {version!r}, expected {FORMAT_VERSION}")
    return meta


def write_sample(path, problem: Problem, gt: Optional[np.ndarray] = None) -> None:
    """Write one problem (and optionally its ground-truth density) to a directory."""
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    m = problem.material
    tensors = {
        "dirichlet": _write_raw(directory / "dirichlet.u8", problem.dirichlet, "uint8"),
        "forces": _write_raw(directory / "forces.f32", problem.forces, "float32"),
        "design": _write_raw(directory / "design.i8", problem.design, "int8"),
    }
    if gt is not None:
        gt = np.asarray(gt)
        if gt.shape != problem.dims:
            raise ManifestError(f"gt density shape {gt.shape} does not match dims {problem.dims}")
        tensors["density"] = _write_raw(directory / "density.f32", gt, "float32")
    meta = {
        "kind": "sample",
        "version": FORMAT_VERSION,
        "dims": list(problem.dims),
        "voxel_size_mm": [s * 1e3 for s in problem.voxel_size],
        "voxel_size_m": list(problem.voxel_size),
        "material": {
            "young_modulus_gpa": m.young_modulus / 1e9,
            "young_modulus_pa": m.young_modulus,
            "poisson_ratio": m.poisson_ratio,
            "yield_stress_mpa": m.yield_stress / 1e6,
            "yield_stress_pa": m.yield_stress,
            "penalization_p": m.penalization_p,
            "rho_min": m.rho_min,
        },
        "volume_fraction_max": problem.volume_fraction_max,
        "tensors": tensors,
    }
    _dump_meta(directory / "meta.json", meta)


def read_sample(path) -> Tuple[Problem, Optional[np.ndarray]]:
    """Read a sample directory back into (Problem, gt density or None)."""
    directory = Path(path)
    meta = _load_meta(directory)
    if meta.get("kind") != "sample":
        raise ManifestError(f"expected kind 'sample', got {meta.get('kind')!r}")
    try:
        mm = meta["material"]
        material = Material(
            young_modulus=float(mm["young_modulus_pa"]),
            poisson_ratio=float(mm["poisson_ratio"]),
            yield_stress=float(mm["yield_stress_pa"]),
            penalization_p=float(mm["penalization_p"]),
            rho_min=float(mm["rho_min"]),
        )
        dims = tuple(int(d) for d in meta["dims"])
        voxel_size = tuple(float(s) for s in meta["voxel_size_m"])
        vmax = float(meta["volume_fraction_max"])
        manifest = meta["tensors"]
    except KeyError as exc:
        raise ManifestError(f"meta.json missing field {exc}") from exc

    problem = Problem(
        dims=dims,
        voxel_size=voxel_size,
        material=material,
        dirichlet=_read_raw(directory, "dirichlet", manifest["dirichlet"]),
        forces=_read_raw(directory, "forces", manifest["forces"]),
        design=_read_raw(directory, "design", manifest["design"]),
        volume_fraction_max=vmax,
    )
    gt = None
    if "density" in manifest:
        gt = _read_raw(directory, "density", manifest["density"])
    return problem, gt


def write_tensor_dir(
    path,
    array: np.ndarray,
    kind: str = "tensor",
    channel_tags: Optional[Sequence[str]] = None,
    extra: Optional[Dict] = None,
) -> None:
    """Write a standalone float32 tensor (e.g. a preprocessed input or a
    predicted density) in the same manifest-plus-raw layout as samples."""
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    array = np.asarray(array)
    entry = _write_raw(directory / "tensor.f32", array, "float32")
    meta = {
        "kind": kind,
        "version": FORMAT_VERSION,
        "shape": list(array.shape),
        "tensors": {"tensor": entry},
    }
    if channel_tags is not None:
        if len(channel_tags) != array.shape[0]:
            raise ManifestError(
                f"{len(channel_tags)} channel tags for {array.shape[0]} channels"
            )
        meta["channel_tags"] = list(channel_tags)
    if extra:
        meta.update(extra)
    _dump_meta(directory / "meta.json", meta)


def read_tensor_dir(path) -> Tuple[np.ndarray, Dict]:
    """Read a tensor directory; returns (array, meta)."""
    directory = Path(path)
    meta = _load_meta(directory)
    manifest = meta.get("tensors", {})
    if "tensor" not in manifest:
        raise ManifestError(f"no 'tensor' entry in manifest at {directory}")
    return _read_raw(directory, "tensor", manifest["tensor"]), meta
