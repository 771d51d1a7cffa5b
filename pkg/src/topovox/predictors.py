"""Baseline predictors and the file-protocol bridge to external models.

The external protocol is deliberately dumb so any trained model integrates
with zero linking: the input tensor is written to ``<io_dir>/input/`` in the
standard tensor-directory format, the command is invoked once, and the
predictor must write raw little-endian float32 densities (C-order, z fastest)
to ``<io_dir>/output/density.f32`` and exit 0.
"""
from __future__ import annotations

import shlex
import subprocess
from dataclasses import dataclass
from pathlib import Path
import numpy as np

from .errors import ExternalExitError, ExternalTimeoutError, MalformedOutputError
from .grid import Problem
from .io import write_tensor_dir
from .preproc import InputTensor, build_rho_init, convex_hull_preprocess


def baseline_rho_init(problem: Problem) -> np.ndarray:
    """Trivial predictor: the initial density distribution itself."""
    return build_rho_init(problem)


def baseline_hull(problem: Problem) -> np.ndarray:
    """Convex-hull channel reinterpreted as a density field.

    The simplest connected guess: solid inside the hull of all constrained
    and loaded voxels, near-void outside. Independent of force magnitudes.
    """
    channel = convex_hull_preprocess(problem).channels[0]
    return np.where(channel != 0, 1.0, problem.material.rho_min)


@dataclass(frozen=True)
class ExternalPredictorSpec:
    """How to run an out-of-process predictor.

    ``command`` is a shell-style template; the placeholder ``{io_dir}`` is
    substituted in every argument. Invocations on one spec are serialized by
    the caller; distinct specs may run concurrently.
    """

    command: str
    io_dir: str
    timeout: float = 60.0

    def __post_init__(self):
        if not self.command.strip():
            raise ValueError("command must be non-empty")
        if not self.timeout > 0:
            raise ValueError(f"timeout must be > 0, got {self.timeout}")


def run_external(spec: ExternalPredictorSpec, input_tensor: InputTensor) -> np.ndarray:
    """Run one external prediction and read back the density field.

    Raises ExternalTimeoutError, ExternalExitError or MalformedOutputError;
    the three failure modes stay distinct so harnesses can count them apart.
    """
    io_dir = Path(spec.io_dir)
    (io_dir / "output").mkdir(parents=True, exist_ok=True)
    dims = input_tensor.channels.shape[1:]
    write_tensor_dir(
        io_dir / "input",
        input_tensor.channels.astype(np.float32),
        kind="input_tensor",
        channel_tags=input_tensor.channel_tags,
    )
    argv = [arg.format(io_dir=str(io_dir)) for arg in shlex.split(spec.command)]
    try:
        proc = subprocess.run(argv, capture_output=True, timeout=spec.timeout)
    except subprocess.TimeoutExpired as exc:
        raise ExternalTimeoutError(
            f"external predictor exceeded {spec.timeout}s: {spec.command}"
        ) from exc
    if proc.returncode != 0:
        raise ExternalExitError(
            f"external predictor exited with {proc.returncode}: "
            f"{proc.stderr.decode(errors='replace').strip()}"
        )
    out_path = io_dir / "output" / "density.f32"
    if not out_path.exists():
        raise MalformedOutputError(f"external predictor wrote no {out_path.name}")
    buf = out_path.read_bytes()
    expected = int(np.prod(dims)) * 4
    if len(buf) != expected:
        raise MalformedOutputError(
            f"density payload has {len(buf)} bytes, expected {expected} for dims {dims}"
        )
    density = np.frombuffer(buf, dtype="<f4").reshape(dims).astype(np.float64)
    if not np.all((density >= 0.0) & (density <= 1.0)):
        raise MalformedOutputError("external predictor produced densities outside [0, 1]")
    return density
