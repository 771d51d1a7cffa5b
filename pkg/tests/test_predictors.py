"""Baseline predictors and the external file protocol with stub commands."""
import sys
import textwrap

import numpy as np
import pytest

from topovox import (
    DESIGN_FREE,
    ExternalExitError,
    ExternalPredictorSpec,
    ExternalTimeoutError,
    MalformedOutputError,
    act_scalar,
    baseline_hull,
    baseline_rho_init,
    build_rho_init,
    check_fail,
    binarize,
    convex_hull_preprocess,
    group,
    iou,
    make_problem,
    run_external,
    wrap,
)
from topovox.preproc import InputTensor
from conftest import TEST_MATERIAL, cantilever, random_problem


def write_stub(tmp_path, name, body):
    """Create a small python stub predictor script and return its command."""
    script = tmp_path / name
    script.write_text(textwrap.dedent(body))
    return f"{sys.executable} {script} {{io_dir}}"


IDENTITY_STUB = """
    import json, sys
    import numpy as np
    from pathlib import Path
    io_dir = Path(sys.argv[1])
    meta = json.loads((io_dir / "input" / "meta.json").read_text())
    shape = meta["shape"]
    data = np.fromfile(io_dir / "input" / "tensor.f32", dtype="<f4").reshape(shape)
    out = np.clip(np.abs(data[0]), 0.0, 1.0).astype("<f4")
    out.tofile(io_dir / "output" / "density.f32")
"""


class TestBaselines:
    def test_rho_init_all_free_is_solid(self, rng):
        p = random_problem(rng, (3, 3, 3))
        assert np.allclose(baseline_rho_init(p), 1.0)

    def test_rho_init_passes_check_fail_on_sturdy_problem(self):
        p = cantilever((4, 3, 3), load_sign=-1e-4)
        density = baseline_rho_init(p)
        mask = binarize(density, 0.5, p.design)
        report = check_fail(mask, p)
        assert not report.failed

    def test_rho_init_iou_pipeline_smoke(self, rng):
        p = random_problem(rng, (4, 4, 3))
        density = baseline_rho_init(p)
        mask = binarize(density, 0.5, p.design)
        gt = binarize(build_rho_init(p), 0.5, p.design)
        assert iou(mask, gt, p.design) == 1.0

    def test_hull_matches_hull_channel(self, rng):
        p = random_problem(rng, (4, 4, 4))
        density = baseline_hull(p)
        channel = convex_hull_preprocess(p).channels[0]
        assert np.array_equal(density == 1.0, channel == 1.0)
        assert np.all(density[channel == 0.0] == p.material.rho_min)

    def test_hull_contains_loads_and_supports(self, rng):
        for _ in range(5):
            p = random_problem(rng, (5, 4, 4))
            density = baseline_hull(p)
            flagged = p.dirichlet_mask() | p.load_mask()
            assert np.all(density[flagged] == 1.0)

    def test_hull_connects_axis_aligned_and_thick_cases(self):
        from topovox import connectivity_ok

        # axis-aligned two-point hull: a straight solid bar
        p = cantilever((6, 3, 3))
        mask = binarize(baseline_hull(p), 0.5, p.design)
        ok, unreached = connectivity_ok(mask, p)
        assert ok, unreached

    def test_thin_diagonal_hull_is_only_vertex_connected(self):
        # center-membership of a diagonal segment yields a diagonal voxel
        # chain, which 6-connectivity does not accept; documented limitation
        from topovox import connectivity_ok

        dims = (4, 4, 4)
        dirichlet = np.zeros((3,) + dims, dtype=np.uint8)
        dirichlet[:, 0, 0, 0] = 1
        forces = np.zeros((3,) + dims, dtype=np.float32)
        forces[2, 3, 3, 3] = -1.0
        design = np.full((1,) + dims, DESIGN_FREE, dtype=np.int8)
        design[0, 0, 0, 0] = design[0, 3, 3, 3] = 1
        p = make_problem(dims, (1e-3,) * 3, TEST_MATERIAL, dirichlet, forces, design)
        mask = binarize(baseline_hull(p), 0.5, p.design)
        assert np.array_equal(np.argwhere(mask), [[i, i, i] for i in range(4)])
        ok, _ = connectivity_ok(mask, p)
        assert not ok

    def test_hull_force_magnitude_invariance(self, rng):
        p = random_problem(rng, (4, 4, 3))
        forces = np.array(p.forces) * 31.0
        p2 = make_problem(p.dims, p.voxel_size, p.material, p.dirichlet, forces, p.design)
        assert np.array_equal(baseline_hull(p), baseline_hull(p2))

    def test_wrapped_baseline_on_symmetric_problem_is_symmetric(self):
        dims = (5, 5, 3)
        dirichlet = np.zeros((3,) + dims, dtype=np.uint8)
        dirichlet[:, 2, 2, 0] = 1  # center column: D4-invariant
        forces = np.zeros((3,) + dims, dtype=np.float32)
        forces[2, 2, 2, 2] = -1e6
        design = np.full((1,) + dims, DESIGN_FREE, dtype=np.int8)
        design[0, 2, 2, 0] = 1
        design[0, 2, 2, 2] = 1
        p = make_problem(dims, (1e-3, 1e-3, 1e-3), TEST_MATERIAL, dirichlet, forces, design)
        d4 = group("d4")
        wrapped = wrap(lambda problem: baseline_hull(problem), d4, lambda x: x)
        out = wrapped(p)
        for el in d4:
            assert np.array_equal(act_scalar(el, out), out), el.name


class TestExternalProtocol:
    def make_input(self, rng, dims=(3, 3, 2)):
        channels = rng.random((2,) + dims)
        return InputTensor(channels=channels, channel_tags=("a", "b"))

    def test_identity_stub_round_trip(self, rng, tmp_path):
        tensor = self.make_input(rng)
        spec = ExternalPredictorSpec(
            command=write_stub(tmp_path, "identity.py", IDENTITY_STUB),
            io_dir=str(tmp_path / "io"),
            timeout=30.0,
        )
        out = run_external(spec, tensor)
        expected = np.clip(np.abs(tensor.channels[0].astype(np.float32)), 0.0, 1.0)
        assert np.array_equal(out.astype(np.float32), expected)

    def test_wrong_dims_is_malformed(self, rng, tmp_path):
        stub = """
            import sys
            import numpy as np
            from pathlib import Path
            io_dir = Path(sys.argv[1])
            np.zeros(5, dtype="<f4").tofile(io_dir / "output" / "density.f32")
        """
        spec = ExternalPredictorSpec(
            command=write_stub(tmp_path, "short.py", stub),
            io_dir=str(tmp_path / "io"),
        )
        with pytest.raises(MalformedOutputError):
            run_external(spec, self.make_input(rng))

    def test_out_of_range_is_malformed(self, rng, tmp_path):
        stub = """
            import json, sys
            import numpy as np
            from pathlib import Path
            io_dir = Path(sys.argv[1])
            meta = json.loads((io_dir / "input" / "meta.json").read_text())
            n = int(np.prod(meta["shape"][1:]))
            np.full(n, 1.5, dtype="<f4").tofile(io_dir / "output" / "density.f32")
        """
        spec = ExternalPredictorSpec(
            command=write_stub(tmp_path, "range.py", stub),
            io_dir=str(tmp_path / "io"),
        )
        with pytest.raises(MalformedOutputError):
            run_external(spec, self.make_input(rng))

    def test_timeout(self, rng, tmp_path):
        stub = """
            import sys, time
            time.sleep(60)
        """
        spec = ExternalPredictorSpec(
            command=write_stub(tmp_path, "sleepy.py", stub),
            io_dir=str(tmp_path / "io"),
            timeout=1.0,
        )
        with pytest.raises(ExternalTimeoutError):
            run_external(spec, self.make_input(rng))

    def test_nonzero_exit(self, rng, tmp_path):
        stub = """
            import sys
            sys.exit(3)
        """
        spec = ExternalPredictorSpec(
            command=write_stub(tmp_path, "angry.py", stub),
            io_dir=str(tmp_path / "io"),
        )
        with pytest.raises(ExternalExitError):
            run_external(spec, self.make_input(rng))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ExternalPredictorSpec(command="  ", io_dir="x")
        with pytest.raises(ValueError):
            ExternalPredictorSpec(command="run", io_dir="x", timeout=0.0)
