"""Metric checks: voxel-tally IoU oracle, hand BFS connectivity, crafted
overstressed / disconnected / sturdy structures, and hand-computed
sample-efficiency aggregates."""
import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topovox import (
    DESIGN_FREE,
    DESIGN_SOLID,
    EvaluationError,
    SECurve,
    auc_150,
    bce_weight,
    check_fail,
    connectivity_ok,
    fail_percentage,
    final_score,
    iou,
    make_problem,
    weighted_bce,
)
from topovox.evaluate import FailReport
from conftest import TEST_MATERIAL, random_problem


def oracle_iou(pred, gt, design):
    tp = fn = fp = 0
    for idx in np.ndindex(pred.shape):
        if design[idx] != DESIGN_FREE:
            continue
        p, g = bool(pred[idx]), bool(gt[idx])
        tp += p and g
        fn += (not p) and g
        fp += p and (not g)
    return 1.0 if tp + fn + fp == 0 else tp / (tp + fn + fp)


def oracle_connected(mask, problem):
    """Breadth-first search from constrained solid voxels, 6-connectivity."""
    solid = np.asarray(mask) != 0
    seeds = np.argwhere(solid & problem.dirichlet_mask())
    reached = np.zeros(problem.dims, dtype=bool)
    queue = deque(map(tuple, seeds))
    for s in queue:
        reached[s] = True
    while queue:
        i, j, k = queue.popleft()
        for di, dj, dk in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
            n = (i + di, j + dj, k + dk)
            if all(0 <= n[a] < problem.dims[a] for a in range(3)):
                if solid[n] and not reached[n]:
                    reached[n] = True
                    queue.append(n)
    unreached = int(np.sum(problem.load_mask() & ~reached))
    return unreached == 0, unreached


class TestIoU:
    def test_identical_nonempty(self, rng):
        mask = (rng.random((4, 4, 4)) < 0.5).astype(np.uint8)
        mask[0, 0, 0] = 1
        design = np.full((4, 4, 4), DESIGN_FREE, dtype=np.int8)
        assert iou(mask, mask, design) == 1.0

    def test_disjoint_nonempty(self):
        a = np.zeros((3, 3, 3), dtype=np.uint8)
        b = np.zeros((3, 3, 3), dtype=np.uint8)
        a[0, 0, 0] = 1
        b[2, 2, 2] = 1
        design = np.full((3, 3, 3), DESIGN_FREE, dtype=np.int8)
        assert iou(a, b, design) == 0.0

    def test_empty_empty_is_one(self):
        z = np.zeros((2, 2, 2), dtype=np.uint8)
        design = np.full((2, 2, 2), DESIGN_FREE, dtype=np.int8)
        assert iou(z, z, design) == 1.0

    def test_restricted_to_free_region(self):
        design = np.full((2, 2, 2), DESIGN_SOLID, dtype=np.int8)
        design[0, 0, 0] = DESIGN_FREE
        a = np.ones((2, 2, 2), dtype=np.uint8)
        b = np.ones((2, 2, 2), dtype=np.uint8)
        b[0, 0, 0] = 0  # disagreement only matters on the one free voxel
        assert iou(a, b, design) == 0.0

    def test_matches_brute_force_tally(self, rng):
        design_choices = np.array([DESIGN_FREE, DESIGN_SOLID, 0], dtype=np.int8)
        for _ in range(50):
            pred = (rng.random((5, 5, 5)) < 0.5).astype(np.uint8)
            gt = (rng.random((5, 5, 5)) < 0.5).astype(np.uint8)
            design = rng.choice(design_choices, size=(5, 5, 5))
            assert iou(pred, gt, design) == oracle_iou(pred, gt, design)

    @given(st.integers(0, 2**12 - 1), st.integers(0, 2**12 - 1))
    @settings(deadline=None, max_examples=80)
    def test_symmetry_and_self_identity(self, bits_a, bits_b):
        a = np.array([(bits_a >> i) & 1 for i in range(12)], dtype=np.uint8).reshape(3, 2, 2)
        b = np.array([(bits_b >> i) & 1 for i in range(12)], dtype=np.uint8).reshape(3, 2, 2)
        design = np.full((3, 2, 2), DESIGN_FREE, dtype=np.int8)
        assert iou(a, b, design) == iou(b, a, design)
        assert iou(a, a, design) == 1.0

    def test_monotonic_under_adding_agreed_voxels(self, rng):
        design = np.full((4, 4, 4), DESIGN_FREE, dtype=np.int8)
        for _ in range(20):
            pred = (rng.random((4, 4, 4)) < 0.4).astype(np.uint8)
            gt = (rng.random((4, 4, 4)) < 0.4).astype(np.uint8)
            score = iou(pred, gt, design)
            empty = np.argwhere((pred == 0) & (gt == 0))
            if len(empty) == 0:
                continue
            i, j, k = empty[int(rng.integers(len(empty)))]
            pred2, gt2 = pred.copy(), gt.copy()
            pred2[i, j, k] = gt2[i, j, k] = 1
            assert iou(pred2, gt2, design) >= score


def bar_problem(n=8, load_scale=1.0, thick=False):
    """Straight bar along x: clamp at x=0, load at x=n-1."""
    dims = (n, 3, 3) if thick else (n, 1, 1)
    dirichlet = np.zeros((3,) + dims, dtype=np.uint8)
    dirichlet[:, 0, :, :] = 1
    forces = np.zeros((3,) + dims, dtype=np.float32)
    forces[2, n - 1, dims[1] // 2, dims[2] // 2] = -1e6 * load_scale
    design = np.full((1,) + dims, DESIGN_FREE, dtype=np.int8)
    design[0, 0, :, :] = DESIGN_SOLID
    design[0, n - 1, dims[1] // 2, dims[2] // 2] = DESIGN_SOLID
    return make_problem(dims, (1e-3, 1e-3, 1e-3), TEST_MATERIAL, dirichlet, forces, design)


class TestConnectivity:
    def test_solid_bar_connected(self):
        p = bar_problem()
        mask = np.ones(p.dims, dtype=np.uint8)
        ok, unreached = connectivity_ok(mask, p)
        assert ok and unreached == 0

    def test_isolated_load_voxel(self):
        p = bar_problem()
        mask = np.ones(p.dims, dtype=np.uint8)
        mask[-2, :, :] = 0  # cut the bar just before the load
        ok, unreached = connectivity_ok(mask, p)
        assert not ok and unreached == 1

    def test_void_load_voxel_counts_unreached(self):
        p = bar_problem()
        mask = np.ones(p.dims, dtype=np.uint8)
        mask[-1, 0, 0] = 0
        ok, unreached = connectivity_ok(mask, p)
        assert not ok and unreached == 1

    def test_random_mazes_match_bfs_oracle(self, rng):
        for _ in range(25):
            p = random_problem(rng, (5, 5, 4))
            mask = (rng.random(p.dims) < 0.55).astype(np.uint8)
            got = connectivity_ok(mask, p)
            assert got == oracle_connected(mask, p)


class TestCheckFail:
    def test_sturdy_bar_passes(self):
        p = bar_problem(thick=True, load_scale=1e-4)
        mask = np.ones(p.dims, dtype=np.uint8)
        report = check_fail(mask, p)
        assert not report.failed
        assert report.max_von_mises < 1.1 * TEST_MATERIAL.yield_stress

    def test_overstressed_strut_fails(self):
        # thin 1x1 strut, load far above yield: sigma ~ F/A >> 1.1 * 450 MPa
        p = bar_problem(n=10, load_scale=1e6)
        mask = np.ones(p.dims, dtype=np.uint8)
        report = check_fail(mask, p)
        assert report.failed and report.stress_failed and not report.disconnected
        assert report.max_von_mises > 1.1 * TEST_MATERIAL.yield_stress
        assert report.reason == "overstressed"

    def test_disconnected_load_fails_without_solve(self):
        p = bar_problem()
        mask = np.ones(p.dims, dtype=np.uint8)
        mask[3, :, :] = 0
        report = check_fail(mask, p)
        assert report.failed and report.disconnected and not report.stress_failed
        assert report.unreached_load_voxels == 1
        assert math.isnan(report.max_von_mises)
        assert report.reason == "disconnected"

    def test_infinite_tolerance_never_stress_fails(self):
        p = bar_problem(n=6, load_scale=1e3)
        mask = np.ones(p.dims, dtype=np.uint8)
        report = check_fail(mask, p, tol_factor=float("inf"))
        assert not report.stress_failed and not report.failed

    def test_verdict_invariant_under_d4(self, rng):
        from topovox import act_scalar, group, transform_problem

        dims = (4, 4, 3)
        dirichlet = np.zeros((3,) + dims, dtype=np.uint8)
        dirichlet[:, 0, 0, 0] = 1
        forces = np.zeros((3,) + dims, dtype=np.float32)
        forces[2, 3, 3, 2] = -5e8
        design = np.full((1,) + dims, DESIGN_FREE, dtype=np.int8)
        design[0, 0, 0, 0] = DESIGN_SOLID
        design[0, 3, 3, 2] = DESIGN_SOLID
        p = make_problem(dims, (1e-3, 1e-3, 1e-3), TEST_MATERIAL, dirichlet, forces, design)
        mask = np.zeros(dims, dtype=np.uint8)
        mask[:, 0, 0] = 1  # L-shaped strut, face-connected end to end
        mask[3, :, 0] = 1
        mask[3, 3, :] = 1
        base = check_fail(mask, p, solve_tol=1e-12)
        assert not base.disconnected
        for el in group("d4"):
            tp = transform_problem(el, p)
            t_mask = act_scalar(el, mask)
            report = check_fail(t_mask, tp, solve_tol=1e-12)
            assert report.failed == base.failed, el.name
            assert report.disconnected == base.disconnected
            assert np.isclose(report.max_von_mises, base.max_von_mises, rtol=1e-6)


class TestFailPercentage:
    def _report(self, failed):
        return FailReport(
            stress_failed=failed, max_von_mises=0.0, disconnected=False, unreached_load_voxels=0
        )

    def test_all_ok(self):
        assert fail_percentage([self._report(False)] * 5) == 0.0

    def test_all_failed(self):
        assert fail_percentage([self._report(True)] * 3) == 100.0

    def test_one_of_four(self):
        reports = [self._report(True)] + [self._report(False)] * 3
        assert fail_percentage(reports) == 25.0

    def test_empty_errors(self):
        with pytest.raises(EvaluationError):
            fail_percentage([])


class TestBceWeight:
    def test_balanced(self):
        gt = np.zeros((2, 2, 2), dtype=np.uint8)
        gt[0] = 1
        design = np.full((2, 2, 2), DESIGN_FREE, dtype=np.int8)
        assert bce_weight([gt], [design]) == 1.0

    def test_three_to_one(self):
        gt = np.zeros((4, 2, 2), dtype=np.uint8)
        gt[0] = 1
        design = np.full((4, 2, 2), DESIGN_FREE, dtype=np.int8)
        assert bce_weight([gt], [design]) == 3.0

    def test_counts_free_region_only(self, rng):
        gt = np.ones((3, 3, 3), dtype=np.uint8)
        gt[0, 0, 0] = 0
        design = np.full((3, 3, 3), DESIGN_SOLID, dtype=np.int8)
        design[0, :2, :2] = DESIGN_FREE  # 4 free voxels, one void
        assert bce_weight([gt], [design]) == pytest.approx(1.0 / 3.0)

    def test_degenerate_single_class_errors(self):
        design = np.full((2, 2, 2), DESIGN_FREE, dtype=np.int8)
        with pytest.raises(EvaluationError):
            bce_weight([np.ones((2, 2, 2), dtype=np.uint8)], [design])
        with pytest.raises(EvaluationError):
            bce_weight([np.zeros((2, 2, 2), dtype=np.uint8)], [design])


class TestWeightedBce:
    def test_perfect_prediction_near_zero(self):
        gt = np.zeros((2, 2, 2))
        gt[0] = 1.0
        eps = 1e-7
        pred = np.where(gt == 1.0, 1.0 - eps, eps)
        assert weighted_bce(pred, gt, 2.0) < 1e-5

    def test_half_prediction_is_ln2(self):
        gt = np.zeros((2, 2, 2))
        gt[0] = 1.0
        pred = np.full((2, 2, 2), 0.5)
        assert np.isclose(weighted_bce(pred, gt, 1.0), math.log(2.0), rtol=1e-12)

    def test_matches_scalar_loop(self, rng):
        pred = rng.uniform(0.01, 0.99, (3, 3, 3))
        gt = (rng.random((3, 3, 3)) < 0.4).astype(np.float64)
        design = rng.choice(np.array([DESIGN_FREE, DESIGN_SOLID], dtype=np.int8), size=(3, 3, 3))
        w = 2.5
        total, count = 0.0, 0
        for idx in np.ndindex(pred.shape):
            if design[idx] != DESIGN_FREE:
                continue
            total += -(w * gt[idx] * math.log(pred[idx]) + (1 - gt[idx]) * math.log(1 - pred[idx]))
            count += 1
        assert np.isclose(weighted_bce(pred, gt, w, design), total / count, rtol=1e-12)


def test_train_size_presets():
    from topovox import TRAIN_SIZE_PRESETS

    assert TRAIN_SIZE_PRESETS["long"] == (2, 4, 10, 50, 100, 150, 250, 500, 1000, 1500)
    assert TRAIN_SIZE_PRESETS["short"] == (2, 4, 10, 50, 100, 150)


class TestSECurve:
    def test_sizes_must_increase(self):
        with pytest.raises(ValueError):
            SECurve(((10, 0.5, 1.0), (10, 0.6, 1.0)))

    def test_constant_curve_maps_to_itself(self):
        curve = SECurve(((2, 0.7, 12.0), (10, 0.7, 12.0), (100, 0.7, 12.0), (150, 0.7, 12.0)))
        assert np.isclose(auc_150(curve, "iou"), 0.7, rtol=1e-12)
        assert np.isclose(auc_150(curve, "fail_pct"), 12.0, rtol=1e-12)

    def test_two_point_hand_trapezoid(self):
        # linear in log10(size) from (10, 0.0) to (100, 1.0): the trapezoid is
        # 0.5 * (0.0 + 1.0) * (2 - 1), normalized by the width 1 -> 0.5
        curve = SECurve(((10, 0.0, 0.0), (100, 1.0, 0.0)))
        assert np.isclose(auc_150(curve, "iou"), 0.5, rtol=1e-12)

    def test_uses_only_points_up_to_150(self):
        curve = SECurve(((10, 0.0, 0.0), (100, 1.0, 0.0), (1000, 0.0, 0.0)))
        assert np.isclose(auc_150(curve, "iou"), 0.5, rtol=1e-12)

    def test_too_few_points_error(self):
        curve = SECurve(((200, 0.5, 0.0), (500, 0.6, 0.0)))
        with pytest.raises(EvaluationError):
            auc_150(curve)
        with pytest.raises(EvaluationError):
            auc_150(SECurve(((100, 0.5, 0.0), (200, 0.6, 0.0))))

    def test_final_score_picks_largest_size(self):
        curve = SECurve(((10, 0.1, 50.0), (150, 0.8, 5.0)))
        assert final_score(curve, "iou") == 0.8
        assert final_score(curve, "fail_pct") == 5.0

    def test_final_score_single_point(self):
        assert final_score(SECurve(((42, 0.33, 7.0),)), "iou") == 0.33

    def test_final_score_empty_error(self):
        with pytest.raises(EvaluationError):
            final_score(SECurve(()))
