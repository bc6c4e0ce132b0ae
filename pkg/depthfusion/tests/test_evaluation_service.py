import math

import numpy as np
import pytest

from models.metrics import DepthMetrics
from models.pipeline_config import EvaluationConfig
from models.pose import Pose
from models.raster import ScalarMap
from services.evaluation_service import EvaluationService
from services.oracle_service import OracleService
from utils.exceptions import InsufficientFramesError, NoValidPixelsError


def random_maps(seed):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(1.0, 50.0, (16, 16))
    pred = gt * rng.uniform(0.7, 1.3, (16, 16))
    gt[rng.random((16, 16)) < 0.1] = np.nan
    pred[rng.random((16, 16)) < 0.1] = np.nan
    return pred, gt


def reference_abs_rel(pred, gt, trim=0.9):
    errors = []
    for p, g in zip(pred.ravel(), gt.ravel()):
        if math.isfinite(p) and math.isfinite(g) and p > 0 and g > 0:
            errors.append(abs(p - g) / g)
    errors.sort()
    keep = math.ceil(trim * len(errors))
    return sum(errors[:keep]) / keep


def reference_delta(pred, gt, threshold=1.25):
    hits = total = 0
    for p, g in zip(pred.ravel(), gt.ravel()):
        if math.isfinite(p) and math.isfinite(g) and p > 0 and g > 0:
            total += 1
            hits += max(p / g, g / p) < threshold
    return hits / total


def test_abs_rel_and_delta_match_reference():
    for seed in range(20):
        pred, gt = random_maps(seed)
        assert EvaluationService.abs_rel(pred, gt) == pytest.approx(reference_abs_rel(pred, gt), abs=1e-12)
        assert EvaluationService.delta_accuracy(pred, gt) == pytest.approx(reference_delta(pred, gt), abs=1e-12)


def test_accepts_scalar_maps():
    pred, gt = random_maps(3)
    expected = reference_abs_rel(pred, gt)
    # float32 storage
    assert EvaluationService.abs_rel(ScalarMap(pred), ScalarMap(gt)) == pytest.approx(expected, rel=1e-6)


def test_perfect_prediction():
    gt = np.full((4, 4), 10.0)
    metrics = EvaluationService.depth_metrics(gt, gt)
    assert metrics.abs_rel == 0.0
    assert metrics.delta1 == metrics.delta2 == metrics.delta3 == 1.0
    assert metrics.count == 16


def test_delta_threshold_is_strict():
    assert EvaluationService.delta_accuracy(np.array([1.25]), np.array([1.0])) == 0.0
    assert EvaluationService.delta_accuracy(np.array([1.24]), np.array([1.0])) == 1.0


def test_trimmed_mean_keeps_the_lowest_errors():
    errors = np.arange(10, dtype=np.float64)
    assert EvaluationService.trimmed_mean(errors, 0.9) == pytest.approx(4.0)
    assert EvaluationService.trimmed_mean(errors, 1.0) == pytest.approx(4.5)


def test_no_valid_pixels():
    with pytest.raises(NoValidPixelsError):
        EvaluationService.abs_rel(np.full((2, 2), np.nan), np.ones((2, 2)))


def test_windows_are_half_open():
    gt = np.array([10.0, 20.0, 30.0])
    pred = gt.copy()
    cfg = EvaluationConfig()
    near, far = EvaluationService.near_far_split(pred, gt, cfg)
    assert near.count == 1
    assert far.count == 2


def test_window_counts_partition_the_valid_pixels():
    pred, gt = random_maps(7)
    gt = gt * 1.5
    cfg = EvaluationConfig(near_window=(0.0, 20.0), far_window=(20.0, math.inf))
    near, far = EvaluationService.near_far_split(pred, gt, cfg)
    everything = EvaluationService.depth_metrics(pred, gt, cfg=cfg)
    assert near.count + far.count == everything.count


def test_tae_of_a_static_sequence_is_zero(tiny_intrinsics, rng):
    depth = ScalarMap(rng.uniform(2.0, 20.0, (16, 16)))
    result = EvaluationService.tae([depth] * 4, [Pose.identity()] * 3, tiny_intrinsics)
    assert result.tae == 0.0
    assert result.pair_count == 3


def test_tae_ignores_a_global_bias(tiny_intrinsics, rng):
    depth = ScalarMap(1.1 * rng.uniform(2.0, 20.0, (16, 16)))
    result = EvaluationService.tae([depth] * 3, [Pose.identity()] * 2, tiny_intrinsics)
    assert result.tae == 0.0


def test_tae_needs_three_frames(tiny_intrinsics):
    depth = ScalarMap(np.ones((16, 16)))
    with pytest.raises(InsufficientFramesError):
        EvaluationService.tae([depth, depth], [Pose.identity()], tiny_intrinsics)
    with pytest.raises(InsufficientFramesError):
        EvaluationService.tae([depth] * 3, [Pose.identity()], tiny_intrinsics)


def test_tae_matches_a_brute_force_pair_average(tiny_intrinsics, rng):
    depths = [ScalarMap(rng.uniform(5.0, 10.0, (16, 16))) for _ in range(3)]
    poses = [Pose.identity()] * 2
    result = EvaluationService.tae(depths, poses, tiny_intrinsics)

    pairs = []
    for a, b in zip(depths, depths[1:]):
        forward = np.mean(np.abs(a.values.astype(np.float64) - b.values) / b.values)
        backward = np.mean(np.abs(b.values.astype(np.float64) - a.values) / a.values)
        pairs.append(100.0 * 0.5 * (forward + backward))
    assert result.tae == pytest.approx(np.mean(pairs), abs=1e-12)


def test_tae_of_oracle_ground_truth_is_small(scene):
    depths = [ScalarMap(OracleService.render_frame(scene, k).depth) for k in range(scene.frame_count)]
    poses = [OracleService.relative_pose(scene, k) for k in range(1, scene.frame_count)]
    result = EvaluationService.tae(depths, poses, scene.intrinsics)
    assert result.pair_count == scene.frame_count - 1
    assert result.tae < 5.0


def test_evaluate_sequence_tables(scene):
    gts = [ScalarMap(OracleService.render_frame(scene, k).depth) for k in range(scene.frame_count)]
    preds = [None] + gts[1:]
    report = EvaluationService.evaluate_sequence(preds, gts, None, scene.intrinsics)

    assert report['frames'][0] is None
    assert isinstance(report['all'], DepthMetrics)
    assert report['all'].abs_rel == 0.0
    assert report['near'].count + report['far'].count == report['all'].count
    assert report['tae'] is None
