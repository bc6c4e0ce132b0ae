import numpy as np
import pytest
from scipy import ndimage

from models.pipeline_config import SegmentationConfig
from models.raster import RelativeDepthMap, ScalarMap
from models.segments import SegmentLabels
from services.evaluation_service import EvaluationService
from services.oracle_service import OracleService
from services.segmentation_service import EDGE_OFFSETS, SegmentationService


def reference_segment(features, k, min_size):
    """Plain set-merging version of the same predicate, no union-find tricks"""
    height, width = features.shape[:2]
    heads, tails = [], []
    for dr, dc in EDGE_OFFSETS:
        for r in range(height - dr):
            for c in range(max(0, -dc), width - max(dc, 0)):
                heads.append(r * width + c)
                tails.append((r + dr) * width + c + dc)
    heads, tails = np.array(heads), np.array(tails)
    flat = features.reshape(height * width, -1)
    weights = np.linalg.norm(flat[heads] - flat[tails], axis=1)
    edges = sorted(range(len(weights)), key=lambda e: weights[e])

    owner = list(range(height * width))
    members = {i: {i} for i in range(height * width)}
    internal = {i: 0.0 for i in range(height * width)}

    def merge(a, b, w):
        for pixel in members[b]:
            owner[pixel] = a
        members[a] |= members.pop(b)
        internal[a] = w
        del internal[b]

    for e in edges:
        a, b, w = owner[heads[e]], owner[tails[e]], float(weights[e])
        if a != b and w <= min(internal[a] + k / len(members[a]), internal[b] + k / len(members[b])):
            merge(a, b, w)
    for e in edges:
        a, b, w = owner[heads[e]], owner[tails[e]], float(weights[e])
        if a != b and (len(members[a]) < min_size or len(members[b]) < min_size):
            merge(a, b, w)

    raw = np.array(owner).reshape(height, width)
    labels = np.full((height, width), -1)
    count = 0
    for r in range(height):
        for c in range(width):
            if labels[r, c] >= 0:
                continue
            stack = [(r, c)]
            labels[r, c] = count
            while stack:
                y, x = stack.pop()
                for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                    if 0 <= ny < height and 0 <= nx < width and labels[ny, nx] < 0 and raw[ny, nx] == raw[y, x]:
                        labels[ny, nx] = count
                        stack.append((ny, nx))
            count += 1
    return labels


def test_matches_reference_on_random_images():
    rng = np.random.default_rng(0)
    for _ in range(100):
        features = rng.uniform(0.0, 100.0, (16, 16, 3))
        labels = SegmentationService.felzenszwalb_segment(features, k=100.0, min_size=5, sigma=0.0, engine='native')
        assert np.array_equal(labels.values, reference_segment(features, 100.0, 5))


def test_segmentation_is_deterministic(pair):
    first = SegmentationService.segment(pair.image_curr, pair.d_rel_curr)
    second = SegmentationService.segment(pair.image_curr, pair.d_rel_curr)
    assert np.array_equal(first.values, second.values)


def test_segments_are_four_connected(pair):
    labels = SegmentationService.segment(pair.image_curr, pair.d_rel_curr)
    for label in range(labels.count):
        _, components = ndimage.label(labels.values == label)
        assert components == 1


def test_relabel_orders_by_first_occurrence():
    labels = SegmentationService.relabel(np.array([[7, 7, 3], [3, 9, 7]]))
    assert np.array_equal(labels, [[0, 0, 1], [1, 2, 0]])


def test_split_four_connected_separates_diagonal_touch():
    labels = SegmentationService.split_four_connected(np.array([[1, 0], [0, 1]]))
    assert np.array_equal(labels, [[0, 1], [2, 3]])


def test_grid_edges_count():
    heads, tails = SegmentationService.grid_edges(3, 4)
    # 3 * 3 horizontal, 2 * 4 vertical, 2 * 3 for each diagonal
    assert heads.size == tails.size == 9 + 8 + 6 + 6


def test_single_channel_image_has_no_colour():
    lab = SegmentationService.lab_convert(np.full((4, 4), 128, dtype=np.uint8))
    assert np.all(lab[..., 1:] == 0.0)
    assert np.allclose(lab[..., 0], 100.0 * 128 / 255)


def test_depth_features_span_zero_to_hundred():
    d_rel = RelativeDepthMap(np.linspace(1.0, 5.0, 16).reshape(4, 4))
    features = SegmentationService.depth_features(np.zeros((4, 4, 3)), d_rel, 1.0)
    assert features.shape == (4, 4, 4)
    assert features[..., 3].min() == pytest.approx(0.0)
    assert features[..., 3].max() == pytest.approx(100.0)


def test_skimage_engine_gives_valid_labels(pair):
    cfg = SegmentationConfig(engine='skimage')
    labels = SegmentationService.segment(pair.image_curr, pair.d_rel_curr, cfg)
    assert labels.values.min() == 0
    assert np.array_equal(np.unique(labels.values), np.arange(labels.count))


def test_default_engine_is_silent_on_four_channel_features(pair, recwarn):
    assert SegmentationConfig().engine == 'skimage'
    SegmentationService.segment(pair.image_curr, pair.d_rel_curr)
    assert not [w for w in recwarn if 'third dimension' in str(w.message)]


def test_native_engine_segments_the_oracle_frame(pair):
    cfg = SegmentationConfig(engine='native')
    labels = SegmentationService.segment(pair.image_curr, pair.d_rel_curr, cfg)
    assert labels.count > 1
    assert np.array_equal(np.unique(labels.values), np.arange(labels.count))


def test_consolidation_recovers_planted_piecewise_scale():
    values = np.zeros((20, 20), dtype=np.int32)
    values[:, 10:] = 1
    labels = SegmentLabels(values)
    s_post = ScalarMap(np.where(values == 0, 2.0, 5.0))

    s_seg, report = SegmentationService.consolidate_scales(labels, s_post, cfg=SegmentationConfig(min_evidence=50))
    assert report.accepted_count == 2
    assert np.array_equal(s_seg.values, s_post.values)


def test_segment_median_resists_a_corrupted_minority():
    values = np.zeros((10, 10), dtype=np.int32)
    scale = np.full((10, 10), 3.0)
    scale.flat[:30] = 100.0
    s_seg, report = SegmentationService.consolidate_scales(SegmentLabels(values), ScalarMap(scale),
                                                           cfg=SegmentationConfig(max_fit_error=100.0))
    assert report.accepted[0]
    assert np.all(s_seg.values == 3.0)


def test_small_or_poorly_fit_segments_fall_back_to_global_scale():
    values = np.zeros((10, 10), dtype=np.int32)
    values[:, 5:] = 1
    scale = np.full((10, 10), 2.0)
    scale[:, 5:] = np.array([1.0, 5.0, 9.0])[np.arange(50).reshape(10, 5) % 3]
    cfg = SegmentationConfig(min_evidence=10)
    s_seg, report = SegmentationService.consolidate_scales(SegmentLabels(values), ScalarMap(scale), cfg=cfg)

    assert report.accepted.tolist() == [True, False]
    assert np.all(s_seg.values[:, 5:] == report.global_scale)

    strict = SegmentationConfig(min_evidence=1000)
    s_seg, report = SegmentationService.consolidate_scales(SegmentLabels(values), ScalarMap(scale), cfg=strict)
    assert not report.accepted.any()


def test_consolidation_is_permutation_invariant(rng):
    values = np.repeat(np.arange(4), 25).reshape(10, 10).astype(np.int32)
    scale = rng.uniform(2.0, 2.2, (10, 10))
    order = rng.permutation(100)
    shuffled = scale.ravel()[order]
    shuffled_labels = values.ravel()[order]

    cfg = SegmentationConfig(min_evidence=10)
    _, report = SegmentationService.consolidate_scales(SegmentLabels(values), ScalarMap(scale), cfg=cfg)
    _, shuffled_report = SegmentationService.consolidate_scales(
        SegmentLabels(SegmentationService.relabel(shuffled_labels.reshape(10, 10))),
        ScalarMap(shuffled.reshape(10, 10)), cfg=cfg)
    assert sorted(report.median.tolist()) == sorted(shuffled_report.median.tolist())


def test_disabled_consolidation_keeps_the_posterior():
    scale = np.full((4, 4), 2.0)
    scale[0, 0] = np.nan
    s_post = ScalarMap(scale)
    s_seg, report = SegmentationService.consolidate_scales(None, s_post)
    assert report.count == 0
    assert s_seg.values[0, 0] == 2.0
    assert np.array_equal(s_seg.values[1:], scale[1:].astype(np.float32))


def test_final_depth():
    s_seg = ScalarMap(np.full((2, 2), 3.0))
    d_rel = RelativeDepthMap(np.array([[1.0, 2.0], [0.0, 4.0]]))
    depth = SegmentationService.final_depth(s_seg, d_rel)
    assert np.array_equal(depth.mask, [[True, True], [False, True]])
    assert np.allclose(depth.valid_values(), [3.0, 6.0, 12.0])


def segment_ablation_errors(seed):
    spec = OracleService.default_scene(frame_count=2, piecewise_scale=True)
    pair = OracleService.render_frame_pair(spec, 1)
    truth = pair.scale_curr.values.astype(np.float64)
    noisy = truth * (1.0 + 0.1 * np.random.default_rng(seed).standard_normal(truth.shape))
    s_post = ScalarMap(noisy, pair.scale_curr.mask & pair.d_rel_curr.mask)

    cfg = SegmentationConfig()
    labels = SegmentationService.segment(pair.image_curr, pair.d_rel_curr, cfg)
    with_segments, _ = SegmentationService.consolidate_scales(labels, s_post, cfg=cfg)
    without_segments, _ = SegmentationService.consolidate_scales(None, s_post, cfg=cfg)

    gt = pair.depth_curr
    full = EvaluationService.abs_rel(SegmentationService.final_depth(with_segments, pair.d_rel_curr), gt)
    ablated = EvaluationService.abs_rel(SegmentationService.final_depth(without_segments, pair.d_rel_curr), gt)
    return full, ablated


def test_segments_reduce_error_on_piecewise_scale():
    full, ablated = segment_ablation_errors(seed=0)
    assert full <= ablated


@pytest.mark.slow
def test_segments_reduce_error_across_seeds():
    wins = sum(full <= ablated for full, ablated in map(segment_ablation_errors, range(20)))
    assert wins >= 18
