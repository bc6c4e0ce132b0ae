import logging
import warnings

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from skimage.color import rgb2lab
from skimage.segmentation import felzenszwalb
from skimage.util import img_as_float

from models.pipeline_config import SegmentationConfig
from models.raster import ScalarMap
from models.segments import SegmentLabels, SegmentScale
from utils.robust_stats import grouped_lower_median, lower_median

logger = logging.getLogger(__name__)

# 8-connected neighbourhood, each undirected edge listed once
EDGE_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))


class _DisjointSet:
    """Union-find with union by rank, path halving, component size and internal difference"""

    def __init__(self, count):
        self.parent = list(range(count))
        self.rank = [0] * count
        self.size = [1] * count
        self.internal = [0.0] * count

    def find(self, i):
        parent = self.parent
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(self, a, b, weight):
        if self.rank[a] < self.rank[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        self.internal[a] = weight
        if self.rank[a] == self.rank[b]:
            self.rank[a] += 1
        return a


class SegmentationService:

    @staticmethod
    def lab_convert(image):
        """CIE L*a*b* (D65); single-channel images map onto L with a = b = 0"""
        image = np.asarray(image)
        if image.ndim == 2 or (image.ndim == 3 and image.shape[2] == 1):
            lightness = 100.0 * img_as_float(image.reshape(image.shape[:2]))
            zero = np.zeros_like(lightness)
            return np.stack([lightness, zero, zero], axis=-1)
        return rgb2lab(img_as_float(image[..., :3]))

    @staticmethod
    def depth_features(lab, d_rel, depth_weight):
        """(H, W, 4) features: LAB plus relative depth rescaled to [0, 100]"""
        values = d_rel.values.astype(np.float64)
        valid = values[d_rel.mask]
        if valid.size == 0:
            depth = np.zeros(d_rel.shape)
        else:
            low, high = valid.min(), valid.max()
            filled = np.where(d_rel.mask, values, lower_median(valid))
            depth = 100.0 * (filled - low) / (high - low) if high > low else np.zeros(d_rel.shape)
        return np.concatenate([lab, (depth_weight * depth)[..., None]], axis=-1)

    @staticmethod
    def grid_edges(height, width):
        """Endpoints of the 8-connected grid edges, in a fixed order"""
        index = np.arange(height * width).reshape(height, width)
        heads, tails = [], []
        for dr, dc in EDGE_OFFSETS:
            rows = slice(0, height - dr)
            if dc >= 0:
                src = index[rows, 0:width - dc]
                dst = index[dr:, dc:]
            else:
                src = index[rows, -dc:]
                dst = index[dr:, :width + dc]
            heads.append(src.ravel())
            tails.append(dst.ravel())
        return np.concatenate(heads), np.concatenate(tails)

    @staticmethod
    def split_four_connected(labels):
        """Relabel so every segment is 4-connected, ids by first raster occurrence"""
        height, width = labels.shape
        index = np.arange(height * width).reshape(height, width)
        right = labels[:, :-1] == labels[:, 1:]
        down = labels[:-1, :] == labels[1:, :]
        heads = np.concatenate([index[:, :-1][right], index[:-1, :][down]])
        tails = np.concatenate([index[:, 1:][right], index[1:, :][down]])

        graph = coo_matrix((np.ones(heads.size), (heads, tails)), shape=(height * width, height * width))
        _, components = connected_components(graph, directed=False)
        return SegmentationService.relabel(components.reshape(height, width))

    @staticmethod
    def relabel(labels):
        """Map arbitrary ids to 0..n-1 in order of first raster occurrence"""
        flat = np.asarray(labels).ravel()
        _, first, inverse = np.unique(flat, return_index=True, return_inverse=True)
        rank = np.empty(first.size, dtype=np.int64)
        rank[np.argsort(first, kind='stable')] = np.arange(first.size)
        return rank[inverse].reshape(np.asarray(labels).shape).astype(np.int32)

    @staticmethod
    def _felzenszwalb_native(features, k, min_size):
        height, width = features.shape[:2]
        heads, tails = SegmentationService.grid_edges(height, width)
        flat = features.reshape(height * width, -1)
        weights = np.linalg.norm(flat[heads] - flat[tails], axis=1)
        order = np.argsort(weights, kind='stable')

        forest = _DisjointSet(height * width)
        sorted_heads = heads[order].tolist()
        sorted_tails = tails[order].tolist()
        sorted_weights = weights[order].tolist()

        for a, b, w in zip(sorted_heads, sorted_tails, sorted_weights):
            ra, rb = forest.find(a), forest.find(b)
            if ra == rb:
                continue
            if w <= min(forest.internal[ra] + k / forest.size[ra], forest.internal[rb] + k / forest.size[rb]):
                forest.union(ra, rb, w)

        for a, b, w in zip(sorted_heads, sorted_tails, sorted_weights):
            ra, rb = forest.find(a), forest.find(b)
            if ra != rb and (forest.size[ra] < min_size or forest.size[rb] < min_size):
                forest.union(ra, rb, w)

        return np.array([forest.find(i) for i in range(height * width)]).reshape(height, width)

    @staticmethod
    def felzenszwalb_segment(features, k, min_size, sigma, engine='skimage'):
        """Graph-based segmentation of a (H, W, C) feature image.

        Edges are sorted with a stable sort so ties resolve by edge index; the
        result is split into 4-connected components and relabelled.
        """
        features = np.asarray(features, dtype=np.float64)
        if features.ndim == 2:
            features = features[..., None]

        if engine == 'skimage':
            # the LAB + depth stack is four channels on purpose
            with warnings.catch_warnings():
                warnings.filterwarnings('ignore', message='Got image with third dimension')
                raw = felzenszwalb(features, scale=k, sigma=sigma, min_size=min_size, channel_axis=-1)
        else:
            if sigma > 0:
                features = ndimage.gaussian_filter(features, sigma=(sigma, sigma, 0))
            raw = SegmentationService._felzenszwalb_native(features, k, min_size)

        labels = SegmentLabels(SegmentationService.split_four_connected(raw))
        logger.debug('Segmented into %d superpixels (%s engine)', labels.count, engine)
        return labels

    @staticmethod
    def segment(image, d_rel, cfg=None):
        cfg = cfg or SegmentationConfig()
        lab = SegmentationService.lab_convert(image)
        features = SegmentationService.depth_features(lab, d_rel, cfg.depth_weight)
        return SegmentationService.felzenszwalb_segment(features, cfg.k, cfg.min_size, cfg.sigma, cfg.engine)

    @staticmethod
    def consolidate_scales(labels, s_post, v_post=None, cfg=None, previous_global=float('nan')):
        """Segment-median scale where the segment is trustworthy, global median elsewhere.

        A segment is accepted when it has at least max(min_evidence,
        evidence_fraction * area) valid posterior pixels and MAD / median of
        its scales is at most max_fit_error. Returns (S_seg, SegmentScale).
        ``labels`` may be None to skip segment consolidation.
        """
        cfg = cfg or SegmentationConfig()
        valid = s_post.mask
        values = s_post.values.astype(np.float64)
        global_scale = lower_median(values[valid]) if valid.any() else float(previous_global)

        if labels is None or not cfg.enabled:
            s_seg = np.where(valid, values, global_scale)
            report = SegmentScale(np.empty(0), np.empty(0, dtype=np.int64), np.empty(0),
                                  np.empty(0, dtype=bool), global_scale)
            return ScalarMap(s_seg.astype(np.float32)), report

        label_values = labels.values
        medians, evidence = grouped_lower_median(label_values[valid], values[valid], labels.count)
        deviation = np.abs(values[valid] - medians[label_values[valid]])
        spread, _ = grouped_lower_median(label_values[valid], deviation, labels.count)
        with np.errstate(divide='ignore', invalid='ignore'):
            fit_error = spread / medians

        required = np.maximum(cfg.min_evidence, cfg.evidence_fraction * labels.sizes)
        accepted = (evidence >= required) & np.isfinite(medians) & (fit_error <= cfg.max_fit_error)

        s_seg = np.where(accepted[label_values], medians[label_values], global_scale)
        report = SegmentScale(medians, evidence, fit_error, accepted, global_scale)
        logger.debug('Accepted %d of %d segments, global scale %.4f', report.accepted_count, report.count, global_scale)
        return ScalarMap(s_seg.astype(np.float32)), report

    @staticmethod
    def final_depth(s_seg, d_rel):
        """Z_post = S_seg * d_rel, invalid where either input is"""
        mask = s_seg.mask & d_rel.mask
        depth = np.where(mask, s_seg.values * d_rel.values, np.nan)
        return ScalarMap(depth.astype(np.float32), mask)
