import math

import numpy as np

from models.metrics import DepthMetrics, TaeResult
from models.pipeline_config import EvaluationConfig
from services.propagation_service import PropagationService
from utils.exceptions import InsufficientFramesError, NoValidPixelsError


def _values_and_mask(raster):
    if hasattr(raster, 'mask'):
        return raster.values.astype(np.float64), raster.mask
    values = np.asarray(raster, dtype=np.float64)
    return values, np.isfinite(values)


class EvaluationService:
    """Depth accuracy and temporal consistency metrics"""

    @staticmethod
    def compared_pixels(pred, gt, window=(0.0, math.inf)):
        """Valid (pred, gt) pairs with gt inside [lo, hi)"""
        pred_values, pred_mask = _values_and_mask(pred)
        gt_values, gt_mask = _values_and_mask(gt)
        low, high = window
        mask = pred_mask & gt_mask & (gt_values > 0) & (pred_values > 0) & (gt_values >= low) & (gt_values < high)
        return pred_values[mask], gt_values[mask]

    @staticmethod
    def trimmed_mean(errors, trim):
        """Mean of the lowest ceil(trim * n) errors"""
        errors = np.sort(np.asarray(errors, dtype=np.float64).ravel())
        if errors.size == 0:
            raise NoValidPixelsError()
        keep = max(1, math.ceil(trim * errors.size))
        return float(errors[:keep].mean())

    @staticmethod
    def abs_rel(pred, gt, window=(0.0, math.inf), trim=0.9):
        p, g = EvaluationService.compared_pixels(pred, gt, window)
        if g.size == 0:
            raise NoValidPixelsError(f'window {window}')
        return EvaluationService.trimmed_mean(np.abs(p - g) / g, trim)

    @staticmethod
    def delta_accuracy(pred, gt, threshold=1.25, window=(0.0, math.inf)):
        """Fraction of pixels with max(pred / gt, gt / pred) strictly below threshold"""
        p, g = EvaluationService.compared_pixels(pred, gt, window)
        if g.size == 0:
            raise NoValidPixelsError(f'window {window}')
        ratio = np.maximum(p / g, g / p)
        return float((ratio < threshold).mean())

    @staticmethod
    def metrics_from_pixels(p, g, window, cfg):
        if g.size == 0:
            raise NoValidPixelsError(f'window {window}')
        ratio = np.maximum(p / g, g / p)
        base = cfg.delta_base
        return DepthMetrics(
            abs_rel=EvaluationService.trimmed_mean(np.abs(p - g) / g, cfg.trim_fraction),
            delta1=float((ratio < base).mean()),
            delta2=float((ratio < base ** 2).mean()),
            delta3=float((ratio < base ** 3).mean()),
            count=int(g.size),
            window=tuple(window)
        )

    @staticmethod
    def depth_metrics(pred, gt, window=(0.0, math.inf), cfg=None):
        cfg = cfg or EvaluationConfig()
        p, g = EvaluationService.compared_pixels(pred, gt, window)
        return EvaluationService.metrics_from_pixels(p, g, window, cfg)

    @staticmethod
    def near_far_split(pred, gt, cfg=None):
        cfg = cfg or EvaluationConfig()
        near = EvaluationService.depth_metrics(pred, gt, cfg.near_window, cfg)
        far = EvaluationService.depth_metrics(pred, gt, cfg.far_window, cfg)
        return near, far

    @staticmethod
    def pair_consistency(depth_a, depth_b, pose, intrinsics):
        """Untrimmed AbsRel of depth_a warped by ``pose`` against depth_b, both directions averaged"""
        forward = PropagationService.warp_depth(depth_a, pose, intrinsics)
        backward = PropagationService.warp_depth(depth_b, pose.inverse(), intrinsics)

        p, g = EvaluationService.compared_pixels(forward, depth_b)
        q, h = EvaluationService.compared_pixels(backward, depth_a)
        if g.size == 0 or h.size == 0:
            raise NoValidPixelsError('frames do not overlap')
        return 0.5 * (float(np.mean(np.abs(p - g) / g)) + float(np.mean(np.abs(q - h) / h)))

    @staticmethod
    def tae(depths, poses, intrinsics):
        """Temporal alignment error x100 over adjacent pairs.

        ``poses[k]`` maps frame k to frame k + 1. The result averages the
        bidirectional AbsRel over the T - 1 pairs, i.e. divides the sum of both
        directions by 2 (T - 1).
        """
        if len(depths) < 3:
            raise InsufficientFramesError(f'{len(depths)} frames, TAE needs 3')
        if len(poses) != len(depths) - 1:
            raise InsufficientFramesError(f'{len(poses)} poses for {len(depths)} frames')

        pair_errors = []
        for k, pose in enumerate(poses):
            try:
                pair_errors.append(100.0 * EvaluationService.pair_consistency(depths[k], depths[k + 1], pose,
                                                                              intrinsics))
            except NoValidPixelsError:
                pair_errors.append(float('nan'))

        finite = [e for e in pair_errors if np.isfinite(e)]
        if not finite:
            raise NoValidPixelsError('no overlapping frame pair')
        return TaeResult(tae=float(np.mean(finite)), pair_count=len(finite), pair_errors=pair_errors)

    @staticmethod
    def evaluate_sequence(preds, gts, poses, intrinsics, cfg=None):
        """Per-frame metrics, near / far tables pooled over the sequence, and TAE.

        ``preds`` and ``gts`` may contain None for frames without output or
        ground truth; those frames are skipped in the accuracy tables. TAE
        needs a prediction for every frame and ``poses``; otherwise it is None.
        """
        cfg = cfg or EvaluationConfig()
        frames = []
        pooled = {'near': ([], []), 'far': ([], []), 'all': ([], [])}
        windows = {'near': cfg.near_window, 'far': cfg.far_window, 'all': (0.0, math.inf)}

        for pred, gt in zip(preds, gts):
            if pred is None or gt is None:
                frames.append(None)
                continue
            try:
                frames.append(EvaluationService.depth_metrics(pred, gt, cfg=cfg))
            except NoValidPixelsError:
                frames.append(None)
            for name, window in windows.items():
                p, g = EvaluationService.compared_pixels(pred, gt, window)
                pooled[name][0].append(p)
                pooled[name][1].append(g)

        tables = {}
        for name, (p, g) in pooled.items():
            p = np.concatenate(p) if p else np.empty(0)
            g = np.concatenate(g) if g else np.empty(0)
            tables[name] = EvaluationService.metrics_from_pixels(p, g, windows[name], cfg) if g.size else None

        usable = [pred for pred in preds if pred is not None]
        tae = None
        if poses is not None and len(usable) == len(preds) and len(preds) >= 3:
            try:
                tae = EvaluationService.tae(preds, list(poses)[:len(preds) - 1], intrinsics)
            except NoValidPixelsError:
                tae = None

        return {
            'frames': frames,
            'near': tables['near'],
            'far': tables['far'],
            'all': tables['all'],
            'tae': tae
        }
