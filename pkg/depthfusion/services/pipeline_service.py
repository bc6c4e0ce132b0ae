import logging
import math

import numpy as np
from scipy.spatial.transform import Rotation

from models.frame import FrameData, FrameOutput, FrameRecord
from models.pose import Pose
from models.raster import ScalarMap
from models.scale_state import ScaleState
from services.evaluation_service import EvaluationService
from services.fusion_service import FusionService
from services.motion_service import MotionService
from services.propagation_service import PropagationService
from services.segmentation_service import SegmentationService
from services.triangulation_service import TriangulationService
from utils.constants import DEGRADATION_REASONS, FRAME_STATUSES
from utils.exceptions import InsufficientFramesError, NoValidPixelsError
from utils.timing import StageTimer

logger = logging.getLogger(__name__)


def _finite(value):
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


class PipelineService:
    """The frame loop: motion, triangulation, propagation, fusion, segmentation"""

    @staticmethod
    def frame_seed(seed, index):
        """Per-frame RANSAC seed derived from (seed, frame index)"""
        return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])

    @staticmethod
    def frames_from_pairs(pairs):
        """FrameData for an oracle sequence; frame 0 comes from the first pair"""
        first = pairs[0]
        frames = [FrameData(index=0, timestamp=0.0, image=first.image_prev, d_rel=first.d_rel_prev)]
        for pair in pairs:
            frames.append(FrameData(index=pair.index, timestamp=float(pair.index), image=pair.image_curr,
                                    d_rel=pair.d_rel_curr, flow=pair.flow, baseline=pair.baseline))
        return frames

    @staticmethod
    def _warp_pose(hypothesis, error):
        """Pose for the prior warp: full when the frame triangulates, rotation-only otherwise"""
        if hypothesis is None:
            return None
        if error is None:
            return hypothesis.to_pose()
        return Pose(Rotation.from_rotvec(hypothesis.omega).as_matrix(), np.zeros(3))

    @staticmethod
    def _uninitialized(frame, shape, timer, reason=None):
        depth = ScalarMap(np.full(shape, np.nan, dtype=np.float32), np.zeros(shape, dtype=bool))
        record = FrameRecord(index=frame.index, status=FRAME_STATUSES['UNINITIALIZED'], reason=reason,
                             baseline=_finite(frame.baseline), timings=timer.as_dict())
        return FrameOutput(index=frame.index, depth=depth, record=record)

    @staticmethod
    def process_frame(state, previous_depth, frame, intrinsics, cfg):
        """One recursive step. Returns (state, posterior depth, FrameOutput)"""
        timer = StageTimer()
        shape = (intrinsics.height, intrinsics.width)
        d_rel = frame.d_rel

        with timer.stage('Seg+Flow'):
            labels = None
            if cfg.segmentation.enabled:
                labels = SegmentationService.segment(frame.image, d_rel, cfg.segmentation)

        with timer.stage('Motion'):
            hypothesis, error = None, None
            if frame.flow is None or frame.flow.valid_count == 0:
                reason = DEGRADATION_REASONS['NO_FLOW']
            else:
                baseline = frame.baseline if frame.baseline is not None else 0.0
                seed = PipelineService.frame_seed(cfg.seed, frame.index)
                hypothesis, error = MotionService.estimate(frame.flow, d_rel, intrinsics, baseline, cfg.ransac, seed)
                reason = None

        with timer.stage('Tri+Fusion'):
            pose = PipelineService._warp_pose(hypothesis, error)
            observation = None
            if hypothesis is not None and error is None:
                fused = MotionService.fuse_flow(frame.flow, d_rel, intrinsics, hypothesis, cfg.ransac)
                observation, error = TriangulationService.observe(fused, pose, intrinsics, d_rel, cfg.triangulation)
            if error is not None:
                reason = error.reason or error.message_key.lower()

            prior = None
            if state.initialized and previous_depth is not None:
                prior = PropagationService.warp_posterior(previous_depth, state.v, pose or Pose.identity(),
                                                          intrinsics, d_rel, cfg.propagation)

            if observation is None and prior is None:
                logger.warning('Frame %d has neither prior nor observation (%s)', frame.index, reason)
                output = PipelineService._uninitialized(frame, shape, timer, reason)
                output.hypothesis = hypothesis
                output.segments = labels
                output.pose = pose
                return state, previous_depth, output

            new_state = FusionService.fuse_frame(state, prior, observation, d_rel, intrinsics, cfg.fusion,
                                                 frame_index=frame.index)

        with timer.stage('Scale'):
            s_seg, report = SegmentationService.consolidate_scales(
                labels, new_state.s, new_state.v, cfg.segmentation, previous_global=state.global_scale)
            depth = SegmentationService.final_depth(s_seg, d_rel)
            new_state.global_scale = report.global_scale

        if observation is None:
            status = FRAME_STATUSES['PRIOR_ONLY']
            logger.warning('Frame %d degraded to prior-only (%s)', frame.index, reason)
        elif prior is None:
            status = FRAME_STATUSES['OBSERVATION_ONLY']
        else:
            status = FRAME_STATUSES['OK']

        record = FrameRecord(
            index=frame.index,
            status=status,
            reason=reason,
            inlier_ratio=_finite(hypothesis.inlier_ratio) if hypothesis is not None else None,
            alpha=_finite(hypothesis.alpha) if hypothesis is not None else None,
            rho_median=_finite(observation[1].median) if observation is not None else None,
            global_scale=_finite(report.global_scale),
            gate_rejection_rate=new_state.gate_rejection_rate,
            baseline=_finite(frame.baseline),
            timings=timer.as_dict()
        )
        logger.info('Frame %d %s: inliers %s, alpha %s, rho %s, global scale %s',
                    frame.index, status, record.inlier_ratio, record.alpha, record.rho_median, record.global_scale)
        output = FrameOutput(index=frame.index, depth=depth, record=record, hypothesis=hypothesis,
                             segments=labels, pose=pose)
        return new_state, depth, output

    @staticmethod
    def iter_sequence(frames, intrinsics, cfg):
        """Yield a FrameOutput per frame; only the recursive state is kept between frames"""
        frames = iter(frames)
        try:
            first = next(frames)
        except StopIteration:
            return
        shape = (intrinsics.height, intrinsics.width)
        state = ScaleState.empty(shape)
        previous_depth = None

        yield PipelineService._uninitialized(first, shape, StageTimer())
        for frame in frames:
            state, previous_depth, output = PipelineService.process_frame(state, previous_depth, frame,
                                                                           intrinsics, cfg)
            yield output

    @staticmethod
    def attach_metrics(outputs, gt_depths, intrinsics, cfg, poses=None):
        """Fill abs_rel / delta1 and, when poses are given, the TAE pair contribution of each record.

        ``poses[k]`` maps frame k into frame k + 1; pair k's error is credited to frame k + 1.
        """
        for output, gt in zip(outputs, gt_depths):
            if gt is None:
                continue
            try:
                metrics = EvaluationService.depth_metrics(output.depth, gt, cfg=cfg.evaluation)
            except NoValidPixelsError:
                continue
            output.record.abs_rel = metrics.abs_rel
            output.record.delta1 = metrics.delta1

        if poses is None or len(outputs) < 3:
            return outputs
        try:
            tae = EvaluationService.tae([o.depth for o in outputs], poses[:len(outputs) - 1], intrinsics)
        except (NoValidPixelsError, InsufficientFramesError):
            return outputs
        for k, error in enumerate(tae.pair_errors):
            outputs[k + 1].record.tae_pair = _finite(error)
        return outputs

    @staticmethod
    def run_sequence(frames, intrinsics, cfg, gt_depths=None, poses=None):
        """Process a whole sequence; returns the list of FrameOutput"""
        frames = list(frames)
        if len(frames) < 2:
            raise InsufficientFramesError(f'{len(frames)} frame, need at least 2')
        outputs = list(PipelineService.iter_sequence(frames, intrinsics, cfg))
        if gt_depths is not None:
            PipelineService.attach_metrics(outputs, gt_depths, intrinsics, cfg, poses)
        degraded = sum(1 for o in outputs[1:] if o.record.status != FRAME_STATUSES['OK'])
        logger.info('Processed %d frames, %d not fully fused', len(outputs), degraded)
        return outputs
