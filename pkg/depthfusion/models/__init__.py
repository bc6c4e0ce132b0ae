from .raster import PixelGridMap, ScalarMap, LabelMap, RelativeDepthMap, FlowField
from .intrinsics import Intrinsics
from .pose import Pose
from .motion import MotionSample, MotionSampleSet, LinearSystem, MotionSolution, MotionHypothesis
from .observation import TriangulatedDepth, SampsonMap
from .prior import WarpedPrior
from .scale_state import ScaleState
from .segments import SegmentLabels, SegmentScale
from .metrics import DepthMetrics, TaeResult
from .scene import Plane, HeightField, MovingBlock, NoiseSpec, SceneSpec, FramePair, RenderedFrame
from .frame import OdometryRecord, FrameInput, FrameData, FrameRecord, FrameOutput
from .pipeline_config import (
    RansacConfig, TriangulationConfig, PropagationConfig, FusionConfig,
    SegmentationConfig, EvaluationConfig, OutputConfig, PipelineConfig
)

__all__ = [
    'PixelGridMap', 'ScalarMap', 'LabelMap', 'RelativeDepthMap', 'FlowField',
    'Intrinsics', 'Pose',
    'MotionSample', 'MotionSampleSet', 'LinearSystem', 'MotionSolution', 'MotionHypothesis',
    'TriangulatedDepth', 'SampsonMap', 'WarpedPrior', 'ScaleState',
    'SegmentLabels', 'SegmentScale', 'DepthMetrics', 'TaeResult',
    'Plane', 'HeightField', 'MovingBlock', 'NoiseSpec', 'SceneSpec', 'FramePair', 'RenderedFrame',
    'OdometryRecord', 'FrameInput', 'FrameData', 'FrameRecord', 'FrameOutput',
    'RansacConfig', 'TriangulationConfig', 'PropagationConfig', 'FusionConfig',
    'SegmentationConfig', 'EvaluationConfig', 'OutputConfig', 'PipelineConfig'
]
