from .geometry_service import GeometryService
from .motion_service import MotionService
from .triangulation_service import TriangulationService
from .propagation_service import PropagationService
from .fusion_service import FusionService
from .segmentation_service import SegmentationService
from .evaluation_service import EvaluationService
from .io_service import IOService
from .oracle_service import OracleService
from .pipeline_service import PipelineService

__all__ = [
    'GeometryService', 'MotionService', 'TriangulationService',
    'PropagationService', 'FusionService', 'SegmentationService',
    'EvaluationService', 'IOService', 'OracleService', 'PipelineService'
]
