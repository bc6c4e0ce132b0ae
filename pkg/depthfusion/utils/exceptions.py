from utils.constants import DEGRADATION_REASONS, ERROR_MESSAGES


class DepthFusionError(Exception):
    """Base class for every error raised by depthfusion"""
    message_key = None

    def __init__(self, detail=None):
        base = ERROR_MESSAGES.get(self.message_key, 'depthfusion error')
        self.detail = detail
        super().__init__(f'{base}: {detail}' if detail else base)


class GeometryDegeneracyError(DepthFusionError):
    """Per-frame geometric failure; the pipeline degrades the frame instead of aborting"""
    reason = None


class DegenerateDepthError(GeometryDegeneracyError):
    message_key = 'DEGENERATE_DEPTH'


class InsufficientSamplesError(GeometryDegeneracyError):
    message_key = 'INSUFFICIENT_SAMPLES'
    reason = DEGRADATION_REASONS['INSUFFICIENT_SAMPLES']


class RankDeficientError(GeometryDegeneracyError):
    message_key = 'RANK_DEFICIENT'
    reason = DEGRADATION_REASONS['RANK_DEFICIENT']


class ZeroBaselineError(GeometryDegeneracyError):
    message_key = 'ZERO_BASELINE'
    reason = DEGRADATION_REASONS['ZERO_BASELINE']


class DegenerateTranslationError(GeometryDegeneracyError):
    message_key = 'DEGENERATE_TRANSLATION'
    reason = DEGRADATION_REASONS['ROTATION_ONLY']


class NoConsensusError(GeometryDegeneracyError):
    message_key = 'NO_CONSENSUS'
    reason = DEGRADATION_REASONS['NO_CONSENSUS']


class ZeroTranslationError(GeometryDegeneracyError):
    message_key = 'ZERO_TRANSLATION'
    reason = DEGRADATION_REASONS['ROTATION_ONLY']


class NearParallelRaysError(GeometryDegeneracyError):
    message_key = 'NEAR_PARALLEL_RAYS'


class EmptyObservationError(GeometryDegeneracyError):
    message_key = 'EMPTY_OBSERVATION'
    reason = DEGRADATION_REASONS['EMPTY_OBSERVATION']


class LowParallaxError(GeometryDegeneracyError):
    message_key = 'LOW_PARALLAX'
    reason = DEGRADATION_REASONS['LOW_PARALLAX']


class NoValidPixelsError(DepthFusionError):
    message_key = 'NO_VALID_PIXELS'


class InsufficientFramesError(DepthFusionError):
    message_key = 'INSUFFICIENT_FRAMES'


class FormatError(DepthFusionError):
    """Raised by the raster codecs"""


class BadMagicError(FormatError):
    message_key = 'BAD_MAGIC'


class TruncatedFileError(FormatError):
    message_key = 'TRUNCATED_FILE'


class DimensionMismatchError(FormatError):
    message_key = 'DIMENSION_MISMATCH'


class MalformedHeaderError(FormatError):
    message_key = 'MALFORMED_HEADER'


class OverflowDepthError(DepthFusionError):
    message_key = 'OVERFLOW_DEPTH'


class ConfigError(DepthFusionError):
    message_key = 'CONFIG_ERROR'
