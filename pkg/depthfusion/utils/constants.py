# utils/constants.py

# Frame statuses written to the per-frame records
FRAME_STATUSES = {
    'OK': 'ok',
    'UNINITIALIZED': 'uninitialized',
    'PRIOR_ONLY': 'prior_only',
    'OBSERVATION_ONLY': 'observation_only',
    'EVALUATED': 'evaluated'
}

# Reasons a frame degrades to prior-only
DEGRADATION_REASONS = {
    'NO_FLOW': 'no_flow',
    'INSUFFICIENT_SAMPLES': 'insufficient_samples',
    'NO_CONSENSUS': 'no_consensus',
    'RANK_DEFICIENT': 'rank_deficient',
    'ZERO_BASELINE': 'zero_baseline',
    'ROTATION_ONLY': 'rotation_only',
    'LOW_PARALLAX': 'low_parallax',
    'EMPTY_OBSERVATION': 'empty_observation'
}

# Runtime stages (names follow the per-frame runtime breakdown table)
STAGE_NAMES = ['Seg+Flow', 'Motion', 'Scale', 'Tri+Fusion']

# Depth output formats
OUTPUT_FORMATS = ['pfm', 'png16']

# Segmentation engines
SEGMENTATION_ENGINES = ['native', 'skimage']

# Evaluation windows in meters, [lower, upper)
METRIC_WINDOWS = {
    'ALL': (0.0, float('inf')),
    'NEAR': (0.0, 20.0),
    'FAR': (20.0, 80.0)
}

# Numeric floors shared across services
INVERSE_DEPTH_FLOOR = 1e-6      # d_rel = 1 / max(inv, floor); floor pixels are masked
DEPTH_EPSILON = 1e-9            # smallest admissible alpha * d_rel
TRANSLATION_FLOOR = 1e-6        # ||V|| below this is rotation-only
BASELINE_FLOOR = 1e-4           # meters
PARALLEL_RAY_SINE = 1e-4        # sine of the ray angle below which triangulation fails
SAMPSON_DENOMINATOR_FLOOR = 1e-18
TOLERANCE_FLOOR = 1e-4          # sigma_e floor
MIN_OBSERVATION_FRACTION = 1e-3 # 0.1% of the frame must triangulate

# Middlebury .flo layout
FLO_MAGIC = 202021.25
FLO_INVALID_THRESHOLD = 1e9

# 16-bit PNG depth convention
PNG16_DEPTH_SCALE = 256.0

# Error messages
ERROR_MESSAGES = {
    'DEGENERATE_DEPTH': 'alpha * d_rel is below the depth floor',
    'INSUFFICIENT_SAMPLES': 'Too few usable flow samples for motion estimation',
    'RANK_DEFICIENT': 'Motion system is rank deficient',
    'ZERO_BASELINE': 'Odometry baseline is below the minimum baseline',
    'DEGENERATE_TRANSLATION': 'Solved translation is below the degeneracy floor',
    'NO_CONSENSUS': 'RANSAC found no hypothesis with enough inliers',
    'ZERO_TRANSLATION': 'Pose translation is zero',
    'NEAR_PARALLEL_RAYS': 'Viewing rays are nearly parallel',
    'EMPTY_OBSERVATION': 'Too few pixels triangulated',
    'LOW_PARALLAX': 'Translational parallax is too small to triangulate',
    'NO_VALID_PIXELS': 'No valid pixels to evaluate',
    'INSUFFICIENT_FRAMES': 'Not enough frames',
    'BAD_MAGIC': 'Bad magic number',
    'TRUNCATED_FILE': 'File is truncated',
    'DIMENSION_MISMATCH': 'Raster dimensions do not match',
    'MALFORMED_HEADER': 'Malformed header',
    'OVERFLOW_DEPTH': 'Depth does not fit the 16-bit PNG encoding',
    'CONFIG_ERROR': 'Invalid configuration'
}
