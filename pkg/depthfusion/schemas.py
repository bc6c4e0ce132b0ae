from marshmallow import RAISE, Schema, ValidationError, fields, post_load, validate, validates_schema

from models.frame import FrameInput, FrameRecord, OdometryRecord
from models.intrinsics import Intrinsics
from models.pipeline_config import (
    EvaluationConfig, FusionConfig, OutputConfig, PipelineConfig, PropagationConfig, RansacConfig,
    SegmentationConfig, TriangulationConfig
)
from models.pose import Pose
from models.scene import HeightField, MovingBlock, NoiseSpec, Plane, SceneSpec
from utils.constants import OUTPUT_FORMATS, SEGMENTATION_ENGINES

positive = validate.Range(min=0, min_inclusive=False)
non_negative = validate.Range(min=0)
unit_interval = validate.Range(min=0, max=1, min_inclusive=False, max_inclusive=False)


class StrictSchema(Schema):
    class Meta:
        unknown = RAISE


class RansacConfigSchema(StrictSchema):
    max_iterations = fields.Int(validate=validate.Range(min=1))
    min_sample_size = fields.Int(validate=validate.Range(min=3))
    tau = fields.Float(validate=positive)
    static_floor = fields.Float(validate=non_negative)
    mad_multiplier = fields.Float(validate=positive)
    target_inlier_ratio = fields.Float(validate=unit_interval)
    relax_factor = fields.Float(validate=validate.Range(min=1, min_inclusive=False))
    tighten_factor = fields.Float(validate=unit_interval)
    eta_min = fields.Float(validate=positive)
    eta_max = fields.Float(validate=positive)
    angle_mad_multiplier = fields.Float(validate=positive)
    min_angle_threshold = fields.Float(validate=non_negative)
    cells_per_axis = fields.Int(validate=validate.Range(min=1))
    depth_bins = fields.Int(validate=validate.Range(min=1))
    per_cell_cap = fields.Int(validate=validate.Range(min=1))
    warmup_hypotheses = fields.Int(validate=validate.Range(min=1))
    huber_iterations = fields.Int(validate=non_negative)
    early_exit_ratio = fields.Float(validate=validate.Range(min=0, max=1))
    min_inlier_ratio = fields.Float(validate=validate.Range(min=0, max=1))
    polish = fields.Bool()
    polish_per_cell_cap = fields.Int(validate=validate.Range(min=1))
    parallax_check = fields.Bool()
    min_parallax_px = fields.Float(validate=non_negative)

    @validates_schema
    def validate_eta_range(self, data, **kwargs):
        if data.get('eta_min', RansacConfig.eta_min) > data.get('eta_max', RansacConfig.eta_max):
            raise ValidationError('eta_min must not exceed eta_max', 'eta_min')

    @post_load
    def make_config(self, data, **kwargs):
        return RansacConfig(**data)


class TriangulationConfigSchema(StrictSchema):
    synthetic_penalty = fields.Float(validate=validate.Range(min=1))
    synthetic_rho_floor = fields.Float(validate=non_negative)
    min_ray_sine = fields.Float(validate=non_negative)
    min_valid_fraction = fields.Float(validate=validate.Range(min=0, max=1))

    @post_load
    def make_config(self, data, **kwargs):
        return TriangulationConfig(**data)


class PropagationConfigSchema(StrictSchema):
    fill_factor = fields.Float(validate=validate.Range(min=1))
    interpolate = fields.Bool()
    stencil_spread = fields.Float(validate=non_negative)

    @post_load
    def make_config(self, data, **kwargs):
        return PropagationConfig(**data)


class FusionConfigSchema(StrictSchema):
    enabled = fields.Bool()
    sigma2 = fields.Float(validate=positive)
    kappa_min = fields.Float(validate=validate.Range(min=0, max=1))
    gate_probability = fields.Float(validate=unit_interval)
    ema = fields.Float(validate=validate.Range(min=0, max=1))
    obs_variance_floor = fields.Float(validate=positive)
    init_variance_factor = fields.Float(validate=positive)

    @post_load
    def make_config(self, data, **kwargs):
        return FusionConfig(**data)


class SegmentationConfigSchema(StrictSchema):
    enabled = fields.Bool()
    engine = fields.Str(validate=validate.OneOf(SEGMENTATION_ENGINES))
    k = fields.Float(validate=positive)
    min_size = fields.Int(validate=validate.Range(min=1))
    sigma = fields.Float(validate=non_negative)
    depth_weight = fields.Float(validate=non_negative)
    min_evidence = fields.Int(validate=validate.Range(min=1))
    evidence_fraction = fields.Float(validate=validate.Range(min=0, max=1))
    max_fit_error = fields.Float(validate=positive)

    @post_load
    def make_config(self, data, **kwargs):
        return SegmentationConfig(**data)


class EvaluationConfigSchema(StrictSchema):
    trim_fraction = fields.Float(validate=validate.Range(min=0, max=1, min_inclusive=False))
    near_window = fields.Tuple((fields.Float(), fields.Float()))
    far_window = fields.Tuple((fields.Float(), fields.Float()))
    delta_base = fields.Float(validate=validate.Range(min=1, min_inclusive=False))

    @validates_schema
    def validate_windows(self, data, **kwargs):
        for name in ('near_window', 'far_window'):
            if name in data and not data[name][0] < data[name][1]:
                raise ValidationError('window lower bound must be below the upper bound', name)

    @post_load
    def make_config(self, data, **kwargs):
        return EvaluationConfig(**data)


class OutputConfigSchema(StrictSchema):
    format = fields.Str(validate=validate.OneOf(OUTPUT_FORMATS))
    pointcloud = fields.Bool()
    metrics = fields.Bool()

    @post_load
    def make_config(self, data, **kwargs):
        return OutputConfig(**data)


class PipelineConfigSchema(StrictSchema):
    seed = fields.Int(validate=non_negative)
    ransac = fields.Nested(RansacConfigSchema)
    triangulation = fields.Nested(TriangulationConfigSchema)
    propagation = fields.Nested(PropagationConfigSchema)
    fusion = fields.Nested(FusionConfigSchema)
    segmentation = fields.Nested(SegmentationConfigSchema)
    evaluation = fields.Nested(EvaluationConfigSchema)
    output = fields.Nested(OutputConfigSchema)

    @post_load
    def make_config(self, data, **kwargs):
        return PipelineConfig(**data)


class IntrinsicsSchema(StrictSchema):
    fx = fields.Float(required=True)
    fy = fields.Float(required=True)
    cx = fields.Float(required=True)
    cy = fields.Float(required=True)
    width = fields.Int(required=True)
    height = fields.Int(required=True)

    @post_load
    def make_intrinsics(self, data, **kwargs):
        try:
            return Intrinsics(**data)
        except ValueError as e:
            raise ValidationError(str(e)) from e


class FrameInputSchema(StrictSchema):
    index = fields.Int(required=True, validate=non_negative)
    timestamp = fields.Float(required=True)
    image = fields.Str(required=True)
    inverse_depth = fields.Str(required=True)
    flow = fields.Str(allow_none=True, load_default=None)
    gt_depth = fields.Str(allow_none=True, load_default=None)

    @post_load
    def make_frame(self, data, **kwargs):
        return FrameInput(**data)


class OdometryRecordSchema(StrictSchema):
    timestamp = fields.Float(required=True)
    baseline = fields.Float(required=True, validate=non_negative)
    source = fields.Str(load_default='odometry')

    @post_load
    def make_record(self, data, **kwargs):
        return OdometryRecord(**data)


class PoseSchema(StrictSchema):
    rotation = fields.List(fields.List(fields.Float(), validate=validate.Length(equal=3)),
                           required=True, validate=validate.Length(equal=3))
    translation = fields.List(fields.Float(), required=True, validate=validate.Length(equal=3))
    baseline = fields.Float(dump_only=True)

    @post_load
    def make_pose(self, data, **kwargs):
        try:
            return Pose(data['rotation'], data['translation'])
        except ValueError as e:
            raise ValidationError(str(e), 'rotation') from e


class SequenceManifestSchema(StrictSchema):
    intrinsics = fields.Nested(IntrinsicsSchema, required=True)
    frames = fields.List(fields.Nested(FrameInputSchema), required=True, validate=validate.Length(min=1))
    odometry = fields.Str(allow_none=True, load_default=None)
    poses = fields.Str(allow_none=True, load_default=None)

    @validates_schema
    def validate_frame_order(self, data, **kwargs):
        frames = data.get('frames') or []
        if [frame.index for frame in frames] != list(range(len(frames))):
            raise ValidationError('frame indices must be 0..n-1 in order', 'frames')
        stamps = [frame.timestamp for frame in frames]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise ValidationError('timestamps must increase', 'frames')


class FrameRecordSchema(Schema):
    index = fields.Int()
    status = fields.Str()
    reason = fields.Str(allow_none=True)
    inlier_ratio = fields.Float(allow_none=True)
    alpha = fields.Float(allow_none=True)
    rho_median = fields.Float(allow_none=True)
    global_scale = fields.Float(allow_none=True)
    gate_rejection_rate = fields.Float(allow_none=True)
    baseline = fields.Float(allow_none=True)
    abs_rel = fields.Float(allow_none=True)
    delta1 = fields.Float(allow_none=True)
    tae_pair = fields.Float(allow_none=True)
    timings = fields.Dict(keys=fields.Str(), values=fields.Float())

    @post_load
    def make_record(self, data, **kwargs):
        return FrameRecord(**data)


class PlaneSchema(StrictSchema):
    normal = fields.Tuple((fields.Float(), fields.Float(), fields.Float()), required=True)
    offset = fields.Float(required=True)
    color = fields.Tuple((fields.Int(), fields.Int(), fields.Int()), load_default=(128, 128, 128))
    scale = fields.Float(allow_none=True, load_default=None, validate=positive)
    bounds = fields.Tuple((fields.Float(), fields.Float(), fields.Float(), fields.Float()),
                          allow_none=True, load_default=None)

    @post_load
    def make_plane(self, data, **kwargs):
        return Plane(**data)


class HeightFieldSchema(StrictSchema):
    base = fields.Float(validate=positive)
    amplitude = fields.Float(validate=non_negative)
    wavelength = fields.Float(validate=positive)
    color = fields.Tuple((fields.Int(), fields.Int(), fields.Int()))
    scale = fields.Float(allow_none=True, validate=positive)

    @post_load
    def make_field(self, data, **kwargs):
        return HeightField(**data)


class MovingBlockSchema(StrictSchema):
    fraction = fields.Float(validate=validate.Range(min=0, max=1))
    rotvec = fields.Tuple((fields.Float(), fields.Float(), fields.Float()))
    translation = fields.Tuple((fields.Float(), fields.Float(), fields.Float()))

    @post_load
    def make_block(self, data, **kwargs):
        return MovingBlock(**data)


class NoiseSpecSchema(StrictSchema):
    flow_sigma = fields.Float(validate=non_negative)
    baseline_sigma = fields.Float(validate=non_negative)
    d_rel_scale = fields.Float(validate=positive)
    d_rel_shift = fields.Float()

    @post_load
    def make_noise(self, data, **kwargs):
        return NoiseSpec(**data)


class SceneSpecSchema(StrictSchema):
    """Constant-motion scene file for ``synth --scene``"""
    intrinsics = fields.Nested(IntrinsicsSchema, required=True)
    frame_count = fields.Int(required=True, validate=validate.Range(min=2))
    rotvec = fields.Tuple((fields.Float(), fields.Float(), fields.Float()), required=True)
    translation = fields.Tuple((fields.Float(), fields.Float(), fields.Float()), required=True)
    planes = fields.List(fields.Nested(PlaneSchema), load_default=list)
    height_field = fields.Nested(HeightFieldSchema, allow_none=True, load_default=None)
    alpha = fields.Float(validate=positive, load_default=3.0)
    depth_range = fields.Tuple((fields.Float(), fields.Float()), load_default=(0.5, 80.0))
    block = fields.Nested(MovingBlockSchema, allow_none=True, load_default=None)
    noise = fields.Nested(NoiseSpecSchema, load_default=None, allow_none=True)
    seed = fields.Int(validate=non_negative, load_default=0)

    @post_load
    def make_scene(self, data, **kwargs):
        intrinsics = data.pop('intrinsics')
        frame_count = data.pop('frame_count')
        rotvec = data.pop('rotvec')
        translation = data.pop('translation')
        data['planes'] = tuple(data['planes'])
        if data['noise'] is None:
            data['noise'] = NoiseSpec()
        try:
            return SceneSpec.constant_motion(intrinsics, frame_count, rotvec, translation, **data)
        except ValueError as e:
            raise ValidationError(str(e)) from e
