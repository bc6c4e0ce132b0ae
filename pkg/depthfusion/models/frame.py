from dataclasses import dataclass, field, asdict


@dataclass(frozen=True)
class OdometryRecord:
    timestamp: float
    baseline: float
    source: str = 'odometry'


@dataclass(frozen=True)
class FrameInput:
    """One manifest entry; paths are relative to the sequence directory"""
    index: int
    timestamp: float
    image: str
    inverse_depth: str
    flow: str = None          # backward flow into the previous frame; absent on frame 0
    gt_depth: str = None


@dataclass
class FrameData:
    """Frame rasters loaded from disk"""
    index: int
    timestamp: float
    image: object
    d_rel: object
    flow: object = None
    baseline: float = None
    association_residual: float = None


@dataclass
class FrameRecord:
    """Per-frame output record, one metrics line each"""
    index: int
    status: str
    reason: str = None
    inlier_ratio: float = None
    alpha: float = None
    rho_median: float = None
    global_scale: float = None
    gate_rejection_rate: float = None
    baseline: float = None
    abs_rel: float = None
    delta1: float = None
    tae_pair: float = None
    timings: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


@dataclass
class FrameOutput:
    """Everything the frame loop produced for one frame"""
    index: int
    depth: object                 # ScalarMap; all-invalid for uninitialized frames
    record: FrameRecord
    hypothesis: object = None
    segments: object = None
    pose: object = None           # pose used to warp the previous posterior, None for frame 0
