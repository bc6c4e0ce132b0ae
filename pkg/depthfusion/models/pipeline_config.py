import math
from dataclasses import dataclass, field, asdict

from scipy.stats import chi2


@dataclass(frozen=True)
class RansacConfig:
    max_iterations: int = 256
    min_sample_size: int = 8
    tau: float = 1.0                  # flow-magnitude floor of the normalized residual (px)
    static_floor: float = 0.05        # flows shorter than this are not sampled (px)
    mad_multiplier: float = 3.0       # lambda in eta0 = median + lambda * MAD
    target_inlier_ratio: float = 0.6
    relax_factor: float = 1.1
    tighten_factor: float = 0.95
    eta_min: float = 0.02
    eta_max: float = 0.2              # cap on the normalized residual threshold
    angle_mad_multiplier: float = 3.0
    min_angle_threshold: float = math.radians(1.0)
    cells_per_axis: int = 4
    depth_bins: int = 3
    per_cell_cap: int = 10
    warmup_hypotheses: int = 16       # minimal solutions drawn before eta0 is fixed
    huber_iterations: int = 5
    early_exit_ratio: float = 0.8
    min_inlier_ratio: float = 0.2
    polish: bool = True
    polish_per_cell_cap: int = 200    # per-group cap of the denser draw the rigid polish runs on
    parallax_check: bool = False
    min_parallax_px: float = 0.5


@dataclass(frozen=True)
class TriangulationConfig:
    synthetic_penalty: float = 4.0
    synthetic_rho_floor: float = 0.25  # px^2
    min_ray_sine: float = 1e-4
    min_valid_fraction: float = 1e-3


@dataclass(frozen=True)
class PropagationConfig:
    fill_factor: float = 10.0          # V_fill = factor * median carried variance
    interpolate: bool = True           # sample d_rel where the splatted point landed
    stencil_spread: float = 0.05       # max relative d_rel spread of an interpolated 2x2 stencil


@dataclass(frozen=True)
class FusionConfig:
    enabled: bool = True
    sigma2: float = 1.0
    kappa_min: float = 0.1
    gate_probability: float = 0.99
    ema: float = 0.9
    obs_variance_floor: float = 1e-6
    init_variance_factor: float = 25.0

    @property
    def chi2_gate(self):
        """Chi-square threshold, 1 degree of freedom"""
        return float(chi2.ppf(self.gate_probability, df=1))


@dataclass(frozen=True)
class SegmentationConfig:
    enabled: bool = True
    engine: str = 'skimage'            # 'native' is the pure-Python reference
    k: float = 300.0
    min_size: int = 64
    sigma: float = 0.8
    depth_weight: float = 1.0
    min_evidence: int = 50
    evidence_fraction: float = 0.01
    max_fit_error: float = 0.2


@dataclass(frozen=True)
class EvaluationConfig:
    trim_fraction: float = 0.9
    near_window: tuple = (0.0, 20.0)
    far_window: tuple = (20.0, 80.0)
    delta_base: float = 1.25


@dataclass(frozen=True)
class OutputConfig:
    format: str = 'pfm'
    pointcloud: bool = False
    metrics: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    ransac: RansacConfig = field(default_factory=RansacConfig)
    triangulation: TriangulationConfig = field(default_factory=TriangulationConfig)
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self):
        return asdict(self)
