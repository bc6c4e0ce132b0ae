from dataclasses import dataclass, field

import numpy as np

from models.intrinsics import Intrinsics


@dataclass(frozen=True)
class Plane:
    """World plane normal . X = offset, optionally clipped to an X/Y box"""
    normal: tuple = (0.0, 0.0, 1.0)
    offset: float = 10.0
    color: tuple = (128, 128, 128)
    scale: float = None               # per-surface true scale; None uses the scene alpha
    bounds: tuple = None              # (x_min, x_max, y_min, y_max) in world coordinates

    @classmethod
    def fronto_parallel(cls, depth, **kwargs):
        return cls(normal=(0.0, 0.0, 1.0), offset=float(depth), **kwargs)


@dataclass(frozen=True)
class HeightField:
    """Surface Z = base + amplitude * sin(2 pi X / wavelength) * sin(2 pi Y / wavelength)"""
    base: float = 12.0
    amplitude: float = 0.5
    wavelength: float = 6.0
    color: tuple = (90, 140, 90)
    scale: float = None
    iterations: int = 60

    def height(self, x, y):
        k = 2.0 * np.pi / self.wavelength
        return self.base + self.amplitude * np.sin(k * x) * np.sin(k * y)


@dataclass(frozen=True)
class MovingBlock:
    """Rectangle of frame-i pixels whose content moves with its own relative pose"""
    fraction: float = 0.3
    rotvec: tuple = (0.0, 0.02, 0.0)
    translation: tuple = (0.4, 0.0, 0.0)


@dataclass(frozen=True)
class NoiseSpec:
    flow_sigma: float = 0.0           # pixels
    baseline_sigma: float = 0.0       # relative, multiplicative
    d_rel_scale: float = 1.0          # affine distortion of d_rel
    d_rel_shift: float = 0.0

    @property
    def is_zero(self):
        return (self.flow_sigma == 0 and self.baseline_sigma == 0
                and self.d_rel_scale == 1.0 and self.d_rel_shift == 0)


@dataclass(frozen=True)
class SceneSpec:
    """Synthetic rigid scene plus camera trajectory.

    Camera k maps world points as X_k = R_k X + t_k with R_0 = I, t_0 = 0 and
    R_k = Omega_k R_{k-1}, t_k = Omega_k t_{k-1} + T_k for the step motions.
    """
    intrinsics: Intrinsics
    planes: tuple = ()
    height_field: HeightField = None
    rotvecs: tuple = ()
    translations: tuple = ()
    alpha: float = 3.0
    depth_range: tuple = (0.5, 80.0)
    block: MovingBlock = None
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0

    def __post_init__(self):
        if len(self.rotvecs) != len(self.translations):
            raise ValueError("rotvecs and translations must have one entry per step")
        if not self.planes and self.height_field is None:
            raise ValueError("Scene needs at least one surface")

    @classmethod
    def constant_motion(cls, intrinsics, frame_count, rotvec, translation, **kwargs):
        steps = max(frame_count - 1, 0)
        return cls(
            intrinsics=intrinsics,
            rotvecs=tuple(tuple(float(c) for c in rotvec) for _ in range(steps)),
            translations=tuple(tuple(float(c) for c in translation) for _ in range(steps)),
            **kwargs
        )

    @property
    def frame_count(self):
        return len(self.rotvecs) + 1

    @property
    def surfaces(self):
        surfaces = list(self.planes)
        if self.height_field is not None:
            surfaces.append(self.height_field)
        return surfaces

    def surface_scale(self, index):
        scale = self.surfaces[index].scale
        return self.alpha if scale is None else float(scale)


@dataclass
class FramePair:
    """Ground truth for frames k-1 and k, everything on its own frame grid"""
    index: int
    flow: object
    pose: object
    baseline: float
    d_rel_prev: object
    d_rel_curr: object
    depth_prev: object
    depth_curr: object
    image_prev: np.ndarray
    image_curr: np.ndarray
    scale_curr: object
    outlier_mask: np.ndarray


@dataclass
class RenderedFrame:
    """Float64 ground truth of one frame; NaN marks pixels with no surface in range"""
    index: int
    depth: np.ndarray
    surface: np.ndarray       # surface index per pixel, -1 where invalid
    scale: np.ndarray         # true scale of the surface under each pixel
    image: np.ndarray
