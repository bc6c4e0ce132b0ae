import numpy as np

from utils.constants import INVERSE_DEPTH_FLOOR


def _frozen(array, dtype):
    array = np.array(array, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


class PixelGridMap:
    """Row-major raster with a per-pixel validity mask.

    ``values`` is (H, W) for scalar maps and (H, W, C) for vector maps.
    Invalid pixels keep whatever value they hold but must never be read as data.
    """
    dtype = np.float32

    def __init__(self, values, mask=None):
        values = _frozen(values, self.dtype)
        if values.ndim not in (2, 3):
            raise ValueError("PixelGridMap values must be (H, W) or (H, W, C)")

        finite = np.isfinite(values) if values.ndim == 2 else np.isfinite(values).all(axis=2)
        if mask is None:
            mask = finite
        else:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != values.shape[:2]:
                raise ValueError("Mask shape does not match raster shape")
            mask = mask & finite

        self.values = values
        self.mask = _frozen(mask, bool)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape[:2]

    @property
    def valid_count(self):
        return int(self.mask.sum())

    def valid_values(self):
        return self.values[self.mask]

    def filled(self, fill=np.nan):
        """Copy of the values with invalid pixels replaced by ``fill``"""
        out = np.array(self.values, dtype=self.dtype, copy=True)
        out[~self.mask] = fill
        return out

    def to_dict(self):
        return {
            'width': self.width,
            'height': self.height,
            'valid_count': self.valid_count
        }

    def __repr__(self):
        return f'{type(self).__name__}({self.width}x{self.height}, valid={self.valid_count})'


class ScalarMap(PixelGridMap):
    """Scalar float32 raster (depth, scale, variance, Sampson residual)"""

    def __init__(self, values, mask=None):
        super().__init__(values, mask)
        if self.values.ndim != 2:
            raise ValueError("ScalarMap values must be (H, W)")


class LabelMap(PixelGridMap):
    dtype = np.int32


class RelativeDepthMap(ScalarMap):
    """Affine-invariant relative depth d_rel; valid entries are strictly positive"""

    def __init__(self, values, mask=None):
        super().__init__(values, mask)
        positive = self.values > 0
        if not np.array_equal(self.mask & positive, self.mask):
            self.mask = _frozen(self.mask & positive, bool)

    @classmethod
    def from_inverse_depth(cls, inverse_depth, floor=INVERSE_DEPTH_FLOOR):
        """Invert network inverse depth; pixels at the floor (sky) are masked"""
        inverse_depth = np.asarray(inverse_depth, dtype=np.float64)
        finite = np.isfinite(inverse_depth)
        clipped = np.maximum(np.where(finite, inverse_depth, floor), floor)
        mask = finite & (inverse_depth > floor)
        return cls(1.0 / clipped, mask)

    def to_inverse_depth(self):
        return np.where(self.mask, 1.0 / np.where(self.mask, self.values, 1.0), 0.0).astype(np.float32)

    def scaled(self, factor):
        return RelativeDepthMap(self.values * factor, self.mask)


class FlowField(PixelGridMap):
    """Backward optical flow on the frame-i grid: x_{i-1} = x_i + f(x_i), in pixels.

    Pixels whose target falls outside the frame are masked; ``payload_mask``
    keeps the validity the values arrived with, so their vectors survive a
    write. ``synthetic`` marks pixels whose flow was replaced by a motion-field
    prediction.
    """

    def __init__(self, values, mask=None, synthetic=None):
        super().__init__(values, mask)
        if self.values.ndim != 3 or self.values.shape[2] != 2:
            raise ValueError("FlowField values must be (H, W, 2)")
        self.payload_mask = self.mask

        rows, cols = np.indices(self.shape)
        target_u = cols + self.values[..., 0]
        target_v = rows + self.values[..., 1]
        inside = (target_u >= 0) & (target_u <= self.width - 1) & \
                 (target_v >= 0) & (target_v <= self.height - 1)
        self.mask = _frozen(self.mask & inside, bool)

        if synthetic is None:
            synthetic = np.zeros(self.shape, dtype=bool)
        self.synthetic = _frozen(np.asarray(synthetic, dtype=bool) & self.mask, bool)

    @property
    def u(self):
        return self.values[..., 0]

    @property
    def v(self):
        return self.values[..., 1]

    def magnitude(self):
        return np.hypot(self.u, self.v)

    def to_dict(self):
        result = super().to_dict()
        result['synthetic_count'] = int(self.synthetic.sum())
        return result
