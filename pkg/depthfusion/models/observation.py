import numpy as np

from models.raster import ScalarMap
from utils.robust_stats import lower_median


class TriangulatedDepth(ScalarMap):
    """Metric depth Z_tri on the frame-i grid; masked where triangulation failed"""

    def __init__(self, values, mask=None):
        values = np.asarray(values, dtype=np.float32)
        if mask is None:
            mask = np.isfinite(values)
        mask = np.asarray(mask, dtype=bool) & np.isfinite(values) & (values > 0)
        super().__init__(values, mask)


class SampsonMap(ScalarMap):
    """Per-pixel Sampson residual rho (squared pixels) and its frame median"""

    def __init__(self, values, mask=None, median=None):
        super().__init__(values, mask)
        if median is None:
            valid = self.valid_values()
            median = lower_median(valid) if valid.size else float('nan')
        self.median = float(median)

    def to_dict(self):
        result = super().to_dict()
        result['median'] = self.median
        return result
