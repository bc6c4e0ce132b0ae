from dataclasses import dataclass

import numpy as np

from models.raster import LabelMap


class SegmentLabels(LabelMap):
    """Superpixel labels, contiguous 0..count-1 in first-occurrence raster order"""

    def __init__(self, values):
        values = np.asarray(values, dtype=np.int32)
        super().__init__(values, np.ones(values.shape, dtype=bool))
        if self.values.ndim != 2:
            raise ValueError("SegmentLabels values must be (H, W)")
        self.count = int(self.values.max()) + 1 if self.values.size else 0
        self.sizes = np.bincount(self.values.ravel(), minlength=self.count)

    def to_dict(self):
        result = super().to_dict()
        result['count'] = self.count
        return result


@dataclass(frozen=True)
class SegmentScale:
    """Per-segment consolidation report (arrays indexed by label)"""
    median: np.ndarray
    evidence: np.ndarray
    fit_error: np.ndarray
    accepted: np.ndarray
    global_scale: float

    @property
    def count(self):
        return self.median.size

    @property
    def accepted_count(self):
        return int(np.count_nonzero(self.accepted))

    def to_dict(self):
        return {
            'segments': self.count,
            'accepted': self.accepted_count,
            'global_scale': self.global_scale
        }
