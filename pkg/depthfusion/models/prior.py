import numpy as np

from models.raster import ScalarMap


class WarpedPrior:
    """Previous posterior splatted into the current frame.

    Invariant on covered pixels: s_prior * d_rel == z_prior (z_prior is derived
    from s_prior, so the identity holds bit for bit).
    """

    def __init__(self, z_prior, s_prior, v_prior, coverage, fill_variance=0.0):
        self.z_prior = z_prior
        self.s_prior = s_prior
        self.v_prior = v_prior
        self.coverage = coverage
        self.fill_variance = float(fill_variance)

    @classmethod
    def empty(cls, shape):
        nan = np.full(shape, np.nan, dtype=np.float32)
        none = np.zeros(shape, dtype=bool)
        return cls(ScalarMap(nan, none), ScalarMap(nan, none), ScalarMap(nan, none), none)

    @property
    def covered_count(self):
        return int(self.coverage.sum())

    def to_dict(self):
        return {
            'covered_count': self.covered_count,
            'fill_variance': self.fill_variance
        }
