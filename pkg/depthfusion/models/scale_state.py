import numpy as np

from models.raster import ScalarMap


class ScaleState:
    """Recursive filter state carried from frame to frame.

    ``s`` is the posterior scale field and ``v`` its variance (scale^2).
    ``sigma_e`` is the EMA-smoothed consistency tolerance and ``rho_median``
    the last frame-level Sampson median seen, reused to inflate the prior
    on frames without an observation.
    """

    def __init__(self, s, v, sigma_e=None, frame_index=0, global_scale=float('nan'), rho_median=0.0,
                 gate_rejection_rate=0.0):
        self.s = s
        self.v = v
        self.sigma_e = sigma_e
        self.frame_index = int(frame_index)
        self.global_scale = float(global_scale)
        self.rho_median = float(rho_median)
        self.gate_rejection_rate = float(gate_rejection_rate)

    @classmethod
    def empty(cls, shape):
        nan = np.full(shape, np.nan, dtype=np.float32)
        none = np.zeros(shape, dtype=bool)
        return cls(ScalarMap(nan, none), ScalarMap(nan, none))

    @property
    def initialized(self):
        return self.sigma_e is not None and self.s.valid_count > 0

    @property
    def shape(self):
        return self.s.shape

    def to_dict(self):
        return {
            'frame_index': self.frame_index,
            'valid_count': self.s.valid_count,
            'sigma_e': self.sigma_e,
            'global_scale': self.global_scale,
            'rho_median': self.rho_median,
            'gate_rejection_rate': self.gate_rejection_rate
        }
