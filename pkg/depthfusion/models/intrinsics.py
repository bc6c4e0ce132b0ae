from dataclasses import dataclass

import numpy as np

from utils.validators import validate_intrinsics


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole calibration in pixels"""
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        error = validate_intrinsics(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
        if error:
            raise ValueError(error)

    @property
    def matrix(self):
        return np.array([
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0]
        ])

    @property
    def inverse(self):
        return np.array([
            [1.0 / self.fx, 0.0, -self.cx / self.fx],
            [0.0, 1.0 / self.fy, -self.cy / self.fy],
            [0.0, 0.0, 1.0]
        ])

    @property
    def focal_product(self):
        return self.fx * self.fy

    def scaled(self, factor):
        """Intrinsics for an image resampled by ``factor`` (pixel-centre convention ignored)"""
        return Intrinsics(
            fx=self.fx * factor,
            fy=self.fy * factor,
            cx=self.cx * factor,
            cy=self.cy * factor,
            width=int(round(self.width * factor)),
            height=int(round(self.height * factor))
        )

    def to_dict(self):
        return {
            'fx': self.fx,
            'fy': self.fy,
            'cx': self.cx,
            'cy': self.cy,
            'width': self.width,
            'height': self.height
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            fx=float(data['fx']),
            fy=float(data['fy']),
            cx=float(data['cx']),
            cy=float(data['cy']),
            width=int(data['width']),
            height=int(data['height'])
        )
