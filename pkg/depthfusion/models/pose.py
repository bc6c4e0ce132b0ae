import numpy as np
from scipy.spatial.transform import Rotation

from utils.validators import validate_rotation


class Pose:
    """Relative camera motion between frames i-1 and i.

    Points map as p_i = rotation @ p_{i-1} + translation; translation is metric
    (meters), ``baseline`` is its norm and ``t_hat`` its unit direction.
    A rotation-only pose has baseline 0 and a zero direction.
    """

    def __init__(self, rotation, translation):
        rotation = np.array(rotation, dtype=np.float64)
        error = validate_rotation(rotation)
        if error:
            raise ValueError(error)
        translation = np.array(translation, dtype=np.float64).reshape(3)

        self.rotation = rotation
        self.translation = translation
        self.baseline = float(np.linalg.norm(translation))
        if self.baseline > 0:
            self.t_hat = translation / self.baseline
        else:
            self.t_hat = np.zeros(3)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_rotvec(cls, rotvec, translation):
        return cls(Rotation.from_rotvec(np.asarray(rotvec, dtype=np.float64)).as_matrix(), translation)

    @classmethod
    def from_direction(cls, rotation, t_hat, baseline):
        """T = b * T_hat"""
        return cls(rotation, baseline * np.asarray(t_hat, dtype=np.float64))

    @property
    def rotvec(self):
        return Rotation.from_matrix(self.rotation).as_rotvec()

    @property
    def rotation_angle(self):
        return float(np.linalg.norm(self.rotvec))

    def inverse(self):
        rotation_t = self.rotation.T
        return Pose(rotation_t, -rotation_t @ self.translation)

    def compose(self, other):
        """Pose of ``other`` applied after ``self`` (i-1 -> i -> i+1)"""
        return Pose(other.rotation @ self.rotation, other.rotation @ self.translation + other.translation)

    def transform(self, points):
        """Apply to (..., 3) points"""
        return points @ self.rotation.T + self.translation

    def to_dict(self):
        return {
            'rotation': self.rotation.tolist(),
            'translation': self.translation.tolist(),
            'baseline': self.baseline
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data['rotation'], data['translation'])

    def __repr__(self):
        return f'Pose(angle={self.rotation_angle:.6f} rad, T={self.translation.tolist()})'
