from dataclasses import dataclass

import numpy as np

from models.pose import Pose
from utils.constants import BASELINE_FLOOR, TRANSLATION_FLOOR


@dataclass(frozen=True)
class MotionSample:
    """One flow correspondence used by the motion solver"""
    pixel_index: int
    x: float
    y: float
    flow: np.ndarray        # normalized units
    flow_px: np.ndarray     # pixels
    d_rel: float
    cell: int
    depth_bin: int
    focal: tuple = (1.0, 1.0)


class MotionSampleSet:
    """Struct-of-arrays batch of MotionSample, read-only during RANSAC"""

    def __init__(self, pixel_index, x, y, flow, flow_px, d_rel, cell, depth_bin, total_cells,
                 focal=(1.0, 1.0)):
        self.pixel_index = np.asarray(pixel_index, dtype=np.int64)
        self.x = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.flow = np.asarray(flow, dtype=np.float64).reshape(-1, 2)
        self.flow_px = np.asarray(flow_px, dtype=np.float64).reshape(-1, 2)
        self.d_rel = np.asarray(d_rel, dtype=np.float64)
        self.cell = np.asarray(cell, dtype=np.int64)
        self.depth_bin = np.asarray(depth_bin, dtype=np.int64)
        self.total_cells = int(total_cells)
        self.focal = (float(focal[0]), float(focal[1]))
        for array in (self.pixel_index, self.x, self.y, self.flow, self.flow_px,
                      self.d_rel, self.cell, self.depth_bin):
            array.setflags(write=False)

    @classmethod
    def from_samples(cls, samples, total_cells, focal=None):
        samples = list(samples)
        if focal is None:
            focal = samples[0].focal if samples else (1.0, 1.0)
        return cls(
            pixel_index=[s.pixel_index for s in samples],
            x=[s.x for s in samples],
            y=[s.y for s in samples],
            flow=[s.flow for s in samples],
            flow_px=[s.flow_px for s in samples],
            d_rel=[s.d_rel for s in samples],
            cell=[s.cell for s in samples],
            depth_bin=[s.depth_bin for s in samples],
            total_cells=total_cells,
            focal=focal
        )

    def __len__(self):
        return self.x.size

    def __getitem__(self, i):
        return MotionSample(
            pixel_index=int(self.pixel_index[i]),
            x=float(self.x[i]),
            y=float(self.y[i]),
            flow=self.flow[i].copy(),
            flow_px=self.flow_px[i].copy(),
            d_rel=float(self.d_rel[i]),
            cell=int(self.cell[i]),
            depth_bin=int(self.depth_bin[i]),
            focal=self.focal
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def subset(self, index):
        return MotionSampleSet(
            self.pixel_index[index], self.x[index], self.y[index], self.flow[index],
            self.flow_px[index], self.d_rel[index], self.cell[index], self.depth_bin[index],
            self.total_cells, self.focal
        )

    def scaled_depth(self, factor):
        return MotionSampleSet(
            self.pixel_index, self.x, self.y, self.flow, self.flow_px, self.d_rel * factor,
            self.cell, self.depth_bin, self.total_cells, self.focal
        )

    def flow_magnitude_px(self):
        return np.linalg.norm(self.flow_px, axis=1)


@dataclass(frozen=True)
class LinearSystem:
    """Stacked motion constraints: design (2N, 6) against [omega; V], rhs (2N,)"""
    design: np.ndarray
    rhs: np.ndarray

    @property
    def singular_values(self):
        return np.linalg.svd(self.design, compute_uv=False)

    def rank(self, tol=1e-10):
        s = self.singular_values
        if s.size == 0 or s[0] == 0:
            return 0
        return int(np.sum(s > tol * s[0]))


@dataclass(frozen=True)
class MotionSolution:
    omega: np.ndarray
    v: np.ndarray
    residual_norm: float

    @property
    def degenerate(self):
        return float(np.linalg.norm(self.v)) < TRANSLATION_FLOOR


@dataclass(frozen=True)
class MotionHypothesis:
    """Motion estimate. V solves T / alpha, so T_hat = V / |V| and alpha = b / |V|."""
    omega: np.ndarray
    v: np.ndarray
    baseline: float
    inlier_mask: np.ndarray
    covered_cells: int
    total_cells: int
    eta: float
    angle_threshold: float
    residual_norm: float = 0.0
    model: str = 'linear'

    @property
    def t_hat(self):
        norm = float(np.linalg.norm(self.v))
        if norm < TRANSLATION_FLOOR:
            return np.zeros(3)
        return self.v / norm

    @property
    def alpha(self):
        norm = float(np.linalg.norm(self.v))
        if norm < TRANSLATION_FLOOR or self.baseline < BASELINE_FLOOR:
            return float('nan')
        return self.baseline / norm

    @property
    def inlier_count(self):
        return int(np.count_nonzero(self.inlier_mask))

    @property
    def inlier_ratio(self):
        total = self.inlier_mask.size
        return self.inlier_count / total if total else 0.0

    @property
    def score(self):
        """Inlier count weighted by the fraction of grid cells the inliers cover"""
        if self.total_cells == 0:
            return 0.0
        return self.inlier_count * (self.covered_cells / self.total_cells)

    def to_pose(self):
        return Pose.from_rotvec(self.omega, self.baseline * self.t_hat)

    def to_dict(self):
        return {
            'omega': self.omega.tolist(),
            'v': self.v.tolist(),
            't_hat': self.t_hat.tolist(),
            'alpha': self.alpha,
            'baseline': self.baseline,
            'inlier_count': self.inlier_count,
            'inlier_ratio': self.inlier_ratio,
            'covered_cells': self.covered_cells,
            'score': self.score,
            'eta': self.eta,
            'angle_threshold': self.angle_threshold,
            'model': self.model
        }
