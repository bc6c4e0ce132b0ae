import logging

import numpy as np

from models.observation import SampsonMap, TriangulatedDepth
from models.pipeline_config import TriangulationConfig
from services.geometry_service import GeometryService
from utils.constants import BASELINE_FLOOR, SAMPSON_DENOMINATOR_FLOOR
from utils.exceptions import (
    EmptyObservationError, GeometryDegeneracyError, NearParallelRaysError, ZeroTranslationError
)

logger = logging.getLogger(__name__)


def skew(vector):
    x, y, z = np.asarray(vector, dtype=np.float64)
    return np.array([
        [0.0, -z, y],
        [z, 0.0, -x],
        [-y, x, 0.0]
    ])


class TriangulationService:

    @staticmethod
    def fundamental_matrix(pose, intrinsics):
        """F = K^-T [T]x R K^-1, so that x_i^T F x_{i-1} = 0"""
        if pose.baseline == 0:
            raise ZeroTranslationError()
        k_inv = intrinsics.inverse
        return k_inv.T @ skew(pose.translation) @ pose.rotation @ k_inv

    @staticmethod
    def triangulate_rays(ray_prev, ray_curr, pose, min_ray_sine):
        """Two-ray least squares on (..., 3) normalized rays.

        Minimizes |z_prev R x_prev + T - z_curr x_curr| in closed form and
        returns (z_prev, z_curr, ok); ok is False for near-parallel rays and
        for points behind either camera.
        """
        a = np.asarray(ray_prev, dtype=np.float64) @ pose.rotation.T
        c = np.asarray(ray_curr, dtype=np.float64)
        t = pose.translation

        aa = np.sum(a * a, axis=-1)
        cc = np.sum(c * c, axis=-1)
        ac = np.sum(a * c, axis=-1)
        at = a @ t
        ct = c @ t

        det = aa * cc - ac * ac
        with np.errstate(divide='ignore', invalid='ignore'):
            sine = np.sqrt(np.maximum(det, 0.0) / (aa * cc))
            z_prev = (-at * cc + ac * ct) / det
            z_curr = (aa * ct - ac * at) / det

        ok = (sine >= min_ray_sine) & np.isfinite(z_prev) & np.isfinite(z_curr) & (z_prev > 0) & (z_curr > 0)
        return z_prev, z_curr, ok

    @staticmethod
    def triangulate_pair(x_prev, x_curr, pose, intrinsics, min_ray_sine=1e-4):
        """Metric depths of one pixel correspondence in both frames"""
        u_prev, v_prev = x_prev
        u_curr, v_curr = x_curr
        ray_prev = np.array([*GeometryService.normalize_pixel(u_prev, v_prev, intrinsics), 1.0], dtype=np.float64)
        ray_curr = np.array([*GeometryService.normalize_pixel(u_curr, v_curr, intrinsics), 1.0], dtype=np.float64)

        z_prev, z_curr, ok = TriangulationService.triangulate_rays(ray_prev, ray_curr, pose, min_ray_sine)
        if not ok:
            raise NearParallelRaysError(f'({u_curr}, {v_curr})')
        return float(z_prev), float(z_curr)

    @staticmethod
    def sampson_residual(x_prev, x_curr, fundamental):
        """Sampson error in squared pixels of (..., 2) pixel pairs; +inf where undefined"""
        x_prev = np.asarray(x_prev, dtype=np.float64)
        x_curr = np.asarray(x_curr, dtype=np.float64)
        ones = np.ones(x_prev.shape[:-1] + (1,))
        h_prev = np.concatenate([x_prev, ones], axis=-1)
        h_curr = np.concatenate([x_curr, ones], axis=-1)

        f_prev = h_prev @ fundamental.T          # F x_{i-1}
        f_curr = h_curr @ fundamental            # F^T x_i
        numerator = np.sum(h_curr * f_prev, axis=-1) ** 2
        denominator = f_prev[..., 0] ** 2 + f_prev[..., 1] ** 2 + f_curr[..., 0] ** 2 + f_curr[..., 1] ** 2

        with np.errstate(divide='ignore', invalid='ignore'):
            rho = numerator / denominator
        return np.where(denominator > SAMPSON_DENOMINATOR_FLOOR, rho, np.inf)

    @staticmethod
    def build_observation(flow, pose, intrinsics, d_rel=None, cfg=None):
        """Triangulated depth and Sampson map on the frame-i grid.

        Only pixels with flow (and relative depth, when given) are triangulated.
        Pixels carrying fused-in (synthetic) flow get rho <- penalty * max(rho, floor).
        """
        cfg = cfg or TriangulationConfig()
        if pose.baseline < BASELINE_FLOOR:
            raise EmptyObservationError('rotation-only pose')

        candidates = flow.mask if d_rel is None else flow.mask & d_rel.mask
        rows, cols = np.nonzero(candidates)
        u = cols.astype(np.float64)
        v = rows.astype(np.float64)
        u_prev = u + flow.u[rows, cols]
        v_prev = v + flow.v[rows, cols]

        ones = np.ones_like(u)
        ray_curr = np.stack([*GeometryService.normalize_pixel(u, v, intrinsics), ones], axis=-1)
        ray_prev = np.stack([*GeometryService.normalize_pixel(u_prev, v_prev, intrinsics), ones], axis=-1)
        _, z_curr, ok = TriangulationService.triangulate_rays(ray_prev, ray_curr, pose, cfg.min_ray_sine)

        fundamental = TriangulationService.fundamental_matrix(pose, intrinsics)
        rho = TriangulationService.sampson_residual(
            np.stack([u_prev, v_prev], axis=-1), np.stack([u, v], axis=-1), fundamental)
        synthetic = flow.synthetic[rows, cols]
        rho = np.where(synthetic, cfg.synthetic_penalty * np.maximum(rho, cfg.synthetic_rho_floor), rho)

        kept = ok & np.isfinite(rho)
        valid = np.zeros(candidates.shape, dtype=bool)
        valid[rows[kept], cols[kept]] = True

        minimum = cfg.min_valid_fraction * valid.size
        if np.count_nonzero(kept) < minimum:
            raise EmptyObservationError(f'{int(np.count_nonzero(kept))} pixels, need {int(np.ceil(minimum))}')

        depth_values = np.full(candidates.shape, np.nan, dtype=np.float32)
        depth_values[rows[kept], cols[kept]] = z_curr[kept]
        rho_values = np.full(candidates.shape, np.nan, dtype=np.float32)
        rho_values[rows[kept], cols[kept]] = rho[kept]

        depth = TriangulatedDepth(depth_values, valid)
        sampson = SampsonMap(rho_values, valid)
        logger.debug('Triangulated %d pixels, median Sampson %.4g px^2', depth.valid_count, sampson.median)
        return depth, sampson

    @staticmethod
    def observe(flow, pose, intrinsics, d_rel, cfg):
        """build_observation returning ((depth, sampson), error)"""
        try:
            return TriangulationService.build_observation(flow, pose, intrinsics, d_rel, cfg), None
        except GeometryDegeneracyError as error:
            return None, error
