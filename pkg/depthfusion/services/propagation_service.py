import logging

import numpy as np

from models.pipeline_config import PropagationConfig
from models.prior import WarpedPrior
from models.raster import ScalarMap
from services.geometry_service import GeometryService
from utils.constants import DEPTH_EPSILON
from utils.robust_stats import lower_median

logger = logging.getLogger(__name__)


class PropagationService:
    """Forward splatting of the previous posterior into the current frame"""

    @staticmethod
    def splat(depth, mask, pose, intrinsics, payload=None, with_landing=False):
        """Z-buffered nearest-pixel splat of a depth raster under ``pose``.

        Returns the target depth buffer and, if given, the payload carried with
        each winning source pixel. Ties at equal depth go to the lower source index.
        With ``with_landing`` a third item holds the sub-pixel (u, v) where each
        winning point landed, shape (H, W, 2), NaN on empty targets.
        """
        height, width = intrinsics.height, intrinsics.width
        source = np.flatnonzero(mask)
        z_buffer = np.full(height * width, np.nan)
        carried = np.full(height * width, np.nan) if payload is not None else None
        landing = np.full((height * width, 2), np.nan) if with_landing else None

        if source.size > 0:
            points = GeometryService.backproject(depth, intrinsics).reshape(-1, 3)[source]
            u, v, z = GeometryService.project(pose.transform(points), intrinsics)
            col = np.rint(u)
            row = np.rint(v)
            inside = np.isfinite(col) & np.isfinite(row) & (z > DEPTH_EPSILON) & \
                     (col >= 0) & (col < width) & (row >= 0) & (row < height)

            source, z, u, v = source[inside], z[inside], u[inside], v[inside]
            target = row[inside].astype(np.int64) * width + col[inside].astype(np.int64)

            order = np.lexsort((source, z, target))
            target, z, source, u, v = target[order], z[order], source[order], u[order], v[order]
            first = np.ones(target.size, dtype=bool)
            first[1:] = target[1:] != target[:-1]

            z_buffer[target[first]] = z[first]
            if carried is not None:
                carried[target[first]] = np.asarray(payload, dtype=np.float64).ravel()[source[first]]
            if landing is not None:
                landing[target[first], 0] = u[first]
                landing[target[first], 1] = v[first]

        result = (z_buffer.reshape(height, width), None if carried is None else carried.reshape(height, width))
        if with_landing:
            return result + (landing.reshape(height, width, 2),)
        return result

    @staticmethod
    def relative_depth_at(d_rel, u, v, max_spread):
        """d_rel at sub-pixel positions, bilinear in inverse depth.

        Inverse depth is affine in the image over a plane, so the interpolation
        is exact there. Where the 2x2 stencil leaves the valid mask or its
        relative spread exceeds ``max_spread`` the nearest pixel is used.
        """
        height, width = d_rel.shape
        values = d_rel.values.astype(np.float64)
        u = np.clip(np.asarray(u, dtype=np.float64), 0.0, width - 1.0)
        v = np.clip(np.asarray(v, dtype=np.float64), 0.0, height - 1.0)

        col = np.minimum(np.floor(u).astype(np.int64), max(width - 2, 0))
        row = np.minimum(np.floor(v).astype(np.int64), max(height - 2, 0))
        fu, fv = u - col, v - row
        col1, row1 = np.minimum(col + 1, width - 1), np.minimum(row + 1, height - 1)

        stencil = np.stack([values[row, col], values[row, col1], values[row1, col], values[row1, col1]])
        stencil_valid = np.stack([d_rel.mask[row, col], d_rel.mask[row, col1],
                                  d_rel.mask[row1, col], d_rel.mask[row1, col1]]).all(axis=0)
        with np.errstate(divide='ignore', invalid='ignore'):
            smooth = stencil_valid & (stencil.max(axis=0) <= (1.0 + max_spread) * stencil.min(axis=0))
            inverse = 1.0 / stencil
            weights = np.stack([(1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv])
            interpolated = 1.0 / (weights * inverse).sum(axis=0)

        nearest = values[np.rint(v).astype(np.int64), np.rint(u).astype(np.int64)]
        return np.where(smooth, interpolated, nearest)

    @staticmethod
    def warp_depth(depth, pose, intrinsics):
        """Depth-only warp of a ScalarMap into the next frame"""
        values = depth.values.astype(np.float64)
        z_buffer, _ = PropagationService.splat(values, depth.mask & (values > 0), pose, intrinsics)
        return ScalarMap(z_buffer.astype(np.float32))

    @staticmethod
    def warp_posterior(z_post, v_post, pose, intrinsics, d_rel, cfg=None):
        """WarpedPrior on the current grid; S_prior * d_rel == Z_prior in float32.

        The carried scale is the splatted depth over d_rel at the point where it
        landed (``interpolate``) or at the target pixel.
        """
        cfg = cfg or PropagationConfig()
        source_mask = z_post.mask & v_post.mask & (z_post.values > 0)
        z_buffer, v_buffer, landing = PropagationService.splat(
            z_post.values.astype(np.float64), source_mask, pose, intrinsics, payload=v_post.values,
            with_landing=True)

        coverage = np.isfinite(z_buffer) & np.isfinite(v_buffer) & d_rel.mask
        if cfg.interpolate:
            d_landing = PropagationService.relative_depth_at(
                d_rel, landing[..., 0][coverage], landing[..., 1][coverage], cfg.stencil_spread)
        else:
            d_landing = d_rel.values[coverage].astype(np.float64)

        s_prior = np.full(coverage.shape, np.nan, dtype=np.float32)
        s_prior[coverage] = (z_buffer[coverage] / d_landing).astype(np.float32)
        z_prior = np.full(coverage.shape, np.nan, dtype=np.float32)
        z_prior[coverage] = s_prior[coverage] * d_rel.values[coverage]
        v_prior = np.where(coverage, v_buffer, np.nan).astype(np.float32)

        carried = v_prior[coverage]
        fill_variance = cfg.fill_factor * lower_median(carried) if carried.size else 0.0
        logger.debug('Warped prior covers %d of %d pixels', int(coverage.sum()), coverage.size)
        return WarpedPrior(
            z_prior=ScalarMap(z_prior, coverage),
            s_prior=ScalarMap(s_prior, coverage),
            v_prior=ScalarMap(v_prior, coverage),
            coverage=coverage,
            fill_variance=fill_variance
        )
