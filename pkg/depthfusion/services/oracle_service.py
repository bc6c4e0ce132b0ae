import logging
import os

import numpy as np

from models.frame import FrameInput, OdometryRecord
from models.intrinsics import Intrinsics
from models.pose import Pose
from models.raster import FlowField, RelativeDepthMap, ScalarMap
from models.scene import FramePair, HeightField, Plane, RenderedFrame, SceneSpec
from services.geometry_service import GeometryService
from services.io_service import IOService
from utils.constants import DEPTH_EPSILON
from utils import raster_io

logger = logging.getLogger(__name__)

FRAME_INTERVAL = 0.1          # seconds between synthetic frames
OCCLUSION_TOLERANCE = 0.02    # relative depth difference still counted as the same surface
BLOCK_COLOR = (230, 200, 40)


class OracleService:
    """Exact synthetic scenes: depth, backward flow, poses and noise"""

    @staticmethod
    def default_intrinsics(width=160, height=120):
        focal = 150.0 * width / 160.0
        return Intrinsics(fx=focal, fy=focal, cx=width / 2.0, cy=height / 2.0, width=width, height=height)

    @staticmethod
    def default_scene(frame_count=10, width=160, height=120, seed=0, alpha=3.0, piecewise_scale=False,
                      height_field=False, block=None, noise=None,
                      rotvec=(0.0, 0.004, 0.0), translation=(0.25, 0.0, -0.1)):
        """Background wall, ground plane, a box and a slanted wall under forward-lateral motion.

        With ``piecewise_scale`` every surface gets its own true scale, so
        S = Z / d_rel is piecewise constant across the image.
        """
        factors = (1.2, 1.0, 0.8, 1.1) if piecewise_scale else (None, None, None, None)
        scales = [None if f is None else alpha * f for f in factors]

        planes = (
            Plane.fronto_parallel(30.0, color=(70, 110, 200), scale=scales[0]),
            Plane(normal=(0.0, 1.0, 0.0), offset=1.5, color=(120, 100, 80), scale=scales[1]),
            Plane.fronto_parallel(8.0, color=(200, 60, 50), scale=scales[2], bounds=(-2.5, 0.5, -2.0, 1.5)),
            Plane(normal=(0.6, 0.0, 0.8), offset=12.0, color=(60, 170, 90), scale=scales[3],
                  bounds=(2.0, 12.0, -4.0, 1.5)),
        )
        field = HeightField(base=20.0, scale=scales[0]) if height_field else None

        kwargs = {'planes': planes, 'height_field': field, 'alpha': alpha, 'block': block, 'seed': seed}
        if noise is not None:
            kwargs['noise'] = noise
        return SceneSpec.constant_motion(OracleService.default_intrinsics(width, height), frame_count,
                                         rotvec, translation, **kwargs)

    @staticmethod
    def camera_poses(spec):
        """World-to-camera pose of every frame"""
        poses = [Pose.identity()]
        for rotvec, translation in zip(spec.rotvecs, spec.translations):
            poses.append(poses[-1].compose(Pose.from_rotvec(rotvec, translation)))
        return poses

    @staticmethod
    def relative_pose(spec, k):
        """Pose mapping frame k-1 points into frame k"""
        if not 1 <= k < spec.frame_count:
            raise ValueError(f"Frame {k} has no predecessor in a {spec.frame_count}-frame trajectory")
        return Pose.from_rotvec(spec.rotvecs[k - 1], spec.translations[k - 1])

    @staticmethod
    def _intersect_plane(plane, origin, direction):
        normal = np.asarray(plane.normal, dtype=np.float64)
        denom = direction @ normal
        with np.errstate(divide='ignore', invalid='ignore'):
            s = (plane.offset - normal @ origin) / denom
        s = np.where((np.abs(denom) > 1e-12) & (s > DEPTH_EPSILON), s, np.nan)

        if plane.bounds is not None:
            x_min, x_max, y_min, y_max = plane.bounds
            point = origin + s[..., None] * direction
            inside = (point[..., 0] >= x_min) & (point[..., 0] <= x_max) & \
                     (point[..., 1] >= y_min) & (point[..., 1] <= y_max)
            s = np.where(inside, s, np.nan)
        return s

    @staticmethod
    def _intersect_height_field(field, origin, direction):
        # fixed point on Z(s) = h(X(s), Y(s)); converges while the surface slope along the ray is below 1
        dz = direction[..., 2]
        usable = dz > 1e-12
        dz = np.where(usable, dz, 1.0)
        s = (field.base - origin[2]) / dz
        for _ in range(field.iterations):
            point = origin + s[..., None] * direction
            s = (field.height(point[..., 0], point[..., 1]) - origin[2]) / dz

        point = origin + s[..., None] * direction
        residual = np.abs(point[..., 2] - field.height(point[..., 0], point[..., 1]))
        converged = residual <= 1e-9 * np.maximum(1.0, np.abs(s))
        return np.where(usable & converged & (s > DEPTH_EPSILON), s, np.nan)

    @staticmethod
    def render_depth(spec, k):
        """(depth, surface index) of frame k by ray casting; out-of-range pixels are NaN / -1"""
        camera = OracleService.camera_poses(spec)[k]
        x, y = GeometryService.normalized_grid(spec.intrinsics)
        # unit z in the camera frame, so the ray parameter is the camera depth
        direction = np.stack([x, y, np.ones_like(x)], axis=-1) @ camera.rotation
        origin = -camera.rotation.T @ camera.translation

        depth = np.full(x.shape, np.inf)
        surface = np.full(x.shape, -1, dtype=np.int32)
        for index, item in enumerate(spec.surfaces):
            if isinstance(item, HeightField):
                s = OracleService._intersect_height_field(item, origin, direction)
            else:
                s = OracleService._intersect_plane(item, origin, direction)
            closer = np.isfinite(s) & (s < depth)
            depth = np.where(closer, s, depth)
            surface = np.where(closer, index, surface)

        low, high = spec.depth_range
        valid = np.isfinite(depth) & (depth >= low) & (depth <= high)
        return np.where(valid, depth, np.nan), np.where(valid, surface, -1).astype(np.int32)

    @staticmethod
    def block_mask(spec, k):
        """Rectangle of frame-k pixels that move independently; empty on frame 0"""
        intrinsics = spec.intrinsics
        mask = np.zeros((intrinsics.height, intrinsics.width), dtype=bool)
        if spec.block is None or k == 0 or spec.block.fraction <= 0:
            return mask

        area = spec.block.fraction * intrinsics.width * intrinsics.height
        block_width = min(intrinsics.width, max(1, int(round(np.sqrt(area * intrinsics.width / intrinsics.height)))))
        block_height = min(intrinsics.height, max(1, int(round(area / block_width))))

        rng = np.random.default_rng([spec.seed, k])
        u0 = int(rng.integers(0, intrinsics.width - block_width + 1))
        v0 = int(rng.integers(0, intrinsics.height - block_height + 1))
        mask[v0:v0 + block_height, u0:u0 + block_width] = True
        return mask

    @staticmethod
    def render_image(spec, depth, surface, block=None):
        """Flat per-surface colours darkened with distance"""
        colors = np.array([item.color for item in spec.surfaces] + [(0, 0, 0)], dtype=np.float64)
        shade = np.where(np.isfinite(depth), 0.6 + 0.4 * np.exp(-np.nan_to_num(depth) / 40.0), 0.0)
        image = colors[surface] * shade[..., None]
        if block is not None:
            image[block & (surface >= 0)] = BLOCK_COLOR
        return np.clip(np.rint(image), 0, 255).astype(np.uint8)

    @staticmethod
    def render_frame(spec, k):
        depth, surface = OracleService.render_depth(spec, k)
        scales = np.array([spec.surface_scale(i) for i in range(len(spec.surfaces))] + [np.nan])
        scale = np.where(surface >= 0, scales[surface], np.nan)
        image = OracleService.render_image(spec, depth, surface, OracleService.block_mask(spec, k))
        return RenderedFrame(index=k, depth=depth, surface=surface, scale=scale, image=image)

    @staticmethod
    def exact_flow(depth, pose, intrinsics):
        """Backward flow of a float64 depth raster by exact reprojection.

        Returns (flow (H, W, 2), valid, u_prev, v_prev, z_prev); points that land
        behind the previous camera are invalid.
        """
        points = GeometryService.backproject(depth, intrinsics)
        previous = (points - pose.translation) @ pose.rotation
        u_prev, v_prev, z_prev = GeometryService.project(previous, intrinsics)
        u, v = GeometryService.pixel_grid(intrinsics)

        flow = np.stack([u_prev - u, v_prev - v], axis=-1)
        with np.errstate(invalid='ignore'):
            valid = np.isfinite(depth) & np.all(np.isfinite(flow), axis=-1) & (z_prev > DEPTH_EPSILON)
        return flow, valid, u_prev, v_prev, z_prev

    @staticmethod
    def visible_in_previous(u_prev, v_prev, z_prev, depth_prev):
        """Depth test against the previous frame at the nearest pixel"""
        height, width = depth_prev.shape
        col = np.rint(u_prev)
        row = np.rint(v_prev)
        with np.errstate(invalid='ignore'):
            inside = np.isfinite(col) & np.isfinite(row) & (col >= 0) & (col < width) & (row >= 0) & (row < height)

        sampled = np.full(depth_prev.shape, np.nan)
        sampled[inside] = depth_prev[row[inside].astype(np.int64), col[inside].astype(np.int64)]
        with np.errstate(invalid='ignore'):
            return inside & np.isfinite(sampled) & (np.abs(z_prev - sampled) <= OCCLUSION_TOLERANCE * z_prev)

    @staticmethod
    def perturb(kind, value, noise, seed=0):
        """Noisy copy of a flow field, baseline or relative depth map"""
        rng = np.random.default_rng(seed)
        if kind == 'flow':
            values = value.values
            if noise.flow_sigma > 0:
                values = value.values.astype(np.float64) + rng.normal(0.0, noise.flow_sigma, value.values.shape)
            return FlowField(values, value.mask, value.synthetic)
        if kind == 'baseline':
            if noise.baseline_sigma == 0:
                return float(value)
            return max(float(value) * (1.0 + noise.baseline_sigma * rng.standard_normal()), 0.0)
        if kind == 'd_rel':
            if noise.d_rel_scale == 1.0 and noise.d_rel_shift == 0:
                return RelativeDepthMap(value.values, value.mask)
            values = noise.d_rel_scale * value.values.astype(np.float64) + noise.d_rel_shift
            return RelativeDepthMap(values, value.mask)
        raise ValueError(f"Unknown perturbation kind '{kind}'")

    @staticmethod
    def _pair(spec, k, prev, curr):
        intrinsics = spec.intrinsics
        pose = OracleService.relative_pose(spec, k)

        flow, valid, u_prev, v_prev, z_prev = OracleService.exact_flow(curr.depth, pose, intrinsics)
        valid &= OracleService.visible_in_previous(u_prev, v_prev, z_prev, prev.depth)

        outliers = OracleService.block_mask(spec, k) & np.isfinite(curr.depth)
        if outliers.any():
            block_pose = Pose.from_rotvec(spec.block.rotvec, spec.block.translation)
            block_flow, block_valid, _, _, _ = OracleService.exact_flow(curr.depth, block_pose, intrinsics)
            flow = np.where(outliers[..., None], block_flow, flow)
            valid = np.where(outliers, block_valid, valid)

        with np.errstate(invalid='ignore', divide='ignore'):
            d_rel_prev = RelativeDepthMap(prev.depth / prev.scale)
            d_rel_curr = RelativeDepthMap(curr.depth / curr.scale)
        flow_field = FlowField(flow, valid)
        baseline = pose.baseline

        if not spec.noise.is_zero:
            flow_field = OracleService.perturb('flow', flow_field, spec.noise, [spec.seed, k, 0])
            baseline = OracleService.perturb('baseline', baseline, spec.noise, [spec.seed, k, 1])
            d_rel_prev = OracleService.perturb('d_rel', d_rel_prev, spec.noise)
            d_rel_curr = OracleService.perturb('d_rel', d_rel_curr, spec.noise)

        return FramePair(
            index=k,
            flow=flow_field,
            pose=pose,
            baseline=baseline,
            d_rel_prev=d_rel_prev,
            d_rel_curr=d_rel_curr,
            depth_prev=ScalarMap(prev.depth),
            depth_curr=ScalarMap(curr.depth),
            image_prev=prev.image,
            image_curr=curr.image,
            scale_curr=ScalarMap(curr.scale),
            outlier_mask=outliers
        )

    @staticmethod
    def render_frame_pair(spec, k):
        """Ground truth for frames k-1 and k with backward flow on the frame-k grid"""
        pose = OracleService.relative_pose(spec, k)
        logger.debug('Rendering pair %d, baseline %.4f m', k, pose.baseline)
        return OracleService._pair(spec, k, OracleService.render_frame(spec, k - 1), OracleService.render_frame(spec, k))

    @staticmethod
    def render_sequence(spec):
        """FramePairs 1..T-1; frame 0 is available as the first pair's previous frame"""
        frames = [OracleService.render_frame(spec, k) for k in range(spec.frame_count)]
        return [OracleService._pair(spec, k, frames[k - 1], frames[k]) for k in range(1, spec.frame_count)]

    @staticmethod
    def dump_sequence(spec, directory):
        """Write a scene in the on-disk sequence layout read by ``run`` and ``eval``"""
        if spec.frame_count < 2:
            raise ValueError("A sequence needs at least two frames")
        pairs = OracleService.render_sequence(spec)
        frames = []
        odometry = []
        for k in range(spec.frame_count):
            pair = pairs[max(k - 1, 0)]
            first = k == 0
            image = pair.image_prev if first else pair.image_curr
            d_rel = pair.d_rel_prev if first else pair.d_rel_curr
            depth = pair.depth_prev if first else pair.depth_curr

            entry = FrameInput(
                index=k,
                timestamp=round(k * FRAME_INTERVAL, 6),
                image=f'images/{k:06d}.png',
                inverse_depth=f'inverse_depth/{k:06d}.pfm',
                flow=None if first else f'flow/{k:06d}.flo',
                gt_depth=f'gt_depth/{k:06d}.pfm'
            )
            raster_io.write_image(os.path.join(directory, entry.image), image)
            raster_io.write_pfm(os.path.join(directory, entry.inverse_depth), d_rel.to_inverse_depth())
            raster_io.write_pfm(os.path.join(directory, entry.gt_depth), depth)
            if not first:
                raster_io.write_flo(os.path.join(directory, entry.flow), pair.flow)
                odometry.append(OdometryRecord(timestamp=entry.timestamp, baseline=pair.baseline, source='oracle'))
            frames.append(entry)

        IOService.write_manifest(directory, spec.intrinsics, frames, odometry, [pair.pose for pair in pairs])
        logger.info('Wrote %d-frame synthetic sequence to %s', spec.frame_count, directory)
        return pairs
