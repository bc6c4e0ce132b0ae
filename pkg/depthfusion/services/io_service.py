import json
import logging
import math
import os

import numpy as np
from marshmallow import ValidationError

from config import current_config
from models.frame import FrameData
from models.pose import Pose
from models.raster import RelativeDepthMap
from schemas import FrameRecordSchema, OdometryRecordSchema, PoseSchema, SequenceManifestSchema
from services.geometry_service import GeometryService
from utils import raster_io
from utils.exceptions import ConfigError, DimensionMismatchError

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'sequence.json'
ODOMETRY_NAME = 'odometry.json'
POSES_NAME = 'poses.json'


def _finite_or_none(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


class IOService:
    """Sequence directories, depth outputs, metrics records and point clouds"""

    @staticmethod
    def _read_json(path):
        try:
            with open(path, encoding='utf-8') as f:
                return json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f'{path}: {e}') from e

    @staticmethod
    def _write_json(path, data):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=2, sort_keys=True)

    @staticmethod
    def load_manifest(directory):
        """Returns (intrinsics, frames, odometry records, relative poses or None)"""
        path = os.path.join(directory, MANIFEST_NAME)
        try:
            manifest = SequenceManifestSchema().load(IOService._read_json(path))
        except ValidationError as e:
            raise ConfigError(f'{path}: {json.dumps(e.messages, sort_keys=True)}') from e

        odometry = []
        if manifest['odometry']:
            odometry_path = os.path.join(directory, manifest['odometry'])
            try:
                odometry = OdometryRecordSchema(many=True).load(IOService._read_json(odometry_path))
            except ValidationError as e:
                raise ConfigError(f'{odometry_path}: {json.dumps(e.messages, sort_keys=True)}') from e

        poses = None
        if manifest['poses']:
            poses = IOService.load_poses(os.path.join(directory, manifest['poses']))
        return manifest['intrinsics'], manifest['frames'], odometry, poses

    @staticmethod
    def load_poses(path):
        """Relative poses, entry k mapping frame k into frame k + 1"""
        try:
            return PoseSchema(many=True).load(IOService._read_json(path))
        except ValidationError as e:
            raise ConfigError(f'{path}: {json.dumps(e.messages, sort_keys=True)}') from e

    @staticmethod
    def write_manifest(directory, intrinsics, frames, odometry, poses=None):
        frame_entries = [
            {
                'index': frame.index,
                'timestamp': frame.timestamp,
                'image': frame.image,
                'inverse_depth': frame.inverse_depth,
                'flow': frame.flow,
                'gt_depth': frame.gt_depth
            }
            for frame in frames
        ]
        manifest = {
            'intrinsics': intrinsics.to_dict(),
            'frames': frame_entries,
            'odometry': ODOMETRY_NAME,
            'poses': POSES_NAME if poses is not None else None
        }
        IOService._write_json(os.path.join(directory, MANIFEST_NAME), manifest)
        IOService._write_json(os.path.join(directory, ODOMETRY_NAME), OdometryRecordSchema(many=True).dump(odometry))
        if poses is not None:
            pose_entries = [{'rotation': p.rotation.tolist(), 'translation': p.translation.tolist()} for p in poses]
            IOService._write_json(os.path.join(directory, POSES_NAME), pose_entries)

    @staticmethod
    def associate_odometry(frames, records, tolerance=None):
        """Nearest-timestamp baseline for every frame after the first.

        Returns a list aligned with ``frames`` of (baseline, residual seconds)
        tuples, None for frame 0 or when no record exists.
        """
        tolerance = current_config.ODOMETRY_TOLERANCE if tolerance is None else tolerance
        if not records:
            return [None] * len(frames)

        stamps = np.array([record.timestamp for record in records], dtype=np.float64)
        associated = [None]
        for frame in frames[1:]:
            nearest = int(np.argmin(np.abs(stamps - frame.timestamp)))
            residual = abs(float(stamps[nearest]) - frame.timestamp)
            if residual > tolerance:
                logger.warning('Frame %d: nearest odometry record is %.3f s away', frame.index, residual)
            associated.append((records[nearest].baseline, residual))
        return associated

    @staticmethod
    def load_frame(directory, frame, intrinsics):
        """Read one frame's rasters; dimensions must match the intrinsics"""
        shape = (intrinsics.height, intrinsics.width)
        image = raster_io.read_image(os.path.join(directory, frame.image))
        inverse = raster_io.read_pfm(os.path.join(directory, frame.inverse_depth))
        if image.shape[:2] != shape:
            raise DimensionMismatchError(f'{frame.image}: {image.shape[:2]}, expected {shape}')
        if inverse.shape != shape:
            raise DimensionMismatchError(f'{frame.inverse_depth}: {inverse.shape}, expected {shape}')

        d_rel = RelativeDepthMap.from_inverse_depth(inverse.filled(np.nan))
        flow = None
        if frame.flow:
            flow = raster_io.read_flo(os.path.join(directory, frame.flow), shape)
        return FrameData(index=frame.index, timestamp=frame.timestamp, image=image, d_rel=d_rel, flow=flow)

    @staticmethod
    def read_depth(path):
        if str(path).endswith('.png'):
            return raster_io.read_depth_png16(path)
        return raster_io.read_pfm(path)

    @staticmethod
    def load_gt_depth(directory, frame):
        if not frame.gt_depth:
            return None
        return IOService.read_depth(os.path.join(directory, frame.gt_depth))

    @staticmethod
    def depth_path(out_dir, index, fmt):
        extension = 'png' if fmt == 'png16' else 'pfm'
        return os.path.join(out_dir, 'depth', f'{index:06d}.{extension}')

    @staticmethod
    def write_depth(out_dir, index, depth, fmt='pfm'):
        path = IOService.depth_path(out_dir, index, fmt)
        if fmt == 'png16':
            raster_io.write_depth_png16(path, depth)
        else:
            raster_io.write_pfm(path, depth)
        return path

    @staticmethod
    def record_lines(records, include_timings=False):
        """JSON lines; timings are left out by default so records are reproducible"""
        schema = FrameRecordSchema() if include_timings else FrameRecordSchema(exclude=('timings',))
        lines = []
        for record in records:
            data = {key: _finite_or_none(value) for key, value in schema.dump(record).items()}
            lines.append(json.dumps(data, sort_keys=True))
        return lines

    @staticmethod
    def write_records(path, records, include_timings=False):
        """One JSON object per line, one line per frame"""
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            for line in IOService.record_lines(records, include_timings):
                f.write(line + '\n')

    @staticmethod
    def read_records(path):
        with open(path, encoding='utf-8') as f:
            return [FrameRecordSchema().load(json.loads(line)) for line in f if line.strip()]

    @staticmethod
    def frame_points(depth, image, intrinsics, camera_to_world):
        """World-frame points and colours of the valid pixels of one depth map"""
        points = GeometryService.backproject(depth.filled(np.nan), intrinsics)[depth.mask]
        world = camera_to_world.transform(points)
        image = np.asarray(image)
        if image.ndim == 2:
            image = np.repeat(image[..., None], 3, axis=2)
        colors = image[depth.mask][:, :3]
        if colors.dtype != np.uint8:
            colors = np.clip(colors, 0, 255).astype(np.uint8)
        return world, colors

    @staticmethod
    def export_pointcloud(depths, images, intrinsics, poses, path):
        """Accumulate frames into one world-frame ASCII PLY.

        ``poses[k]`` maps frame k into frame k + 1; frame 0 defines the world frame.
        Frames whose depth is None are skipped.
        """
        world_to_camera = Pose.identity()
        all_points, all_colors = [], []
        for k, (depth, image) in enumerate(zip(depths, images)):
            if k > 0:
                world_to_camera = world_to_camera.compose(poses[k - 1])
            if depth is None or depth.valid_count == 0:
                continue
            points, colors = IOService.frame_points(depth, image, intrinsics, world_to_camera.inverse())
            all_points.append(points)
            all_colors.append(colors)

        points = np.concatenate(all_points) if all_points else np.empty((0, 3))
        colors = np.concatenate(all_colors) if all_colors else np.empty((0, 3), dtype=np.uint8)
        raster_io.write_ply(path, points, colors)
        logger.info('Wrote %d points to %s', len(points), path)
        return len(points)

    @staticmethod
    def load_sequence(directory, tolerance=None):
        """Returns (intrinsics, FrameData list with associated baselines, gt depths, relative poses or None)"""
        intrinsics, entries, odometry, poses = IOService.load_manifest(directory)
        associations = IOService.associate_odometry(entries, odometry, tolerance)

        frames = []
        for entry, association in zip(entries, associations):
            frame = IOService.load_frame(directory, entry, intrinsics)
            if association is not None:
                frame.baseline, frame.association_residual = association
            frames.append(frame)
        gt_depths = [IOService.load_gt_depth(directory, entry) for entry in entries]
        logger.info('Loaded %d frames from %s', len(frames), directory)
        return intrinsics, frames, gt_depths, poses
