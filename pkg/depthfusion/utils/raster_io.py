"""Raster codecs: Middlebury .flo, grayscale PFM, 16-bit PNG depth, ASCII PLY."""
import os

import cv2
import numpy as np

from models.raster import FlowField, ScalarMap
from utils.constants import FLO_INVALID_THRESHOLD, FLO_MAGIC, PNG16_DEPTH_SCALE
from utils.exceptions import (
    BadMagicError, DimensionMismatchError, MalformedHeaderError, OverflowDepthError, TruncatedFileError
)

FLO_INVALID_VALUE = np.float32(1e10)
PNG16_MAX = 65535


def _ensure_parent(path):
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)


def read_flo(path, shape=None):
    """Read a .flo file; components above 1e9 in magnitude are invalid"""
    with open(path, 'rb') as f:
        data = f.read()

    if len(data) < 12:
        raise TruncatedFileError(path)
    magic = np.frombuffer(data, '<f4', count=1)[0]
    if magic != np.float32(FLO_MAGIC):
        raise BadMagicError(path)

    width, height = (int(n) for n in np.frombuffer(data, '<i4', count=2, offset=4))
    if width <= 0 or height <= 0:
        raise MalformedHeaderError(f'{path}: {width}x{height}')

    expected = 8 * width * height
    payload = len(data) - 12
    if payload < expected:
        raise TruncatedFileError(f'{path}: {payload} of {expected} payload bytes')
    if payload > expected:
        raise DimensionMismatchError(f'{path}: {payload} payload bytes for {width}x{height}')
    if shape is not None and tuple(shape) != (height, width):
        raise DimensionMismatchError(f'{path}: {height}x{width}, expected {shape[0]}x{shape[1]}')

    values = np.frombuffer(data, '<f4', offset=12).reshape(height, width, 2).astype(np.float32)
    valid = np.all(np.isfinite(values) & (np.abs(values) <= FLO_INVALID_THRESHOLD), axis=2)
    return FlowField(values, valid)


def write_flo(path, flow):
    """Write a FlowField; pixels without a valid payload are stored as 1e10.

    Vectors masked only because their target leaves the frame are written as is.
    """
    values = np.array(flow.values, dtype='<f4', copy=True)
    values[~flow.payload_mask] = FLO_INVALID_VALUE

    _ensure_parent(path)
    with open(path, 'wb') as f:
        f.write(np.array([FLO_MAGIC], dtype='<f4').tobytes())
        f.write(np.array([flow.width, flow.height], dtype='<i4').tobytes())
        f.write(values.tobytes())


def _read_header_line(data, offset):
    end = data.find(b'\n', offset)
    if end < 0:
        raise MalformedHeaderError('missing newline in PFM header')
    return data[offset:end].decode('ascii', errors='replace').strip(), end + 1


def read_pfm(path):
    """Read a grayscale 'Pf' PFM; NaN pixels are invalid"""
    with open(path, 'rb') as f:
        data = f.read()

    tag, offset = _read_header_line(data, 0)
    if tag != 'Pf':
        raise MalformedHeaderError(f'{path}: tag {tag!r}')

    dims, offset = _read_header_line(data, offset)
    try:
        width, height = (int(token) for token in dims.split())
        scale_line, offset = _read_header_line(data, offset)
        scale = float(scale_line)
    except ValueError as e:
        raise MalformedHeaderError(f'{path}: {e}') from e
    if width <= 0 or height <= 0 or scale == 0:
        raise MalformedHeaderError(f'{path}: {width}x{height}, scale {scale}')

    dtype = '<f4' if scale < 0 else '>f4'
    expected = 4 * width * height
    if len(data) - offset < expected:
        raise TruncatedFileError(f'{path}: {len(data) - offset} of {expected} payload bytes')

    # rows are stored bottom to top
    values = np.frombuffer(data, dtype, count=width * height, offset=offset).reshape(height, width)
    return ScalarMap(np.flipud(values).astype(np.float32))


def write_pfm(path, raster):
    """Write a scalar map as little-endian 'Pf'; invalid pixels become NaN"""
    values = raster.filled(np.nan) if hasattr(raster, 'filled') else np.asarray(raster, dtype=np.float32)
    values = np.ascontiguousarray(np.flipud(values), dtype='<f4')
    height, width = values.shape

    _ensure_parent(path)
    with open(path, 'wb') as f:
        f.write(f'Pf\n{width} {height}\n-1.0\n'.encode('ascii'))
        f.write(values.tobytes())


def write_depth_png16(path, depth):
    """KITTI convention: value = round(depth * 256), 0 marks invalid"""
    valid = depth.mask & (depth.values > 0)
    scaled = np.rint(np.where(valid, depth.values.astype(np.float64), 0.0) * PNG16_DEPTH_SCALE)
    if np.any(scaled > PNG16_MAX):
        raise OverflowDepthError(f'max depth {float(depth.values[valid].max()):.3f} m')

    encoded = np.where(valid, np.maximum(scaled, 1), 0).astype(np.uint16)
    _ensure_parent(path)
    if not cv2.imwrite(os.fspath(path), encoded):
        raise OSError(f'Could not write {path}')


def read_depth_png16(path):
    encoded = cv2.imread(os.fspath(path), cv2.IMREAD_UNCHANGED)
    if encoded is None:
        raise FileNotFoundError(path)
    if encoded.dtype != np.uint16 or encoded.ndim != 2:
        raise MalformedHeaderError(f'{path}: expected 16-bit grayscale, got {encoded.dtype} {encoded.shape}')

    valid = encoded > 0
    depth = np.where(valid, encoded.astype(np.float32) / PNG16_DEPTH_SCALE, np.nan)
    return ScalarMap(depth, valid)


def read_image(path):
    """RGB uint8 (H, W, 3), or (H, W) for single-channel thermal images"""
    image = cv2.imread(os.fspath(path), cv2.IMREAD_UNCHANGED)
    if image is None:
        raise FileNotFoundError(path)
    if image.ndim == 3:
        code = cv2.COLOR_BGRA2RGB if image.shape[2] == 4 else cv2.COLOR_BGR2RGB
        image = cv2.cvtColor(image, code)
    return image


def write_image(path, image):
    image = np.asarray(image)
    if image.ndim == 3:
        image = cv2.cvtColor(image, cv2.COLOR_RGB2BGR)
    _ensure_parent(path)
    if not cv2.imwrite(os.fspath(path), image):
        raise OSError(f'Could not write {path}')


def write_ply(path, points, colors):
    """ASCII PLY with float xyz and uchar rgb per vertex"""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    colors = np.asarray(colors).reshape(-1, 3).astype(np.uint8)

    header = (
        'ply\n'
        'format ascii 1.0\n'
        f'element vertex {len(points)}\n'
        'property float x\n'
        'property float y\n'
        'property float z\n'
        'property uchar red\n'
        'property uchar green\n'
        'property uchar blue\n'
        'end_header\n'
    )
    _ensure_parent(path)
    with open(path, 'w') as f:
        f.write(header)
        for (x, y, z), (r, g, b) in zip(points, colors):
            f.write(f'{x:.9g} {y:.9g} {z:.9g} {r} {g} {b}\n')


def read_ply(path):
    """Vertices and colours of a file written by write_ply"""
    with open(path) as f:
        lines = f.read().splitlines()
    end = lines.index('end_header')
    body = np.array([line.split() for line in lines[end + 1:] if line.strip()], dtype=np.float64).reshape(-1, 6)
    return body[:, :3], body[:, 3:].astype(np.uint8)
