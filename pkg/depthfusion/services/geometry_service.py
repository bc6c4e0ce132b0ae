import numpy as np

from utils.constants import DEPTH_EPSILON
from utils.exceptions import DegenerateDepthError


class GeometryService:
    """Normalized coordinates and the instantaneous motion field.

    All functions broadcast over numpy arrays; scalars work too.
    """

    @staticmethod
    def normalize_pixel(u, v, intrinsics):
        x = (np.asarray(u, dtype=np.float64) - intrinsics.cx) / intrinsics.fx
        y = (np.asarray(v, dtype=np.float64) - intrinsics.cy) / intrinsics.fy
        return x, y

    @staticmethod
    def denormalize_pixel(x, y, intrinsics):
        u = np.asarray(x, dtype=np.float64) * intrinsics.fx + intrinsics.cx
        v = np.asarray(y, dtype=np.float64) * intrinsics.fy + intrinsics.cy
        return u, v

    @staticmethod
    def pixel_grid(intrinsics):
        """(u, v) column and row coordinates of every pixel centre"""
        v, u = np.indices((intrinsics.height, intrinsics.width), dtype=np.float64)
        return u, v

    @staticmethod
    def normalized_grid(intrinsics):
        u, v = GeometryService.pixel_grid(intrinsics)
        return GeometryService.normalize_pixel(u, v, intrinsics)

    @staticmethod
    def flow_to_normalized(flow_px, intrinsics):
        flow_px = np.asarray(flow_px, dtype=np.float64)
        return flow_px / np.array([intrinsics.fx, intrinsics.fy])

    @staticmethod
    def motion_field_matrices(x, y):
        """A and B of the motion field, shape (..., 2, 3) for array input"""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        zero = np.zeros_like(x)
        one = np.ones_like(x)

        a = np.stack([
            np.stack([-one, zero, x], axis=-1),
            np.stack([zero, -one, y], axis=-1)
        ], axis=-2)
        b = np.stack([
            np.stack([x * y, -(1.0 + x * x), y], axis=-1),
            np.stack([1.0 + y * y, -x * y, -x], axis=-1)
        ], axis=-2)
        return a, b

    @staticmethod
    def predict_motion_field(x, y, d, alpha, omega_vec, translation):
        """B(x, y) omega + A(x, y) T / (alpha d), in normalized units"""
        depth = alpha * np.asarray(d, dtype=np.float64)
        if np.any(depth < DEPTH_EPSILON):
            raise DegenerateDepthError(f'min alpha * d = {float(np.min(depth)):.3g}')

        a, b = GeometryService.motion_field_matrices(x, y)
        omega_vec = np.asarray(omega_vec, dtype=np.float64)
        translation = np.asarray(translation, dtype=np.float64)
        return b @ omega_vec + (a @ translation) / depth[..., None]

    @staticmethod
    def predict_linear_flow(x, y, d_rel, omega_vec, v):
        """Motion field with V = T / alpha so only relative depth is needed"""
        return GeometryService.predict_motion_field(x, y, d_rel, 1.0, omega_vec, v)

    @staticmethod
    def predict_rigid_flow(x, y, d_rel, rotation, v):
        """Exact backward flow x_{i-1} - x_i under p_{i-1} = R^T (p_i - T).

        Works in relative-depth units: the point d_rel * (x, y, 1) moved by
        V = T / alpha projects where the metric point would. Points that end
        behind the previous camera give NaN.
        """
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        d_rel = np.asarray(d_rel, dtype=np.float64)
        points = np.stack([x * d_rel, y * d_rel, d_rel], axis=-1) - np.asarray(v, dtype=np.float64)
        moved = points @ np.asarray(rotation, dtype=np.float64)

        z = moved[..., 2]
        with np.errstate(divide='ignore', invalid='ignore'):
            safe = np.where(z > DEPTH_EPSILON, z, np.nan)
            prev_x = moved[..., 0] / safe
            prev_y = moved[..., 1] / safe
        return np.stack([prev_x - x, prev_y - y], axis=-1)

    @staticmethod
    def backproject(depth, intrinsics):
        """(H, W, 3) camera-frame points z * K^-1 [u, v, 1]"""
        x, y = GeometryService.normalized_grid(intrinsics)
        depth = np.asarray(depth, dtype=np.float64)
        return np.stack([x * depth, y * depth, depth], axis=-1)

    @staticmethod
    def project(points, intrinsics):
        """Pixel coordinates and depth of (..., 3) camera-frame points"""
        points = np.asarray(points, dtype=np.float64)
        z = points[..., 2]
        with np.errstate(divide='ignore', invalid='ignore'):
            safe = np.where(z > DEPTH_EPSILON, z, np.nan)
            u = intrinsics.fx * points[..., 0] / safe + intrinsics.cx
            v = intrinsics.fy * points[..., 1] / safe + intrinsics.cy
        return u, v, z
