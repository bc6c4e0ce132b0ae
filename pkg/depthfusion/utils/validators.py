# utils/validators.py
import numpy as np


def validate_intrinsics(fx, fy, cx, cy, width, height):
    """Validate camera calibration, returns an error message or None"""
    if not (fx > 0 and fy > 0):
        return "Focal lengths must be positive"

    if width <= 0 or height <= 0:
        return "Image dimensions must be positive"

    if not (0 <= cx < width):
        return "Principal point x must lie inside the image"

    if not (0 <= cy < height):
        return "Principal point y must lie inside the image"

    return None


def validate_rotation(matrix, tol=1e-9):
    """Validate a rotation matrix, returns an error message or None"""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (3, 3):
        return "Rotation must be a 3x3 matrix"

    if not np.allclose(matrix.T @ matrix, np.eye(3), atol=tol):
        return "Rotation is not orthonormal"

    if abs(np.linalg.det(matrix) - 1.0) > tol:
        return "Rotation determinant is not 1"

    return None

