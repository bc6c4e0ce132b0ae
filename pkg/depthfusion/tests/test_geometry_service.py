import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from models.pose import Pose
from services.geometry_service import GeometryService
from utils.exceptions import DegenerateDepthError


def test_normalize_round_trip(intrinsics):
    u, v = GeometryService.pixel_grid(intrinsics)
    x, y = GeometryService.normalize_pixel(u, v, intrinsics)
    back_u, back_v = GeometryService.denormalize_pixel(x, y, intrinsics)
    assert np.allclose(back_u, u)
    assert np.allclose(back_v, v)


def test_principal_point_normalizes_to_origin(intrinsics):
    x, y = GeometryService.normalize_pixel(intrinsics.cx, intrinsics.cy, intrinsics)
    assert float(x) == 0.0 and float(y) == 0.0


def test_zero_motion_gives_zero_field():
    x, y = np.meshgrid(np.linspace(-0.5, 0.5, 5), np.linspace(-0.4, 0.4, 4))
    field = GeometryService.predict_motion_field(x, y, np.full(x.shape, 3.0), 2.0, np.zeros(3), np.zeros(3))
    assert np.all(field == 0.0)


def test_lateral_translation_at_principal_point():
    field = GeometryService.predict_motion_field(0.0, 0.0, 5.0, 2.0, np.zeros(3), [1.0, 0.0, 0.0])
    assert np.allclose(field, [-0.1, 0.0])


def test_pure_rotation_ignores_depth():
    omega = [0.01, -0.02, 0.005]
    near = GeometryService.predict_motion_field(0.2, -0.1, 1.0, 1.0, omega, np.zeros(3))
    far = GeometryService.predict_motion_field(0.2, -0.1, 50.0, 1.0, omega, np.zeros(3))
    assert np.allclose(near, far)


def test_degenerate_depth_raises():
    with pytest.raises(DegenerateDepthError):
        GeometryService.predict_motion_field(0.0, 0.0, 0.0, 1.0, np.zeros(3), [1.0, 0.0, 0.0])


@settings(deadline=None)
@given(st.floats(0.5, 3.0), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
def test_linear_flow_matches_motion_field_with_scaled_translation(alpha, x, y):
    omega = np.array([0.003, -0.004, 0.002])
    translation = np.array([0.2, -0.1, 0.3])
    d_rel = 4.0
    metric = GeometryService.predict_motion_field(x, y, d_rel, alpha, omega, translation)
    relative = GeometryService.predict_linear_flow(x, y, d_rel, omega, translation / alpha)
    assert np.allclose(metric, relative, atol=1e-12)


def test_rigid_flow_agrees_with_linear_to_first_order():
    x, y = np.meshgrid(np.linspace(-0.4, 0.4, 9), np.linspace(-0.3, 0.3, 7))
    d_rel = np.full(x.shape, 20.0)
    omega = np.array([1e-4, -2e-4, 1e-4])
    v = np.array([1e-3, 0.0, 2e-3])
    pose = Pose.from_rotvec(omega, v)
    rigid = GeometryService.predict_rigid_flow(x, y, d_rel, pose.rotation, v)
    linear = GeometryService.predict_linear_flow(x, y, d_rel, omega, v)
    assert np.max(np.abs(rigid - linear)) < 1e-6


def test_backproject_then_project(intrinsics):
    depth = np.full((intrinsics.height, intrinsics.width), 7.5)
    u, v, z = GeometryService.project(GeometryService.backproject(depth, intrinsics), intrinsics)
    grid_u, grid_v = GeometryService.pixel_grid(intrinsics)
    assert np.allclose(u, grid_u) and np.allclose(v, grid_v) and np.allclose(z, 7.5)


def test_project_behind_camera_is_nan(intrinsics):
    u, v, _ = GeometryService.project(np.array([0.1, 0.2, -1.0]), intrinsics)
    assert np.isnan(u) and np.isnan(v)


def test_motion_field_matrices_at_the_principal_point():
    a, b = GeometryService.motion_field_matrices(0.0, 0.0)
    assert np.array_equal(a, [[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    assert np.array_equal(b, [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0]])


def test_motion_field_matrices_broadcast():
    x = np.linspace(-0.5, 0.5, 6).reshape(2, 3)
    a, b = GeometryService.motion_field_matrices(x, -x)
    assert a.shape == b.shape == (2, 3, 2, 3)
    assert np.allclose(a[..., 0, 2], x)
    assert np.allclose(b[..., 1, 0], 1.0 + x * x)
