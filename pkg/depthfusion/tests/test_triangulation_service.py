import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from models.intrinsics import Intrinsics
from models.pipeline_config import TriangulationConfig
from models.pose import Pose
from models.raster import FlowField
from services.geometry_service import GeometryService
from services.oracle_service import OracleService
from services.triangulation_service import TriangulationService
from utils.exceptions import EmptyObservationError, NearParallelRaysError, ZeroTranslationError


@pytest.fixture(scope='module')
def exact(scene):
    """Float64 exact correspondences of frame 1"""
    frame = OracleService.render_frame(scene, 1)
    pose = OracleService.relative_pose(scene, 1)
    flow, valid, u_prev, v_prev, _ = OracleService.exact_flow(frame.depth, pose, scene.intrinsics)
    return frame, pose, flow, valid, u_prev, v_prev


def test_fundamental_matrix_is_rank_two():
    pose = Pose.from_rotvec([0.01, -0.02, 0.03], [0.3, -0.1, 0.9])
    fundamental = TriangulationService.fundamental_matrix(pose, OracleService.default_intrinsics())
    normalized = fundamental / np.linalg.norm(fundamental)
    assert abs(np.linalg.det(normalized)) < 1e-12


def test_fundamental_matrix_needs_translation(intrinsics):
    with pytest.raises(ZeroTranslationError):
        TriangulationService.fundamental_matrix(Pose.from_rotvec([0.0, 0.01, 0.0], np.zeros(3)), intrinsics)


def test_epipolar_constraint_on_oracle_correspondences(exact, intrinsics):
    _, pose, _, valid, u_prev, v_prev = exact
    fundamental = TriangulationService.fundamental_matrix(pose, intrinsics)
    fundamental = fundamental / np.linalg.norm(fundamental)
    u, v = GeometryService.pixel_grid(intrinsics)

    h_prev = np.stack([u_prev, v_prev, np.ones_like(u)], axis=-1)[valid]
    h_curr = np.stack([u, v, np.ones_like(u)], axis=-1)[valid]
    constraint = np.sum(h_curr * (h_prev @ fundamental.T), axis=-1)
    assert np.max(np.abs(constraint)) < 1e-9


def test_triangulate_point_at_five_meters(intrinsics):
    pose = Pose(np.eye(3), [1.0, 0.0, 0.0])
    # p_{i-1} = (0, 0, 5) maps to p_i = (1, 0, 5)
    x_prev = (intrinsics.cx, intrinsics.cy)
    x_curr = (intrinsics.cx + intrinsics.fx / 5.0, intrinsics.cy)
    z_prev, z_curr = TriangulationService.triangulate_pair(x_prev, x_curr, pose, intrinsics)
    assert z_prev == pytest.approx(5.0, abs=1e-6)
    assert z_curr == pytest.approx(5.0, abs=1e-6)


@settings(deadline=None)
@given(st.floats(100.0, 1000.0), st.floats(0.05, 2.0), st.floats(1.0, 200.0))
def test_stereo_identity(focal, baseline, disparity):
    intrinsics = Intrinsics(fx=focal, fy=focal, cx=1000.0, cy=500.0, width=2000, height=1000)
    pose = Pose(np.eye(3), [baseline, 0.0, 0.0])
    _, z = TriangulationService.triangulate_pair((1000.0, 500.0), (1000.0 + disparity, 500.0), pose, intrinsics)
    assert z == pytest.approx(focal * baseline / disparity, rel=1e-9)


def test_parallel_rays_raise(intrinsics):
    pose = Pose(np.eye(3), [0.0, 0.0, 1.0])
    centre = (intrinsics.cx, intrinsics.cy)
    with pytest.raises(NearParallelRaysError):
        TriangulationService.triangulate_pair(centre, centre, pose, intrinsics)


def test_sampson_of_a_perpendicular_pixel_offset(intrinsics):
    fundamental = TriangulationService.fundamental_matrix(Pose(np.eye(3), [1.0, 0.0, 0.0]), intrinsics)
    rho = TriangulationService.sampson_residual(np.array([50.0, 40.0]), np.array([70.0, 41.0]), fundamental)
    assert float(rho) == pytest.approx(0.5, rel=1e-9)


def test_sampson_is_invariant_to_the_scale_of_f(exact, intrinsics):
    _, pose, _, valid, u_prev, v_prev = exact
    fundamental = TriangulationService.fundamental_matrix(pose, intrinsics)
    u, v = GeometryService.pixel_grid(intrinsics)
    x_prev = np.stack([u_prev, v_prev + 0.7], axis=-1)[valid]
    x_curr = np.stack([u, v], axis=-1)[valid]

    rho = TriangulationService.sampson_residual(x_prev, x_curr, fundamental)
    scaled = TriangulationService.sampson_residual(x_prev, x_curr, -37.5 * fundamental)
    assert np.allclose(scaled, rho, rtol=1e-9)


def test_sampson_undefined_at_the_epipole():
    rho = TriangulationService.sampson_residual(np.zeros(2), np.zeros(2), np.zeros((3, 3)))
    assert np.isinf(rho)


def test_exact_flow_triangulates_to_oracle_depth(exact, intrinsics):
    frame, pose, flow, valid, _, _ = exact
    u, v = GeometryService.pixel_grid(intrinsics)
    ray_curr = np.stack([*GeometryService.normalize_pixel(u, v, intrinsics), np.ones_like(u)], axis=-1)
    ray_prev = np.stack([*GeometryService.normalize_pixel(u + flow[..., 0], v + flow[..., 1], intrinsics),
                         np.ones_like(u)], axis=-1)
    _, z_curr, ok = TriangulationService.triangulate_rays(ray_prev, ray_curr, pose, min_ray_sine=1e-3)

    usable = valid & ok
    assert usable.sum() > 0.5 * valid.sum()
    relative = np.abs(z_curr[usable] - frame.depth[usable]) / frame.depth[usable]
    assert relative.max() < 1e-9


def test_build_observation_on_oracle_pair(pair, intrinsics, scene):
    depth, sampson = TriangulationService.build_observation(pair.flow, pair.pose, intrinsics, pair.d_rel_curr)

    valid = depth.mask
    gt = pair.depth_curr.values[valid].astype(np.float64)
    assert depth.valid_count > 0.5 * pair.flow.valid_count
    assert np.median(np.abs(depth.values[valid] - gt) / gt) < 1e-4
    assert sampson.median < 1e-6

    scale = depth.values[valid] / pair.d_rel_curr.values[valid]
    assert np.median(np.abs(scale - scene.alpha)) / scene.alpha < 1e-4


def test_corrupted_correspondences_have_large_sampson(pair, intrinsics):
    corrupted = np.random.default_rng(4).random(pair.flow.shape) < 0.1
    values = np.array(pair.flow.values)
    values[corrupted, 1] += 3.0
    flow = FlowField(values, pair.flow.mask)

    _, sampson = TriangulationService.build_observation(flow, pair.pose, intrinsics)
    rho = sampson.values
    clean = sampson.mask & ~corrupted
    planted = sampson.mask & corrupted
    assert planted.sum() > 0
    assert rho[planted].min() > np.percentile(rho[clean], 90)


def test_synthetic_flow_is_penalized(pair, intrinsics):
    cfg = TriangulationConfig()
    synthetic = np.zeros(pair.flow.shape, dtype=bool)
    synthetic[:, ::2] = True
    flow = FlowField(pair.flow.values, pair.flow.mask, synthetic=synthetic)

    _, sampson = TriangulationService.build_observation(flow, pair.pose, intrinsics, cfg=cfg)
    marked = sampson.mask & flow.synthetic
    assert np.all(sampson.values[marked] >= cfg.synthetic_penalty * cfg.synthetic_rho_floor)
    assert np.all(sampson.values[sampson.mask & ~flow.synthetic] < 1e-3)


def test_rotation_only_pose_gives_no_observation(pair, intrinsics):
    pose = Pose(pair.pose.rotation, np.zeros(3))
    observation, error = TriangulationService.observe(pair.flow, pose, intrinsics, pair.d_rel_curr,
                                                      TriangulationConfig())
    assert observation is None
    assert isinstance(error, EmptyObservationError)


def test_invalid_flow_gives_no_observation(pair, intrinsics):
    flow = FlowField(pair.flow.values, np.zeros(pair.flow.shape, dtype=bool))
    with pytest.raises(EmptyObservationError):
        TriangulationService.build_observation(flow, pair.pose, intrinsics)
