import os

import numpy as np
import pytest

from models.raster import FlowField, RelativeDepthMap
from models.scene import MovingBlock, NoiseSpec, Plane, SceneSpec
from services.geometry_service import GeometryService
from services.io_service import IOService
from services.oracle_service import OracleService
from services.triangulation_service import TriangulationService


def wall_scene(translation, rotvec=(0.0, 0.0, 0.0), depth=10.0):
    return SceneSpec.constant_motion(OracleService.default_intrinsics(), 2, rotvec, translation,
                                     planes=(Plane.fronto_parallel(depth),))


def test_default_intrinsics():
    intrinsics = OracleService.default_intrinsics(320, 240)
    assert intrinsics.fx == intrinsics.fy == 300.0
    assert (intrinsics.cx, intrinsics.cy) == (160.0, 120.0)


def test_zero_motion_gives_zero_flow():
    pair = OracleService.render_frame_pair(wall_scene((0.0, 0.0, 0.0)), 1)
    assert pair.flow.valid_count == pair.flow.width * pair.flow.height
    assert np.allclose(pair.flow.values, 0.0, atol=1e-9)


def test_lateral_translation_over_a_wall():
    pair = OracleService.render_frame_pair(wall_scene((0.5, 0.0, 0.0)), 1)
    flow = pair.flow.values[pair.flow.mask]
    # x_{i-1} = x_i - f t / z
    assert np.allclose(flow[:, 0], -150.0 * 0.5 / 10.0, atol=1e-5)
    assert np.allclose(flow[:, 1], 0.0, atol=1e-5)


def test_rendered_depth_respects_the_range(scene):
    frame = OracleService.render_frame(scene, 0)
    valid = np.isfinite(frame.depth)
    low, high = scene.depth_range
    assert valid.any()
    assert np.all((frame.depth[valid] >= low) & (frame.depth[valid] <= high))
    assert np.all(frame.surface[~valid] == -1)
    assert np.all(frame.surface[valid] >= 0)


def test_box_occludes_the_background(scene):
    frame = OracleService.render_frame(scene, 0)
    centre = frame.depth[scene.intrinsics.height // 2 - 5, scene.intrinsics.width // 2 - 10]
    assert centre == pytest.approx(8.0)


def test_piecewise_scale_assigns_one_scale_per_surface():
    spec = OracleService.default_scene(frame_count=2, piecewise_scale=True)
    frame = OracleService.render_frame(spec, 0)
    factors = np.array([1.2, 1.0, 0.8, 1.1]) * spec.alpha
    valid = frame.surface >= 0
    assert np.allclose(frame.scale[valid], factors[frame.surface[valid]])


def test_height_field_renders():
    spec = OracleService.default_scene(frame_count=2, height_field=True)
    frame = OracleService.render_frame(spec, 0)
    assert np.any(frame.surface == len(spec.surfaces) - 1)


def test_exact_flow_reprojects_to_the_previous_frame(scene):
    frame = OracleService.render_frame(scene, 1)
    pose = OracleService.relative_pose(scene, 1)
    flow, valid, u_prev, v_prev, z_prev = OracleService.exact_flow(frame.depth, pose, scene.intrinsics)

    points = GeometryService.backproject(frame.depth, scene.intrinsics)[valid]
    previous = pose.inverse().transform(points)
    u, v, z = GeometryService.project(previous, scene.intrinsics)
    assert np.allclose(u, u_prev[valid], atol=1e-9)
    assert np.allclose(v, v_prev[valid], atol=1e-9)
    assert np.allclose(z, z_prev[valid], rtol=1e-12)


def test_known_scale_consistency(scene):
    frame = OracleService.render_frame(scene, 1)
    pose = OracleService.relative_pose(scene, 1)
    flow, valid, _, _, _ = OracleService.exact_flow(frame.depth, pose, scene.intrinsics)
    u, v = GeometryService.pixel_grid(scene.intrinsics)
    ray_curr = np.stack([*GeometryService.normalize_pixel(u, v, scene.intrinsics), np.ones_like(u)], axis=-1)
    ray_prev = np.stack([*GeometryService.normalize_pixel(u + flow[..., 0], v + flow[..., 1], scene.intrinsics),
                         np.ones_like(u)], axis=-1)
    _, z_tri, ok = TriangulationService.triangulate_rays(ray_prev, ray_curr, pose, 1e-3)

    usable = valid & ok
    d_rel = frame.depth / frame.scale
    assert np.allclose(z_tri[usable] / d_rel[usable], scene.alpha, rtol=1e-9)


def test_occluded_pixels_are_invalid(scene):
    pair = OracleService.render_frame_pair(scene, 1)
    # pixels with depth whose flow is invalid exist at the box's disoccluded edge
    has_depth = pair.depth_curr.mask
    assert np.any(has_depth & ~pair.flow.mask)


def test_moving_block_is_reproducible():
    spec = OracleService.default_scene(frame_count=3, seed=5, block=MovingBlock(fraction=0.3))
    first = OracleService.render_frame_pair(spec, 1)
    second = OracleService.render_frame_pair(spec, 1)
    assert np.array_equal(first.outlier_mask, second.outlier_mask)
    assert np.array_equal(first.flow.values, second.flow.values)

    fraction = OracleService.block_mask(spec, 1).mean()
    assert fraction == pytest.approx(0.3, abs=0.02)
    assert not OracleService.block_mask(spec, 0).any()
    assert not np.array_equal(OracleService.block_mask(spec, 1), OracleService.block_mask(spec, 2))


def test_zero_noise_is_the_identity(pair):
    noise = NoiseSpec()
    assert np.array_equal(OracleService.perturb('flow', pair.flow, noise, 3).values, pair.flow.values)
    assert OracleService.perturb('baseline', 1.5, noise, 3) == 1.5


def test_same_seed_same_noise(pair):
    noise = NoiseSpec(flow_sigma=0.5, baseline_sigma=0.1)
    first = OracleService.perturb('flow', pair.flow, noise, [1, 2, 0])
    second = OracleService.perturb('flow', pair.flow, noise, [1, 2, 0])
    assert np.array_equal(first.values, second.values)
    assert OracleService.perturb('baseline', 1.0, noise, 9) == OracleService.perturb('baseline', 1.0, noise, 9)


def test_flow_noise_has_the_requested_spread():
    shape = (400, 400)
    flow = FlowField(np.zeros(shape + (2,)), np.ones(shape, dtype=bool))
    noisy = OracleService.perturb('flow', flow, NoiseSpec(flow_sigma=0.5), 0)
    assert abs(float(np.std(noisy.values)) - 0.5) <= 0.02 * 0.5


def test_affine_d_rel_distortion():
    d_rel = RelativeDepthMap(np.full((2, 2), 2.0))
    distorted = OracleService.perturb('d_rel', d_rel, NoiseSpec(d_rel_scale=2.0, d_rel_shift=0.5))
    assert np.allclose(distorted.values, 4.5)


def test_unknown_perturbation_kind(pair):
    with pytest.raises(ValueError):
        OracleService.perturb('image', pair.flow, NoiseSpec())


def test_relative_pose_range(scene):
    with pytest.raises(ValueError):
        OracleService.relative_pose(scene, 0)
    with pytest.raises(ValueError):
        OracleService.relative_pose(scene, scene.frame_count)


def test_dump_sequence_layout(sequence_dir):
    for name in ('sequence.json', 'odometry.json', 'poses.json'):
        assert os.path.exists(sequence_dir / name)
    assert os.path.exists(sequence_dir / 'images' / '000000.png')
    assert os.path.exists(sequence_dir / 'flow' / '000001.flo')
    assert not os.path.exists(sequence_dir / 'flow' / '000000.flo')

    intrinsics, frames, gt_depths, poses = IOService.load_sequence(str(sequence_dir))
    assert len(frames) == len(gt_depths) == 5
    assert len(poses) == 4
    assert frames[0].flow is None and frames[0].baseline is None
    assert frames[1].baseline == pytest.approx(poses[0].baseline)
    assert intrinsics == OracleService.default_intrinsics()
