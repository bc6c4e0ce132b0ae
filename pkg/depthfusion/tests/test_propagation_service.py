import numpy as np
import pytest

from models.pipeline_config import PropagationConfig
from models.pose import Pose
from models.raster import RelativeDepthMap, ScalarMap
from services.oracle_service import OracleService
from services.propagation_service import PropagationService


def test_identity_pose_keeps_depth(tiny_intrinsics, rng):
    depth = rng.uniform(2.0, 20.0, (16, 16))
    warped = PropagationService.warp_depth(ScalarMap(depth), Pose.identity(), tiny_intrinsics)
    assert warped.valid_count == 256
    assert np.allclose(warped.values, depth.astype(np.float32))


def test_forward_motion_brings_a_wall_closer(tiny_intrinsics):
    depth = ScalarMap(np.full((16, 16), 10.0))
    warped = PropagationService.warp_depth(depth, Pose(np.eye(3), [0.0, 0.0, -2.0]), tiny_intrinsics)
    assert warped.valid_count > 0
    assert np.allclose(warped.valid_values(), 8.0)


def test_z_buffer_keeps_the_nearest_point(tiny_intrinsics):
    depth = np.full((16, 16), np.nan)
    depth[8, 4] = 2.0
    depth[8, 6] = 10.0
    variance = np.zeros((16, 16))
    variance[8, 4] = 0.5
    variance[8, 6] = 9.0
    pose = Pose(np.eye(3), [0.2, 0.0, 0.0])

    z_buffer, carried = PropagationService.splat(depth, np.isfinite(depth), pose, tiny_intrinsics, payload=variance)
    assert z_buffer[8, 6] == pytest.approx(2.0)
    assert carried[8, 6] == pytest.approx(0.5)
    assert np.isfinite(z_buffer).sum() == 1


def test_points_leaving_the_frame_are_dropped(tiny_intrinsics):
    depth = ScalarMap(np.full((16, 16), 1.0))
    warped = PropagationService.warp_depth(depth, Pose(np.eye(3), [100.0, 0.0, 0.0]), tiny_intrinsics)
    assert warped.valid_count == 0


def test_warped_point_count_never_grows(pair, intrinsics):
    warped = PropagationService.warp_depth(pair.depth_prev, pair.pose, intrinsics)
    assert 0 < warped.valid_count <= pair.depth_prev.valid_count


def test_prior_scale_times_depth_is_prior_depth(pair, intrinsics):
    variance = ScalarMap(np.full(pair.depth_prev.shape, 0.01), pair.depth_prev.mask)
    prior = PropagationService.warp_posterior(pair.depth_prev, variance, pair.pose, intrinsics, pair.d_rel_curr)

    covered = prior.coverage
    assert covered.any()
    assert np.array_equal(prior.s_prior.values[covered] * pair.d_rel_curr.values[covered],
                          prior.z_prior.values[covered])
    assert np.allclose(prior.v_prior.values[covered], 0.01)
    assert prior.fill_variance == pytest.approx(10.0 * 0.01, rel=1e-6)


def test_warped_oracle_depth_matches_next_frame(pair, intrinsics, scene):
    variance = ScalarMap(np.full(pair.depth_prev.shape, 0.01), pair.depth_prev.mask)
    prior = PropagationService.warp_posterior(pair.depth_prev, variance, pair.pose, intrinsics, pair.d_rel_curr)

    both = prior.coverage & pair.depth_curr.mask
    gt = pair.depth_curr.values[both]
    relative = np.abs(prior.z_prior.values[both] - gt) / gt
    assert np.mean(relative < 0.05) > 0.95
    assert np.median(np.abs(prior.s_prior.values[both] - scene.alpha)) < 0.05 * scene.alpha


def test_round_trip_reproduces_source_depth(pair, intrinsics):
    there = PropagationService.warp_depth(pair.depth_prev, pair.pose, intrinsics)
    back = PropagationService.warp_depth(there, pair.pose.inverse(), intrinsics)

    both = back.mask & pair.depth_prev.mask
    assert both.sum() > 0.5 * pair.depth_prev.valid_count
    source = pair.depth_prev.values[both]
    relative = np.abs(back.values[both] - source) / source
    assert np.mean(relative < 0.05) >= 0.95


def test_uncovered_pixels_are_invalid(tiny_intrinsics):
    depth = np.full((16, 16), 5.0)
    depth[:, :8] = np.nan
    z_post = ScalarMap(depth)
    d_rel = RelativeDepthMap(np.full((16, 16), 1.0))
    prior = PropagationService.warp_posterior(z_post, ScalarMap(np.ones((16, 16))), Pose.identity(),
                                              tiny_intrinsics, d_rel)
    assert not prior.coverage[:, :8].any()
    assert prior.coverage[:, 8:].all()
    assert np.all(np.isnan(prior.s_prior.values[:, :8]))


def test_empty_source_gives_empty_prior(tiny_intrinsics):
    empty = ScalarMap(np.full((16, 16), np.nan))
    d_rel = RelativeDepthMap(np.ones((16, 16)))
    prior = PropagationService.warp_posterior(empty, empty, Pose.identity(), tiny_intrinsics, d_rel)
    assert prior.covered_count == 0
    assert prior.fill_variance == 0.0


def test_oracle_relative_pose_chain(scene):
    poses = OracleService.camera_poses(scene)
    step = OracleService.relative_pose(scene, 2)
    chained = poses[1].compose(step)
    assert np.allclose(chained.rotation, poses[2].rotation)
    assert np.allclose(chained.translation, poses[2].translation)


def test_relative_depth_is_exact_on_a_plane(rng):
    rows, cols = np.mgrid[0:16, 0:16]
    d_rel = RelativeDepthMap(1.0 / (0.2 + 0.01 * cols + 0.02 * rows))
    u = rng.uniform(0.0, 15.0, 50)
    v = rng.uniform(0.0, 15.0, 50)

    sampled = PropagationService.relative_depth_at(d_rel, u, v, max_spread=0.5)
    assert np.allclose(sampled, 1.0 / (0.2 + 0.01 * u + 0.02 * v), rtol=1e-6)


def test_relative_depth_uses_the_nearest_pixel_across_an_edge():
    values = np.full((4, 4), 2.0)
    values[:, 2:] = 8.0
    d_rel = RelativeDepthMap(values)
    sampled = PropagationService.relative_depth_at(d_rel, np.array([1.4, 1.6, 0.5]), np.array([1.0, 1.0, 1.0]),
                                                   max_spread=0.05)
    assert np.allclose(sampled, [2.0, 8.0, 2.0])


def test_warped_oracle_scale_is_exact_off_edges(pair, intrinsics, scene):
    variance = ScalarMap(np.full(pair.depth_prev.shape, 0.01), pair.depth_prev.mask)
    prior = PropagationService.warp_posterior(pair.depth_prev, variance, pair.pose, intrinsics, pair.d_rel_curr)

    both = prior.coverage & pair.depth_curr.mask
    relative = np.abs(prior.s_prior.values[both] - scene.alpha) / scene.alpha
    assert np.median(relative) < 1e-5
    assert np.mean(relative < 1e-4) > 0.9


def test_nearest_pixel_scale_is_not_interpolated(pair, intrinsics):
    variance = ScalarMap(np.full(pair.depth_prev.shape, 0.01), pair.depth_prev.mask)
    cfg = PropagationConfig(interpolate=False)
    prior = PropagationService.warp_posterior(pair.depth_prev, variance, pair.pose, intrinsics, pair.d_rel_curr, cfg)
    z_buffer, _ = PropagationService.splat(pair.depth_prev.values.astype(np.float64), pair.depth_prev.mask,
                                           pair.pose, intrinsics)

    covered = prior.coverage
    expected = (z_buffer[covered] / pair.d_rel_curr.values[covered]).astype(np.float32)
    assert np.array_equal(prior.s_prior.values[covered], expected)
