"""Accumulation and voxel downsampling."""
import numpy as np
import pytest

from ovseg3d.cloud import LabeledCloud, accumulate, voxel_downsample
from ovseg3d.errors import EmptyCloudError
from ovseg3d.geometry import CameraIntrinsics, Frame, Pose, backproject

from oracles import occupied_voxel_count


def tiny_frame(frame_id, depth_value=2.0, width=8, height=6):
    intr = CameraIntrinsics(10.0, 10.0, width / 2, height / 2, width, height)
    depth = np.full((height, width), depth_value)
    rgb = np.full((height, width, 3), frame_id % 256, dtype=np.uint8)
    return Frame(frame_id, rgb, depth, Pose.identity(), intr)


class TestAccumulate:
    def test_every_50th_of_2000_frames(self):
        frames = [tiny_frame(i) for i in range(2000)]
        cloud = accumulate(frames, stride=50, pixel_step=4)
        assert cloud.frame_count == 40
        assert len(np.unique(cloud.frame_ids)) == 40
        assert set(np.unique(cloud.frame_ids)) == set(range(0, 2000, 50))

    def test_dense_single_frame(self):
        cloud = accumulate([tiny_frame(0)], stride=1, pixel_step=1)
        assert len(cloud) == 8 * 6

    def test_flat_wall_stays_at_z(self):
        cloud = accumulate([tiny_frame(0, depth_value=2.0)], stride=1, pixel_step=1)
        np.testing.assert_allclose(cloud.positions[:, 2], 2.0)

    def test_empty_sequence(self):
        with pytest.raises(ValueError):
            accumulate([], stride=1, pixel_step=1)

    def test_all_invalid_depths(self):
        f = tiny_frame(0, depth_value=0.0)
        with pytest.raises(EmptyCloudError):
            accumulate([f], stride=1, pixel_step=1)

    def test_bad_stride(self):
        with pytest.raises(ValueError):
            accumulate([tiny_frame(0)], stride=0, pixel_step=1)

    def test_deterministic(self):
        frames = [tiny_frame(i, depth_value=1.0 + 0.1 * i) for i in range(6)]
        a = accumulate(frames, stride=2, pixel_step=2)
        b = accumulate(frames, stride=2, pixel_step=2)
        np.testing.assert_array_equal(a.positions, b.positions)
        np.testing.assert_array_equal(a.frame_ids, b.frame_ids)
        np.testing.assert_array_equal(a.pixels, b.pixels)

    def test_points_backproject_to_recorded_positions(self):
        frames = [tiny_frame(i, depth_value=1.0 + 0.5 * i) for i in range(4)]
        cloud = accumulate(frames, stride=1, pixel_step=3)
        by_id = {f.id: f for f in frames}
        for i in range(len(cloud)):
            u, v = cloud.pixels[i]
            p = backproject(by_id[int(cloud.frame_ids[i])], int(u), int(v))
            np.testing.assert_allclose(p, cloud.positions[i], atol=1e-6)

    def test_records_camera_centers(self):
        frames = [tiny_frame(i) for i in range(4)]
        cloud = accumulate(frames, stride=2, pixel_step=2)
        assert set(cloud.camera_centers) == {0, 2}


class TestVoxelDownsample:
    def test_corners_of_small_cube_collapse(self):
        corners = np.array([[x, y, z] for x in (0, 0.01) for y in (0, 0.01)
                            for z in (0, 0.01)])
        cloud = LabeledCloud.from_arrays(corners)
        assert len(voxel_downsample(cloud, 0.1)) == 1

    def test_distant_points_survive(self):
        cloud = LabeledCloud.from_arrays(np.array([[0.0, 0, 0], [1.0, 0, 0]]))
        assert len(voxel_downsample(cloud, 0.01)) == 2

    def test_grid_occupancy_matches_brute_force(self):
        xs, ys = np.meshgrid(np.arange(100) * 0.01, np.arange(100) * 0.01)
        pts = np.stack([xs.ravel(), ys.ravel(), np.zeros(xs.size)], axis=1)
        cloud = LabeledCloud.from_arrays(pts)
        down = voxel_downsample(cloud, 0.02)
        expected = occupied_voxel_count(pts, 0.02)
        assert len(down) == expected
        assert abs(len(down) - 2500) <= 25  # 2500 cells within 1%

    def test_representative_nearest_centroid_keeps_provenance(self):
        pts = np.array([[0.00, 0, 0], [0.05, 0, 0], [0.09, 0, 0]])
        cloud = LabeledCloud.from_arrays(pts, frame_ids=np.array([7, 8, 9], np.int32))
        down = voxel_downsample(cloud, 0.1)
        # centroid x ~ 0.0467, nearest is the middle point
        assert len(down) == 1
        np.testing.assert_allclose(down.positions[0], [0.05, 0, 0])
        assert down.frame_ids[0] == 8

    def test_tie_broken_by_lowest_index(self):
        # 0.25 and 0.75 are binary-exact: both sit exactly 0.25 from the centroid
        pts = np.array([[0.25, 0, 0], [0.75, 0, 0]])
        cloud = LabeledCloud.from_arrays(pts, frame_ids=np.array([3, 4], np.int32))
        down = voxel_downsample(cloud, 1.0)
        assert len(down) == 1
        assert down.frame_ids[0] == 3

    def test_idempotent_size(self, rng):
        pts = rng.uniform(0, 1, size=(500, 3))
        cloud = LabeledCloud.from_arrays(pts)
        once = voxel_downsample(cloud, 0.07)
        twice = voxel_downsample(once, 0.07)
        assert len(twice) == len(once)

    def test_output_never_larger(self, rng):
        pts = rng.uniform(0, 0.2, size=(300, 3))
        cloud = LabeledCloud.from_arrays(pts)
        assert len(voxel_downsample(cloud, 0.05)) <= len(cloud)

    def test_bad_voxel(self):
        cloud = LabeledCloud.from_arrays(np.zeros((1, 3)))
        with pytest.raises(ValueError):
            voxel_downsample(cloud, 0.0)
