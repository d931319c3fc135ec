import json
from dataclasses import replace

import numpy as np
import pytest

from lidarcam_calib import formats
from lidarcam_calib import synthetic as S
from lidarcam_calib.camera_features import lines_to_corners
from lidarcam_calib.errors import BehindCamera, NoHits
from lidarcam_calib.geometry import RigidTransform

FRONT = RigidTransform((0, 0, 0), (0, 0, 3))


def test_frontoparallel_points_within_four_sigma():
    scene = S.SyntheticScene(range_sigma=0.01)
    scan = S.scan_target(scene, FRONT, np.random.default_rng(0))
    on = scan.kind != S.KIND_WALL
    assert on.sum() > 500
    assert np.all(np.abs(scan.cloud.xyz[on, 2] - 3.0) <= 4 * 0.01)


def test_noiseless_points_lie_on_target():
    scene = S.SyntheticScene()
    for pose in S.make_scene(5, seed=2).poses:
        scan = S.scan_target(scene, pose)
        on = scan.kind != S.KIND_WALL
        local = pose.inverse().apply(scan.cloud.xyz[on])
        assert np.all(np.abs(local[:, 2]) < 1e-12)
        # inside the diamond, edge crossings sit on its border
        assert np.all(np.abs(local[:, 0]) + np.abs(local[:, 1]) <= scene.target.half_diagonal + 1e-12)


def test_wall_points_sit_behind_target():
    scan = S.scan_target(S.SyntheticScene(), FRONT)
    wall = scan.cloud.xyz[scan.kind == S.KIND_WALL]
    assert len(wall) and np.allclose(wall[:, 2], 6.0)


def test_target_behind_sensor():
    with pytest.raises(NoHits):
        S.sample_target_lidar(S.SyntheticScene(), RigidTransform((0, 0, 0), (0, 0, -3)))


def test_rings_are_labelled_in_order():
    cloud = S.sample_target_lidar(S.SyntheticScene(), FRONT)
    assert cloud.ring.min() >= 0 and cloud.ring.max() < 32
    assert np.all(np.diff(cloud.ring) >= 0)


def test_camera_corners_by_hand():
    scene = S.SyntheticScene(gt_transform=RigidTransform())
    a = 1 / np.sqrt(2)
    pix, depth = S.projected_corners(scene, RigidTransform((0, 0, 0), (0, 0, 2)))
    expected = [(640, 480 - 900 * a / 2), (640 + 900 * a / 2, 480), (640, 480 + 900 * a / 2),
                (640 - 900 * a / 2, 480)]
    assert np.allclose(pix, expected, atol=1e-9)
    assert np.allclose(depth, 2.0)


def test_noiseless_lines_give_back_corners():
    scene = S.make_scene(5, seed=4)
    for pose in scene.poses:
        pix, _ = S.projected_corners(scene, pose)
        got = lines_to_corners(S.sample_target_camera(scene, pose))
        d = np.linalg.norm(got[:, None] - pix[None], axis=2)
        assert np.all(d.min(axis=1) < 1e-9)


def test_corner_behind_camera():
    scene = S.SyntheticScene(gt_transform=RigidTransform())
    # tilted so the Top corner crosses the image plane
    pose = RigidTransform((np.pi / 2 - 0.1, 0, 0), (0, 0, 0.3))
    with pytest.raises(BehindCamera):
        S.sample_target_camera(scene, pose)


def test_random_poses_are_valid_and_seeded():
    a = S.make_scene(10, seed=11)
    b = S.make_scene(10, seed=11)
    assert a.poses == b.poses
    assert all(S.pose_is_valid(a, p) for p in a.poses)
    assert S.pose_normal_rank(a) == 3


def test_parallel_poses_have_rank_one():
    assert S.pose_normal_rank(S.make_scene(4, seed=0, parallel=True)) == 1


def test_dataset_layout(tmp_path):
    scene = S.make_scene(20, seed=5)
    path = S.generate_dataset(scene, tmp_path)
    m = json.loads(path.read_text())
    assert len(m["frames"]) == 20
    for f in m["frames"]:
        assert (tmp_path / f["cloud"]).exists() and (tmp_path / f["image_features"]).exists()
    assert m["target"] == {"side_m": 1.0}
    assert formats.transform_from_dict(m["ground_truth"]) == scene.gt_transform
    assert m["ground_truth"]["pose_normal_rank"] == 3


def test_dataset_without_ground_truth(tmp_path):
    path = S.generate_dataset(S.make_scene(3, seed=5), tmp_path, include_ground_truth=False)
    assert "ground_truth" not in json.loads(path.read_text())


@pytest.mark.parametrize("fmt", ["csv", "bin"])
def test_dataset_regeneration_is_byte_identical(tmp_path, fmt):
    scene = S.make_scene(4, seed=6, range_sigma=0.01, pixel_sigma=0.5)
    S.generate_dataset(scene, tmp_path / "a", cloud_format=fmt)
    S.generate_dataset(scene, tmp_path / "b", cloud_format=fmt)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 9
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_frame_noise_depends_on_seed_and_index():
    scene = S.make_scene(3, seed=8, range_sigma=0.01)
    c0, _ = S.simulate_frame(scene, 0)
    again, _ = S.simulate_frame(scene, 0)
    other, _ = S.simulate_frame(replace(scene, seed=9), 0)
    assert np.array_equal(c0.xyz, again.xyz)
    assert c0.xyz.shape == other.xyz.shape and not np.array_equal(c0.xyz, other.xyz)


def test_scene_config_keys():
    cfg = {
        "seed": 2,
        "ground_truth": {"euler_deg": [1, 2, 3], "translation_m": [0.0, 0.1, 0.2]},
        "noise": {"lidar_range_sigma_m": 0.02, "pixel_sigma_px": 1.0},
        "lidar": {"rings": 16, "min_elevation_deg": -15, "max_elevation_deg": 15},
        "poses": [{"euler_rad": [0, 0, 0.785], "translation_m": [0, 0, 3]}],
    }
    scene = S.scene_from_config(cfg)
    assert np.allclose(scene.gt_transform.euler, np.deg2rad([1, 2, 3]))
    assert len(scene.ring_elevations_deg) == 16 and scene.ring_elevations_deg[0] == -15
    assert scene.range_sigma == 0.02 and scene.pixel_sigma == 1.0
    assert scene.poses[0].translation == (0, 0, 3)
