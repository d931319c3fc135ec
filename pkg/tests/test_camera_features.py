import numpy as np
import pytest

from lidarcam_calib import synthetic as S
from lidarcam_calib.camera_features import (
    ImageLineSet,
    build_camera_frame,
    canonical_corner_order,
    lines_to_corners,
    solve_planar_pnp,
)
from lidarcam_calib.errors import DegenerateCorners, ParallelAdjacentLines
from lidarcam_calib.geometry import CameraIntrinsics, RigidTransform, rotation_angle
from lidarcam_calib.target import CORNER_LABELS, EDGE_CORNERS, TargetModel

K = CameraIntrinsics(900, 900, 640, 480)
MODEL = TargetModel(1.0)


def lines_from_corners(corners):
    named = dict(zip(CORNER_LABELS, np.asarray(corners, dtype=float)))
    return ImageLineSet({lab: (named[a], named[b]) for lab, (a, b) in EDGE_CORNERS.items()})


def project(T, X=None):
    X = T.apply(MODEL.corners() if X is None else X)
    h = X @ K.K.T
    return h[:, :2] / h[:, 2:3]


def test_square_corners():
    sq = [(0, 0), (1, 0), (1, 1), (0, 1)]
    assert np.allclose(lines_to_corners(lines_from_corners(sq)), sq, atol=1e-12)


def test_diamond_corners():
    d = [(100, 0), (200, 100), (100, 200), (0, 100)]
    assert np.allclose(lines_to_corners(lines_from_corners(d)), d, atol=1e-9)


def test_identical_adjacent_lines():
    seg = ((0.0, 0.0), (10.0, 5.0))
    lines = ImageLineSet({"TopLeft": seg, "TopRight": seg,
                          "BottomRight": ((0, 50), (50, 0)), "BottomLeft": ((0, 9), (9, 0))})
    with pytest.raises(ParallelAdjacentLines):
        lines_to_corners(lines)


def test_line_set_needs_all_labels():
    with pytest.raises(ValueError):
        ImageLineSet({"TopLeft": ((0, 0), (1, 1))})


def test_canonical_order_starts_at_top_and_runs_clockwise():
    d = np.array([(100, 200), (0, 100), (200, 100), (100, 0)], dtype=float)
    assert d[canonical_corner_order(d)].tolist() == [[100, 0], [200, 100], [100, 200], [0, 100]]


def test_pnp_noiseless(rng):
    for _ in range(20):
        T = RigidTransform(tuple(rng.uniform(-0.5, 0.5, 3)), (rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                                                            rng.uniform(2, 5)))
        res = solve_planar_pnp(project(T), MODEL, K)
        assert rotation_angle(res.rotation @ T.rotation.T) < 1e-6
        assert np.linalg.norm(res.translation - T.t) < 1e-6
        assert res.rms < 1e-6


def test_pnp_frontoparallel():
    T = RigidTransform((0, 0, 0), (0, 0, 2))
    res = solve_planar_pnp(project(T), MODEL, K)
    assert np.allclose(res.translation, [0, 0, 2], atol=1e-9)
    assert np.allclose(res.rotation, np.eye(3), atol=1e-9)


def test_pnp_ignores_cyclic_corner_order():
    T = RigidTransform((0.2, -0.1, 0.3), (0.1, 0.05, 3.0))
    pix = project(T)
    ref = solve_planar_pnp(pix, MODEL, K)
    for k in range(1, 4):
        res = solve_planar_pnp(np.roll(pix, k, axis=0), MODEL, K)
        assert np.allclose(res.pose.matrix, ref.pose.matrix, atol=1e-12)


def test_pnp_collinear_corners():
    with pytest.raises(DegenerateCorners):
        solve_planar_pnp([(0, 0), (1, 1), (2, 2), (5, 0)], MODEL, K)


def test_pnp_under_pixel_noise():
    # four corners leave the out-of-plane tilt weakly constrained, so the bound is on the median
    rng = np.random.default_rng(2024)
    rot, trans = [], []
    for _ in range(200):
        T = RigidTransform(tuple(rng.uniform(-0.5, 0.5, 3)), (rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                                                            rng.uniform(2, 5)))
        pix = project(T) + rng.normal(0, 0.5, (4, 2))
        res = solve_planar_pnp(pix, MODEL, K)
        assert res.rms <= 1.0
        rot.append(np.degrees(rotation_angle(res.rotation @ T.rotation.T)))
        trans.append(np.linalg.norm(res.translation - T.t))
    assert np.median(rot) < 0.5
    assert np.median(trans) < 0.02


# -- camera frame -------------------------------------------------------------------

def test_camera_frame_noiseless(rng):
    T = RigidTransform((0.3, -0.2, 0.1), (0.2, -0.1, 3.5))
    frame = build_camera_frame(lines_from_corners(project(T)), MODEL, K)
    posed = T.apply(MODEL.corners())
    assert np.allclose(frame.corners_3d, posed, atol=1e-9)
    for c, X in zip(CORNER_LABELS, frame.corners_3d):
        for lab in EDGE_CORNERS:
            if c in EDGE_CORNERS[lab]:
                assert abs(frame.back_planes[lab].normal @ X) < 1e-9
        assert abs(frame.plane.signed_distance(X[None])[0]) < 1e-9
    assert all(bp.distance == 0.0 for bp in frame.back_planes.values())
    # re-projection of recovered corners through the identity lands on the input corners
    h = frame.corners_3d @ K.K.T
    assert np.allclose(h[:, :2] / h[:, 2:3], frame.corners_2d, atol=1e-6)


def test_camera_frame_frontoparallel():
    frame = build_camera_frame(lines_from_corners(project(RigidTransform((0, 0, 0), (0, 0, 2)))), MODEL, K)
    assert np.allclose(frame.plane.normal, [0, 0, -1], atol=1e-12)
    assert frame.plane.distance == pytest.approx(-2.0, abs=1e-9)


def test_camera_frame_from_synthetic_lines(clean_scene):
    for pose in clean_scene.poses:
        frame = build_camera_frame(S.sample_target_camera(clean_scene, pose), clean_scene.target,
                                   clean_scene.intrinsics)
        posed = clean_scene.gt_transform.apply(pose.apply(clean_scene.target.corners()))
        # corner correspondence is by image position, so compare as sets
        d = np.linalg.norm(frame.corners_3d[:, None] - posed[None], axis=2)
        assert np.all(d.min(axis=1) < 1e-9)
