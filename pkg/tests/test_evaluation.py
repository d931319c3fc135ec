from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import frame_pairs
from lidarcam_calib import synthetic as S
from lidarcam_calib.evaluation import (
    clip_line_to_rect,
    line_reprojection_error,
    render_overlay,
    stereo_consistency,
)
from lidarcam_calib.geometry import CameraIntrinsics, Line2, Plane, RigidTransform, point_line_distance_2d
from lidarcam_calib.solver import CalibrationProblem, FramePair, calibrate

K1 = CameraIntrinsics(1, 1, 0, 0)


def one_point_frame(fid, point, line):
    return FramePair(fid, np.zeros((1, 3)), Plane((0, 0, -1), -1.0), {"TopLeft": [point]},
                     {"TopLeft": Plane((1, 0, 0), 0.0)}, {"TopLeft": line})


def test_ground_truth_gives_zero_error(clean_scene, clean_pairs):
    rep = line_reprojection_error(clean_pairs, clean_scene.gt_transform, clean_scene.intrinsics)
    assert rep.global_average_px < 1e-6
    assert rep.points > 0 and rep.excluded == 0


def test_single_point_three_pixels_off():
    # the point projects to (0, 0); the line is v = 3
    f = one_point_frame("a", (0, 0, 1), Line2((0, 1, -3)))
    rep = line_reprojection_error([f], RigidTransform(), K1)
    assert rep.global_average_px == pytest.approx(3.0)
    assert rep.frames["a"]["edges"]["TopLeft"] == {"mean_px": pytest.approx(3.0), "count": 1}


def test_points_behind_camera_are_counted_and_skipped():
    f = FramePair("a", np.zeros((1, 3)), Plane((0, 0, -1), -1.0),
                  {"TopLeft": [(0, 0, 1), (0, 0, -1)]}, {"TopLeft": Plane((1, 0, 0), 0.0)},
                  {"TopLeft": Line2((0, 1, -2))})
    rep = line_reprojection_error([f], RigidTransform(), K1)
    assert rep.excluded == 1 and rep.points == 1
    assert rep.global_average_px == pytest.approx(2.0)


def test_global_average_is_count_weighted(noisy_scene, noisy_pairs):
    T = RigidTransform(noisy_scene.gt_transform.euler, (0.11, -0.19, 0.06))
    rep = line_reprojection_error(noisy_pairs, T, noisy_scene.intrinsics)
    edges = [e for f in rep.frames.values() for e in f["edges"].values()]
    weighted = sum(e["mean_px"] * e["count"] for e in edges) / sum(e["count"] for e in edges)
    assert rep.global_average_px == pytest.approx(weighted, rel=1e-12)
    assert all(e["mean_px"] >= 0 for e in edges)
    assert rep.to_dict()["definition"].startswith("global_average_px is the mean over all")


def test_frame_order_invariance(noisy_scene, noisy_pairs):
    T = noisy_scene.gt_transform
    a = line_reprojection_error(noisy_pairs, T, noisy_scene.intrinsics).to_dict()
    b = line_reprojection_error(noisy_pairs[::-1], T, noisy_scene.intrinsics).to_dict()
    assert a == b


@settings(max_examples=50)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_stereo_self_consistency_is_exactly_zero(x):
    r = RigidTransform.from_params(x)
    d = stereo_consistency(r, r, RigidTransform()).to_dict()
    assert all(d[k] == 0.0 for k in ("alpha_err_deg", "beta_err_deg", "gamma_err_deg", "x_err_m", "y_err_m",
                                     "z_err_m"))


def test_stereo_detects_known_offset():
    r2 = RigidTransform((0, 0, 0), (0, 0, 0))
    r1 = RigidTransform((0, 0, 0.01), (0.12, 0, 0))
    d = stereo_consistency(r1, r2, RigidTransform()).to_dict()
    assert d["gamma_err_deg"] == pytest.approx(np.degrees(0.01))
    assert d["x_err_m"] == pytest.approx(0.12)


def test_two_camera_rig():
    # the second camera sits 12 cm to the right of the first
    baseline = RigidTransform((0.0, 0.02, 0.0), (-0.12, 0.0, 0.0))  # camera 1 -> camera 2
    scene1 = S.make_scene(n_views=20, seed=21, range_sigma=0.01, pixel_sigma=0.5)
    scene2 = replace(scene1, gt_transform=baseline.compose(scene1.gt_transform), seed=22)
    r1 = calibrate(CalibrationProblem(frame_pairs(scene1)))
    r2 = calibrate(CalibrationProblem(frame_pairs(scene2)))
    d = stereo_consistency(r1, r2, baseline.inverse())
    # each calibration is within 0.5 deg / 2 cm, so the composition is within twice that
    assert np.all(np.abs(d.euler_err_deg) < 1.0)
    assert np.all(np.abs(d.translation_err_m) < 0.04)


# -- overlay ---------------------------------------------------------------------

def test_empty_overlay_is_just_the_border():
    f = FramePair("e", np.zeros((0, 3)), Plane((0, 0, -1), -1.0))
    svg = render_overlay(f, RigidTransform(), K1, (640, 480)).to_svg()
    assert "<rect" in svg and "<line" not in svg and "<circle" not in svg


def test_overlay_points_on_lines(clean_scene, clean_pairs):
    for f in clean_pairs:
        svg = render_overlay(f, clean_scene.gt_transform, clean_scene.intrinsics, clean_scene.image_size)
        edge_pts = [p for p in svg.points if p["kind"] == "edge"]
        assert edge_pts
        for p in edge_pts:
            assert point_line_distance_2d((p["x"], p["y"]), f.lines_2d[p["label"]]) < 1e-6
        assert len(svg.lines) == 4
        assert any(p["kind"] == "planar" for p in svg.points)


def test_overlay_is_deterministic(noisy_scene, noisy_pairs):
    args = (noisy_pairs[0], noisy_scene.gt_transform, noisy_scene.intrinsics, noisy_scene.image_size)
    assert render_overlay(*args).to_svg().encode() == render_overlay(*args).to_svg().encode()


def test_clip_line():
    assert clip_line_to_rect(Line2((0, 1, -10)), 100, 50) == ((0.0, 10.0), (100.0, 10.0))
    assert clip_line_to_rect(Line2((0, 1, -80)), 100, 50) is None
    (x1, y1), (x2, y2) = clip_line_to_rect(Line2.through((0, 0), (100, 50)), 100, 50)
    assert (x1, y1) == pytest.approx((0, 0)) and (x2, y2) == pytest.approx((100, 50))
