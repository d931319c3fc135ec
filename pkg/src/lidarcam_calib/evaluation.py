"""Calibration quality metrics and SVG overlays."""
from __future__ import annotations

import colorsys
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    DEPTH_EPS,
    CameraIntrinsics,
    Line2,
    RigidTransform,
    euler_to_quaternion,
    matrix_to_euler,
    point_line_distance_2d,
    project_points,
    quat_conjugate,
    quat_multiply,
    quaternion_to_matrix,
)
from .target import EDGE_LABELS

GLOBAL_AVERAGE_DEFINITION = (
    "global_average_px is the mean over all projected LIDAR edge points of the "
    "pixel distance to the matching image line; mean_of_frame_means_px averages "
    "per-frame means instead"
)


@dataclass
class LineReprojReport:
    frames: dict
    global_average_px: float | None
    mean_of_frame_means_px: float | None
    points: int
    excluded: int
    definition: str = GLOBAL_AVERAGE_DEFINITION

    def to_dict(self):
        return {
            "definition": self.definition,
            "global_average_px": self.global_average_px,
            "mean_of_frame_means_px": self.mean_of_frame_means_px,
            "points": self.points,
            "excluded_nonpositive_depth": self.excluded,
            "frames": self.frames,
        }


def _transform_of(x):
    return x.transform if hasattr(x, "transform") else x


def line_reprojection_error(frames, T, K: CameraIntrinsics) -> LineReprojReport:
    """Pixel distance of projected LIDAR edge points to their image lines."""
    T = _transform_of(T)
    per_frame = {}
    all_d = []
    excluded = 0
    for f in sorted(frames, key=lambda f: f.frame_id):
        edges = {}
        frame_d = []
        for lab in EDGE_LABELS:
            pts = f.edge_points.get(lab)
            line = f.lines_2d.get(lab)
            if pts is None or line is None or len(pts) == 0:
                continue
            pix, depth = project_points(K, T, pts)
            ok = depth > DEPTH_EPS
            excluded += int((~ok).sum())
            d = point_line_distance_2d(pix[ok], line)
            if d.size:
                edges[lab] = {"mean_px": float(np.mean(d)), "count": int(d.size)}
                frame_d.append(d)
        if frame_d:
            fd = np.concatenate(frame_d)
            all_d.append(fd)
            per_frame[f.frame_id] = {"edges": edges, "mean_px": float(np.mean(fd)), "count": int(fd.size)}
        else:
            per_frame[f.frame_id] = {"edges": {}, "mean_px": None, "count": 0}
    if all_d:
        flat = np.concatenate(all_d)
        glob = float(np.mean(flat))
        fm = float(np.mean([v["mean_px"] for v in per_frame.values() if v["mean_px"] is not None]))
        n = int(flat.size)
    else:
        glob, fm, n = None, None, 0
    return LineReprojReport(per_frame, glob, fm, n, excluded)


@dataclass(frozen=True)
class StereoConsistencyReport:
    euler_err_deg: tuple
    translation_err_m: tuple

    def to_dict(self):
        a, b, g = self.euler_err_deg
        x, y, z = self.translation_err_m
        return {
            "alpha_err_deg": a, "beta_err_deg": b, "gamma_err_deg": g,
            "x_err_m": x, "y_err_m": y, "z_err_m": z,
            "angles": "alpha, beta, gamma = phi, theta, psi of the Z-Y-X Euler angles",
        }


def relative_transform(T1: RigidTransform, T2: RigidTransform):
    """``T1 @ inverse(T2)`` as ``(R, t)``; cancels exactly when ``T1 == T2``."""
    q = quat_multiply(euler_to_quaternion(T1.euler), quat_conjugate(euler_to_quaternion(T2.euler)))
    R = quaternion_to_matrix(q)
    return R, T1.t - R @ T2.t


def stereo_consistency(result1, result2, reference: RigidTransform) -> StereoConsistencyReport:
    """Compare ``T_C1_L @ inverse(T_C2_L)`` with a reference ``T_C1_C2``.

    Errors are signed component differences (Euler angles wrapped to
    (-180, 180] degrees, translation in metres).
    """
    T1, T2, ref = _transform_of(result1), _transform_of(result2), _transform_of(reference)
    R, t = relative_transform(T1, T2)
    d_euler = matrix_to_euler(R) - np.asarray(ref.euler)
    d_euler = np.rad2deg(np.arctan2(np.sin(d_euler), np.cos(d_euler)))
    d_t = t - ref.t
    return StereoConsistencyReport(
        tuple(float(v) + 0.0 for v in d_euler), tuple(float(v) + 0.0 for v in d_t)
    )


# ---------------------------------------------------------------------------
# overlays

EDGE_COLORS = {
    "TopLeft": "#e6194b",
    "TopRight": "#3cb44b",
    "BottomRight": "#4363d8",
    "BottomLeft": "#f58231",
}


@dataclass
class SvgOverlay:
    width: int
    height: int
    lines: list = field(default_factory=list)
    points: list = field(default_factory=list)

    def to_svg(self):
        out = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">',
            f'<rect x="0" y="0" width="{self.width}" height="{self.height}" '
            'fill="white" stroke="black" stroke-width="2"/>',
        ]
        for ln in self.lines:
            out.append(
                f'<line class="image-line" data-label="{ln["label"]}" x1="{ln["x1"]:.4f}" '
                f'y1="{ln["y1"]:.4f}" x2="{ln["x2"]:.4f}" y2="{ln["y2"]:.4f}" '
                f'stroke="{ln["color"]}" stroke-width="1"/>'
            )
        for p in self.points:
            out.append(
                f'<circle class="{p["kind"]}" cx="{p["x"]:.4f}" cy="{p["y"]:.4f}" '
                f'r="{p["r"]}" fill="{p["color"]}"/>'
            )
        out.append("</svg>")
        return "\n".join(out) + "\n"


def clip_line_to_rect(line: Line2, width, height):
    """Endpoints of an image line inside ``[0, width] x [0, height]``, or None."""
    a, b, c = line.coeffs
    cand = []
    if abs(b) > 1e-15:
        for u in (0.0, float(width)):
            cand.append((u, -(a * u + c) / b))
    if abs(a) > 1e-15:
        for v in (0.0, float(height)):
            cand.append((-(b * v + c) / a, v))
    eps = 1e-9
    inside = [p for p in cand if -eps <= p[0] <= width + eps and -eps <= p[1] <= height + eps]
    if len(inside) < 2:
        return None
    inside.sort()
    return inside[0], inside[-1]


def _depth_color(depth, lo, hi):
    s = 0.0 if hi <= lo else (depth - lo) / (hi - lo)
    r, g, b = colorsys.hsv_to_rgb(0.66 * min(max(s, 0.0), 1.0), 1.0, 0.9)
    return "#%02x%02x%02x" % (round(r * 255), round(g * 255), round(b * 255))


def render_overlay(frame, T, K: CameraIntrinsics, image_size) -> SvgOverlay:
    """Project a frame's LIDAR features through ``T`` onto the image."""
    T = _transform_of(T)
    w, h = int(image_size[0]), int(image_size[1])
    svg = SvgOverlay(w, h)

    for lab in EDGE_LABELS:
        line = frame.lines_2d.get(lab)
        if line is None:
            continue
        seg = clip_line_to_rect(line, w, h)
        if seg is None:
            continue
        (x1, y1), (x2, y2) = seg
        svg.lines.append({"label": lab, "x1": x1, "y1": y1, "x2": x2, "y2": y2,
                          "color": EDGE_COLORS[lab]})

    def visible(pix, depth):
        return (depth > DEPTH_EPS) & (pix[:, 0] >= 0) & (pix[:, 0] <= w) & (pix[:, 1] >= 0) & (pix[:, 1] <= h)

    if len(frame.planar_points):
        pix, depth = project_points(K, T, frame.planar_points)
        ok = visible(pix, depth)
        if ok.any():
            lo, hi = float(depth[ok].min()), float(depth[ok].max())
            for (x, y), d in zip(pix[ok], depth[ok]):
                svg.points.append({"kind": "planar", "x": float(x), "y": float(y), "r": 1.5,
                                   "color": _depth_color(d, lo, hi)})
    for lab in EDGE_LABELS:
        pts = frame.edge_points.get(lab)
        if pts is None or len(pts) == 0:
            continue
        pix, depth = project_points(K, T, pts)
        ok = visible(pix, depth)
        for x, y in pix[ok]:
            svg.points.append({"kind": "edge", "label": lab, "x": float(x), "y": float(y), "r": 3,
                               "color": EDGE_COLORS[lab]})
    return svg
