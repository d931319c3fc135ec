"""Camera-side features from the four labelled image segments of the target.

The segments themselves come from an external line detector (or the
simulator); this module turns them into corners, a target pose, the target
plane and one back-projected plane per edge.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCorners, DegenerateLine, ParallelAdjacentLines, PnPDiverged
from .geometry import (
    CameraIntrinsics,
    Line2,
    Plane,
    RigidTransform,
    back_projected_plane,
    intersect_three_planes,
    nearest_rotation,
    rotvec_to_matrix,
)
from .lm import LMConfig, levenberg_marquardt
from .target import CORNER_EDGES, CORNER_LABELS, EDGE_LABELS, TargetModel


@dataclass(frozen=True)
class ImageLineSet:
    """Four labelled segments, ``label -> (p0, p1)`` in pixels."""

    segments: dict

    def __post_init__(self):
        segs = {}
        for label, (p0, p1) in dict(self.segments).items():
            if label not in EDGE_LABELS:
                raise ValueError(f"unknown edge label {label!r}")
            p0 = np.asarray(p0, dtype=float).reshape(2)
            p1 = np.asarray(p1, dtype=float).reshape(2)
            segs[label] = (p0, p1)
        if sorted(segs) != sorted(EDGE_LABELS):
            raise ValueError(f"need exactly the labels {EDGE_LABELS}, got {sorted(segs)}")
        object.__setattr__(self, "segments", segs)

    def line(self, label) -> Line2:
        p0, p1 = self.segments[label]
        try:
            return Line2.through(p0, p1)
        except DegenerateLine as exc:
            raise DegenerateLine(f"segment {label} has coincident endpoints") from exc


@dataclass(frozen=True)
class PnPResult:
    pose: RigidTransform
    rms: float
    rotation: np.ndarray
    translation: np.ndarray


@dataclass(frozen=True)
class CameraFrame:
    plane: Plane
    corners_2d: np.ndarray
    corners_3d: np.ndarray
    back_planes: dict
    lines_2d: dict
    pose: RigidTransform
    pnp_rms: float


def lines_to_corners(lines: ImageLineSet):
    """Corners Top, Right, Bottom, Left from adjacent-line intersections."""
    norm = {lab: lines.line(lab).normalized().coeffs for lab in EDGE_LABELS}
    corners = []
    for corner in CORNER_LABELS:
        a, b = CORNER_EDGES[corner]
        x = np.cross(norm[a], norm[b])
        if abs(x[2]) < 1e-9:
            raise ParallelAdjacentLines(f"edges {a} and {b} are parallel")
        corners.append(x[:2] / x[2])
    return np.array(corners)


def canonical_corner_order(corners):
    """Index order sorting corners clockwise on screen, topmost first."""
    corners = np.asarray(corners, dtype=float)
    c = corners.mean(axis=0)
    ang = np.arctan2(corners[:, 1] - c[1], corners[:, 0] - c[0])
    order = np.argsort(ang, kind="stable")
    top = int(np.argmin(corners[order, 1]))
    return np.roll(order, -top)


def _check_corners(corners):
    scale = max(1.0, float(np.ptp(corners)))
    for i, j, k in itertools.combinations(range(4), 3):
        u, v = corners[j] - corners[i], corners[k] - corners[i]
        if abs(u[0] * v[1] - u[1] * v[0]) < 1e-6 * scale * scale:
            raise DegenerateCorners("three of the four corners are collinear")


def _homography(src, dst):
    """DLT homography mapping ``src`` (N,2) to ``dst`` (N,2), with isotropic point normalisation."""
    def normaliser(p):
        c = p.mean(axis=0)
        s = np.sqrt(2.0) / np.mean(np.linalg.norm(p - c, axis=1))
        return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])

    Ts, Td = normaliser(src), normaliser(dst)
    sh = np.c_[src, np.ones(len(src))] @ Ts.T
    dh = np.c_[dst, np.ones(len(dst))] @ Td.T
    rows = []
    for (x, y, w), (u, v, t) in zip(sh, dh):
        rows.append([0, 0, 0, -t * x, -t * y, -t * w, v * x, v * y, v * w])
        rows.append([t * x, t * y, t * w, 0, 0, 0, -u * x, -u * y, -u * w])
    _, _, vt = np.linalg.svd(np.asarray(rows))
    Hn = vt[-1].reshape(3, 3)
    return np.linalg.inv(Td) @ Hn @ Ts


def _project(K, R, t, X):
    Xc = X @ R.T + t
    h = Xc @ K.T
    return h[:, :2] / h[:, 2:3], Xc[:, 2]


def solve_planar_pnp(corners_2d, model: TargetModel, K: CameraIntrinsics,
                     pnp_residual_tol=2.0, lm_cfg: LMConfig = LMConfig(max_iterations=50)):
    """Pose of the target in the camera frame from its four image corners.

    Homography decomposition gives the initial pose, refined by
    Levenberg-Marquardt on corner reprojection error. Corner order is
    canonicalised first, so any cyclic rotation of the input gives the same
    answer.
    """
    corners = np.asarray(corners_2d, dtype=float).reshape(4, 2)
    if not np.all(np.isfinite(corners)):
        raise DegenerateCorners("corner coordinates are not finite")
    _check_corners(corners)
    corners = corners[canonical_corner_order(corners)]
    obj = model.corners()
    Kmat = K.K

    H = _homography(obj[:, :2], corners)
    M = np.linalg.solve(Kmat, H)
    lam = 2.0 / (np.linalg.norm(M[:, 0]) + np.linalg.norm(M[:, 1]))
    if M[2, 2] * lam < 0:
        lam = -lam
    r1, r2 = lam * M[:, 0], lam * M[:, 1]
    R0 = nearest_rotation(np.column_stack([r1, r2, np.cross(r1, r2)]))
    t0 = lam * M[:, 2]

    def residual(x):
        R = rotvec_to_matrix(x[:3]) @ R0
        pix, _ = _project(Kmat, R, x[3:], obj)
        return (pix - corners).ravel()

    x, _ = levenberg_marquardt(residual, np.r_[0.0, 0.0, 0.0, t0], cfg=lm_cfg)
    R = rotvec_to_matrix(x[:3]) @ R0
    t = x[3:]
    pix, depth = _project(Kmat, R, t, obj)
    if np.any(depth <= 0):
        raise PnPDiverged("refined pose places the target behind the camera")
    rms = float(np.sqrt(np.mean(np.sum((pix - corners) ** 2, axis=1))))
    if not np.isfinite(rms) or rms > pnp_residual_tol:
        raise PnPDiverged(f"corner reprojection RMS {rms:.3g} px exceeds {pnp_residual_tol} px")
    return PnPResult(RigidTransform.from_rt(R, t), rms, R, t)


def build_camera_frame(lines: ImageLineSet, model: TargetModel, K: CameraIntrinsics,
                       pnp_residual_tol=2.0) -> CameraFrame:
    corners_2d = lines_to_corners(lines)
    pnp = solve_planar_pnp(corners_2d, model, K, pnp_residual_tol)
    normal = pnp.rotation @ np.array([0.0, 0.0, 1.0])
    plane = Plane.from_point_normal(pnp.translation, normal).facing_origin()

    lines_2d, back = {}, {}
    for label in EDGE_LABELS:
        l = lines.line(label)
        bp = back_projected_plane(K, l)
        # positive side holds the target interior
        if bp.normal @ pnp.translation < 0:
            bp = bp.flipped()
        lines_2d[label], back[label] = l, bp

    corners_3d = np.array([
        intersect_three_planes(plane, back[a], back[b])
        for a, b in (CORNER_EDGES[c] for c in CORNER_LABELS)
    ])
    return CameraFrame(plane, corners_2d, corners_3d, back, lines_2d, pnp.pose, pnp.rms)
