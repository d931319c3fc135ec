"""Extrinsic calibration from plane and back-projected-plane constraints.

Stage 1 minimises the point-to-plane cost::

    P1(T) = sum_i 1/p_i * sum_m (n_i . (R P_im + t) - d_i)**2

over LIDAR planar points and camera target planes. Stage 2 starts from the
stage-1 estimate and minimises the edge cost::

    P2(T) = sum_i sum_j 1/q_ij * sum_n (n_ij . (R Q_ijn + t))**2

over LIDAR edge points and the back-projected planes of the matching image
lines. ``T`` is parameterised as ``(phi, theta, psi, x, y, z)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalFailure, ObservabilityError
from .geometry import EULER_CONVENTION, Plane, RigidTransform, euler_derivatives, euler_to_matrix
from .lm import LMConfig, LMReport, levenberg_marquardt

P1_RULE = "point-to-plane stage needs at least 3 non-coplanar views (target normals must span 3D)"
P2_RULE = "edge stage needs at least 6 line correspondences from at least 2 distinct views"


@dataclass(frozen=True)
class FramePair:
    """Features of one target pose seen by both sensors.

    ``edge_points`` and ``back_planes`` are keyed by edge label; a line is a
    correspondence when its label appears in both.
    """

    frame_id: str
    planar_points: np.ndarray
    target_plane: Plane
    edge_points: dict = field(default_factory=dict)
    back_planes: dict = field(default_factory=dict)
    lines_2d: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "frame_id", str(self.frame_id))
        object.__setattr__(
            self, "planar_points", np.asarray(self.planar_points, dtype=float).reshape(-1, 3)
        )
        object.__setattr__(
            self,
            "edge_points",
            {k: np.asarray(v, dtype=float).reshape(-1, 3) for k, v in dict(self.edge_points).items()},
        )

    @classmethod
    def from_features(cls, frame_id, segmentation, edges, camera):
        return cls(
            frame_id,
            segmentation.points,
            camera.plane,
            {bl.label: bl.points for bl in edges},
            dict(camera.back_planes),
            dict(camera.lines_2d),
        )

    def line_labels(self):
        return sorted(
            lab for lab, pts in self.edge_points.items()
            if len(pts) and lab in self.back_planes
        )


@dataclass(frozen=True)
class ResidualBlock:
    """Points sharing one plane and one weight (``1/p_i`` or ``1/q_ij``)."""

    kind: str
    frame_id: str
    label: str
    normal: np.ndarray
    distance: float
    points: np.ndarray
    weight: float


@dataclass(frozen=True)
class SolverConfig:
    lm: LMConfig = LMConfig()
    skip_stage2: bool = False
    stage1_frames: tuple | None = None
    stage2_frames: tuple | None = None
    observability_tol: float = 1e-6


@dataclass(frozen=True)
class CalibrationProblem:
    frames: tuple
    config: SolverConfig = SolverConfig()
    initial: RigidTransform = RigidTransform()

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if not self.frames:
            raise ValueError("calibration needs at least one frame")


@dataclass
class StageReport:
    transform: RigidTransform
    cost: float
    iterations: int
    status: str
    lm: LMReport | None = None


@dataclass
class CalibrationResult:
    transform: RigidTransform
    stage1: StageReport
    stage2: StageReport | None
    status: str
    per_frame: dict

    def to_dict(self):
        phi, theta, psi = self.transform.euler

        def stage(s):
            if s is None:
                return None
            cost = s.cost if math.isfinite(s.cost) else None
            return {"cost": cost, "iters": s.iterations, "status": s.status}

        return {
            "euler_convention": EULER_CONVENTION,
            "euler_zyx_rad": [psi, theta, phi],
            "translation_m": list(self.transform.translation),
            "matrix_4x4": self.transform.matrix.tolist(),
            "stage1": stage(self.stage1),
            "stage2": stage(self.stage2),
            "status": self.status,
            "per_frame": self.per_frame,
        }


# ---------------------------------------------------------------------------
# single residuals

def residual_point_plane(T: RigidTransform, P, plane: Plane) -> float:
    return float(plane.normal @ (T.rotation @ np.asarray(P, dtype=float) + T.t) - plane.distance)


def residual_point_backplane(T: RigidTransform, Q, back_plane: Plane) -> float:
    if back_plane.distance != 0.0:
        raise ValueError("back-projected planes pass through the camera centre (distance 0)")
    return float(back_plane.normal @ (T.rotation @ np.asarray(Q, dtype=float) + T.t))


def jacobian_point_plane(T: RigidTransform, P, plane: Plane):
    """Gradient of :func:`residual_point_plane` w.r.t. ``(phi, theta, psi, x, y, z)``."""
    P = np.asarray(P, dtype=float)
    n = plane.normal
    return np.array([n @ (dR @ P) for dR in euler_derivatives(T.euler)] + list(n))


def jacobian_point_backplane(T: RigidTransform, Q, back_plane: Plane):
    return jacobian_point_plane(T, Q, back_plane)


# ---------------------------------------------------------------------------
# stacked residuals

def _sorted(frames):
    return sorted(frames, key=lambda f: f.frame_id)


def blocks_p1(frames):
    out = []
    for f in _sorted(frames):
        if len(f.planar_points) == 0:
            raise ValueError(f"frame {f.frame_id} has no planar points")
        out.append(ResidualBlock(
            "PointPlane", f.frame_id, "", f.target_plane.normal, f.target_plane.distance,
            f.planar_points, 1.0 / len(f.planar_points),
        ))
    return out


def blocks_p2(frames):
    out = []
    for f in _sorted(frames):
        for lab in f.line_labels():
            pts = f.edge_points[lab]
            bp = f.back_planes[lab]
            out.append(ResidualBlock(
                "PointBackPlane", f.frame_id, lab, bp.normal, bp.distance, pts, 1.0 / len(pts),
            ))
    return out


class StackedResiduals:
    """Weighted residual vector and Jacobian over a list of blocks."""

    def __init__(self, blocks):
        self.blocks = list(blocks)
        if not self.blocks:
            raise ValueError("no residual blocks")
        self.points = np.concatenate([b.points for b in self.blocks])
        self.normals = np.concatenate([np.broadcast_to(b.normal, b.points.shape) for b in self.blocks])
        self.offsets = np.concatenate([np.full(len(b.points), b.distance) for b in self.blocks])
        self.sqrt_w = np.concatenate([np.full(len(b.points), math.sqrt(b.weight)) for b in self.blocks])

    def raw(self, x):
        x = np.asarray(x, dtype=float)
        R = euler_to_matrix(x[:3])
        X = self.points @ R.T + x[3:]
        return np.einsum("ij,ij->i", self.normals, X) - self.offsets

    def residuals(self, x):
        return self.sqrt_w * self.raw(x)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        J = np.empty((self.points.shape[0], 6))
        for k, dR in enumerate(euler_derivatives(x[:3])):
            J[:, k] = np.einsum("ij,ij->i", self.normals, self.points @ dR.T)
        J[:, 3:] = self.normals
        return J * self.sqrt_w[:, None]

    def cost(self, x):
        r = self.residuals(x)
        return float(r @ r)


def cost_p1(T: RigidTransform, frames) -> float:
    return StackedResiduals(blocks_p1(frames)).cost(T.params)


def cost_p2(T: RigidTransform, frames) -> float:
    blocks = blocks_p2(frames)
    if not blocks:
        return 0.0
    return StackedResiduals(blocks).cost(T.params)


# ---------------------------------------------------------------------------
# observability

@dataclass(frozen=True)
class Observability:
    ok: bool
    rank: int | None = None
    singular_values: tuple = ()
    lines: int | None = None
    views: int | None = None
    rule: str = ""


def check_observability_p1(frames, tol=1e-6) -> Observability:
    N = np.array([f.target_plane.normal for f in _sorted(frames)], dtype=float).reshape(-1, 3)
    if N.shape[0] == 0:
        return Observability(False, 0, (), rule=P1_RULE)
    N = N / np.linalg.norm(N, axis=1, keepdims=True)
    s = np.linalg.svd(N, compute_uv=False)
    rank = int(np.sum(s / s[0] > tol))
    return Observability(rank == 3, rank, tuple(float(v) for v in s), rule=P1_RULE)


def check_observability_p2(frames) -> Observability:
    counts = [len(f.line_labels()) for f in frames]
    lines = sum(counts)
    views = sum(1 for c in counts if c > 0)
    return Observability(lines >= 6 and views >= 2, lines=lines, views=views, rule=P2_RULE)


# ---------------------------------------------------------------------------

def _subset(frames, ids):
    if ids is None:
        return list(frames)
    wanted = {str(i) for i in ids}
    return [f for f in frames if f.frame_id in wanted]


def _wrap(angles):
    a = np.asarray(angles, dtype=float)
    return np.arctan2(np.sin(a), np.cos(a))


def _solve(stack: StackedResiduals, x0, cfg: LMConfig):
    x, rep = levenberg_marquardt(stack.residuals, x0, stack.jacobian, cfg)
    T = RigidTransform(tuple(_wrap(x[:3])), tuple(x[3:]))
    return T, StageReport(T, rep.final_cost, rep.iterations, rep.status, rep)


def _rms(values):
    return float(np.sqrt(np.mean(values ** 2))) if values.size else None


def per_frame_stats(T: RigidTransform, frames):
    out = {}
    for f in _sorted(frames):
        r1 = StackedResiduals(blocks_p1([f])).raw(T.params)
        b2 = blocks_p2([f])
        r2 = StackedResiduals(b2).raw(T.params) if b2 else np.empty(0)
        out[f.frame_id] = {
            "planar_points": int(len(f.planar_points)),
            "edge_points": int(sum(len(b.points) for b in b2)),
            "lines": len(b2),
            "point_plane_rms_m": _rms(r1),
            "point_backplane_rms_m": _rms(r2),
        }
    return out


def calibrate(problem: CalibrationProblem) -> CalibrationResult:
    """Two-stage calibration: stage 1 (point-to-plane) then stage 2 (edges)."""
    cfg = problem.config
    frames = _sorted(problem.frames)
    f1 = _subset(frames, cfg.stage1_frames)
    f2 = _subset(frames, cfg.stage2_frames)

    obs1 = check_observability_p1(f1, cfg.observability_tol)
    if not obs1.ok:
        raise ObservabilityError(
            f"{P1_RULE}; got {len(f1)} view(s) with normal rank {obs1.rank}"
        )
    if not cfg.skip_stage2:
        obs2 = check_observability_p2(f2)
        if not obs2.ok:
            raise ObservabilityError(
                f"{P2_RULE}; got {obs2.lines} line(s) from {obs2.views} view(s)"
            )

    T1, stage1 = _solve(StackedResiduals(blocks_p1(f1)), problem.initial.params, cfg.lm)
    if cfg.skip_stage2:
        return CalibrationResult(T1, stage1, None, "stage2_skipped", per_frame_stats(T1, frames))

    try:
        T2, stage2 = _solve(StackedResiduals(blocks_p2(f2)), T1.params, cfg.lm)
    except NumericalFailure as exc:
        failed = StageReport(T1, float("nan"), 0, f"numerical_failure: {exc}")
        return CalibrationResult(T1, stage1, failed, "stage2_failed", per_frame_stats(T1, frames))
    return CalibrationResult(T2, stage1, stage2, "ok", per_frame_stats(T2, frames))
