"""LIDAR-side feature extraction.

passthrough filter -> RANSAC plane (planar points) and
edge detection -> band filter around the plane -> sequential RANSAC lines.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyResult,
    InsufficientEdgePoints,
    InsufficientPoints,
    LabelingError,
    LineDeficit,
    NoConsensus,
    NoRingStructure,
)
from .geometry import Line3, Plane
from .target import EDGE_LABELS


@dataclass(frozen=True)
class PointCloud:
    xyz: np.ndarray
    ring: np.ndarray | None = None
    intensity: np.ndarray | None = None

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(xyz)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "xyz", xyz)
        if self.ring is not None:
            ring = np.asarray(self.ring).astype(np.int64).reshape(-1)
            if ring.shape[0] != xyz.shape[0]:
                raise ValueError("ring array length does not match points")
            if ring.size and ring.min() < 0:
                raise ValueError("ring indices must be non-negative")
            object.__setattr__(self, "ring", ring)
        if self.intensity is not None:
            inten = np.asarray(self.intensity, dtype=float).reshape(-1)
            if inten.shape[0] != xyz.shape[0]:
                raise ValueError("intensity array length does not match points")
            object.__setattr__(self, "intensity", inten)

    def __len__(self):
        return self.xyz.shape[0]

    def subset(self, mask_or_index):
        return PointCloud(
            self.xyz[mask_or_index],
            None if self.ring is None else self.ring[mask_or_index],
            None if self.intensity is None else self.intensity[mask_or_index],
        )


@dataclass(frozen=True)
class PassthroughBounds:
    x: tuple = (-np.inf, np.inf)
    y: tuple = (-np.inf, np.inf)
    z: tuple = (-np.inf, np.inf)

    def __post_init__(self):
        for axis in (self.x, self.y, self.z):
            if not axis[0] < axis[1]:
                raise ValueError(f"passthrough bounds need min < max, got {axis}")

    def contains(self, xyz):
        xyz = np.asarray(xyz, dtype=float)
        keep = np.ones(xyz.shape[0], dtype=bool)
        for k, (lo, hi) in enumerate((self.x, self.y, self.z)):
            keep &= (xyz[:, k] >= lo) & (xyz[:, k] <= hi)
        return keep


@dataclass(frozen=True)
class RansacConfig:
    dist_thresh: float = 0.02
    line_dist_thresh: float = 0.02
    plane_band: float = 0.05
    min_plane_inliers: int = 100
    min_line_points: int = 5
    max_iterations: int = 1000
    seed: int = 0


@dataclass(frozen=True)
class EdgeConfig:
    # neighbours on both sides combined; k // 2 (at least 1) per side
    k_neighbors: int = 2
    depth_gap_thresh: float = 0.3
    up_axis: tuple = (0.0, 0.0, 1.0)


@dataclass(frozen=True)
class PlaneSegmentation:
    plane: Plane
    points: np.ndarray
    indices: np.ndarray
    centroid: np.ndarray

    @property
    def normal(self):
        return self.plane.normal

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class BoundaryLine:
    label: str
    line: Line3
    points: np.ndarray

    @property
    def direction(self):
        return self.line.direction

    @property
    def centroid(self):
        return self.line.point


@dataclass(frozen=True)
class EdgeLines:
    lines: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.lines)

    def __iter__(self):
        return iter(self.lines)

    def by_label(self):
        return {bl.label: bl for bl in self.lines}


# ---------------------------------------------------------------------------

def passthrough_filter(cloud: PointCloud, bounds: PassthroughBounds) -> PointCloud:
    keep = bounds.contains(cloud.xyz)
    if not keep.any():
        raise EmptyResult("no points survive the passthrough filter")
    return cloud.subset(keep)


def fit_plane_lsq(points):
    """Least-squares plane: centroid plus smallest principal axis."""
    c = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - c, full_matrices=False)
    n = vt[-1]
    n = n / np.linalg.norm(n)
    return Plane(n, float(n @ c)), c


def fit_line_lsq(points):
    c = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - c, full_matrices=False)
    return Line3(c, _orient_direction(vt[0]))


def _orient_direction(d):
    d = d / np.linalg.norm(d)
    for k in (2, 1, 0):
        if abs(d[k]) > 1e-12:
            return -d if d[k] < 0 else d
    return d


def _sample_sets(rng, n, size, max_iterations):
    """Index tuples for RANSAC: exhaustive when small enough, else random."""
    if math.comb(n, size) <= max_iterations:
        return np.array(list(itertools.combinations(range(n), size)), dtype=np.int64)
    return rng.integers(0, n, size=(max_iterations, size))


def _plane_inliers(xyz, plane, thresh):
    return np.flatnonzero(np.abs(xyz @ plane.normal - plane.distance) <= thresh)


def segment_plane(cloud: PointCloud, cfg: RansacConfig = RansacConfig()) -> PlaneSegmentation:
    """Largest-consensus plane by seeded RANSAC, refit by least squares.

    The returned inlier set is exactly the threshold set of the returned
    plane. The normal faces the sensor origin (``distance <= 0``).
    """
    xyz = cloud.xyz
    n = xyz.shape[0]
    if n < 3:
        raise InsufficientPoints(f"plane segmentation needs >= 3 points, got {n}")
    rng = np.random.default_rng(cfg.seed)
    triples = _sample_sets(rng, n, 3, cfg.max_iterations)
    a, b, c = xyz[triples[:, 0]], xyz[triples[:, 1]], xyz[triples[:, 2]]
    normals = np.cross(b - a, c - a)
    norms = np.linalg.norm(normals, axis=1)
    ok = norms > 1e-12
    if not ok.any():
        raise NoConsensus("all sampled point triples are collinear")
    normals = normals[ok] / norms[ok, None]
    offsets = np.einsum("ij,ij->i", normals, a[ok])

    counts = np.empty(normals.shape[0], dtype=np.int64)
    chunk = max(1, 2_000_000 // max(n, 1))
    for s in range(0, normals.shape[0], chunk):
        d = np.abs(xyz @ normals[s:s + chunk].T - offsets[s:s + chunk])
        counts[s:s + chunk] = (d <= cfg.dist_thresh).sum(axis=0)
    best = int(np.argmax(counts))
    if counts[best] < max(cfg.min_plane_inliers, 3):
        raise NoConsensus(
            f"best plane has {counts[best]} inliers < {cfg.min_plane_inliers}"
        )

    plane = Plane(normals[best], offsets[best])
    idx = _plane_inliers(xyz, plane, cfg.dist_thresh)
    for _ in range(20):
        plane, _ = fit_plane_lsq(xyz[idx])
        new_idx = _plane_inliers(xyz, plane, cfg.dist_thresh)
        if np.array_equal(new_idx, idx):
            break
        if new_idx.size < 3:
            break
        idx = new_idx
    plane = plane.facing_origin()
    idx = _plane_inliers(xyz, plane, cfg.dist_thresh)
    if idx.size < cfg.min_plane_inliers:
        raise NoConsensus(f"refit plane has {idx.size} inliers < {cfg.min_plane_inliers}")
    pts = xyz[idx]
    return PlaneSegmentation(plane, pts, idx, pts.mean(axis=0))


def _azimuth_basis(up):
    u = np.asarray(up, dtype=float)
    u = u / np.linalg.norm(u)
    # forward is x for a z-up unit, z otherwise (e.g. a -y-up optical frame)
    ref = np.array([1.0, 0.0, 0.0]) if abs(u[2]) > 0.9 else np.array([0.0, 0.0, 1.0])
    f = ref - (ref @ u) * u
    f /= np.linalg.norm(f)
    r = np.cross(f, u)
    return f, r


def azimuth(xyz, up=(0.0, 0.0, 1.0)):
    """Azimuth (radians) about ``up``; the discontinuity is behind the sensor."""
    f, r = _azimuth_basis(up)
    xyz = np.asarray(xyz, dtype=float)
    return np.arctan2(xyz @ r, xyz @ f)


def edge_scores(cloud: PointCloud, cfg: EdgeConfig = EdgeConfig()):
    """Max range jump to the nearest same-ring neighbours, per point.

    Rings are not wrapped around at +-pi.
    """
    if cloud.ring is None:
        raise NoRingStructure("edge detection needs per-point ring indices")
    per_side = max(1, cfg.k_neighbors // 2)
    rng_ = np.linalg.norm(cloud.xyz, axis=1)
    az = azimuth(cloud.xyz, cfg.up_axis)
    score = np.zeros(len(cloud))
    for ring in np.unique(cloud.ring):
        idx = np.flatnonzero(cloud.ring == ring)
        order = idx[np.lexsort((rng_[idx], az[idx]))]
        r = rng_[order]
        s = np.zeros(order.size)
        for o in range(1, per_side + 1):
            if o >= r.size:
                break
            gap = np.abs(r[o:] - r[:-o])
            s[o:] = np.maximum(s[o:], gap)
            s[:-o] = np.maximum(s[:-o], gap)
        score[order] = s
    return score


def detect_edge_points(cloud: PointCloud, cfg: EdgeConfig = EdgeConfig()) -> PointCloud:
    """Depth-discontinuity points (input order preserved)."""
    return cloud.subset(edge_scores(cloud, cfg) > cfg.depth_gap_thresh)


def _ransac_line(xyz, rng, cfg):
    pairs = _sample_sets(rng, xyz.shape[0], 2, cfg.max_iterations)
    a, b = xyz[pairs[:, 0]], xyz[pairs[:, 1]]
    d = b - a
    norms = np.linalg.norm(d, axis=1)
    ok = norms > 1e-12
    if not ok.any():
        return None
    a, d = a[ok], d[ok] / norms[ok, None]
    best_count, best = -1, None
    chunk = max(1, 1_000_000 // max(xyz.shape[0], 1))
    for s in range(0, a.shape[0], chunk):
        rel = xyz[None, :, :] - a[s:s + chunk, None, :]
        along = np.einsum("kij,kj->ki", rel, d[s:s + chunk])
        dist = np.linalg.norm(rel - along[..., None] * d[s:s + chunk, None, :], axis=2)
        counts = (dist <= cfg.line_dist_thresh).sum(axis=1)
        k = int(np.argmax(counts))
        if counts[k] > best_count:
            best_count, best = int(counts[k]), s + k
    return Line3(a[best], d[best]), best_count


def _line_distances(xyz, lines):
    return np.stack([ln.distance(xyz) for ln in lines], axis=1)


def label_lines(lines, plane_centroid, plane_normal, up_axis):
    """Quadrant labels of line centroids around the plane centroid.

    The in-plane frame is (right, up) with up the sensor's up axis projected
    on the plane and right = up x normal (normal facing the sensor).
    """
    n = np.asarray(plane_normal, dtype=float)
    u = np.asarray(up_axis, dtype=float)
    u = u - (u @ n) * n
    nu = np.linalg.norm(u)
    if nu < 1e-6:
        raise LabelingError("target plane is perpendicular to the sensor up axis")
    u /= nu
    right = np.cross(u, n)
    labels = []
    for ln in lines:
        c = np.asarray(ln.point) - plane_centroid
        a, b = c @ right, c @ u
        if b >= 0:
            labels.append("TopLeft" if a < 0 else "TopRight")
        else:
            labels.append("BottomLeft" if a < 0 else "BottomRight")
    if len(set(labels)) != len(labels):
        raise LabelingError(f"boundary lines map to duplicate labels {labels}; hold the target diamond-wise")
    return labels


def fit_boundary_lines(
    edge_cloud: PointCloud,
    target_plane: Plane,
    cfg: RansacConfig = RansacConfig(),
    plane_centroid=None,
    up_axis=(0.0, 0.0, 1.0),
) -> EdgeLines:
    """Fit and label the four target boundary lines among edge points.

    ``plane_centroid`` (the planar-point centroid) anchors the labelling; by
    default the centroid of the band-filtered edge points is used.
    """
    xyz = edge_cloud.xyz
    if xyz.shape[0] == 0:
        raise InsufficientEdgePoints("edge cloud is empty")
    xyz = xyz[np.abs(target_plane.signed_distance(xyz)) <= cfg.plane_band]
    if xyz.shape[0] < max(cfg.min_line_points, 2):
        raise InsufficientEdgePoints(
            f"{xyz.shape[0]} edge points within {cfg.plane_band} m of the target plane"
        )

    rng = np.random.default_rng(cfg.seed)
    remaining = np.arange(xyz.shape[0])
    lines = []
    for _ in range(4):
        if remaining.size < max(cfg.min_line_points, 2):
            break
        fit = _ransac_line(xyz[remaining], rng, cfg)
        if fit is None or fit[1] < cfg.min_line_points:
            break
        members = remaining[fit[0].distance(xyz[remaining]) <= cfg.line_dist_thresh]
        line = fit_line_lsq(xyz[members])
        refined = remaining[line.distance(xyz[remaining]) <= cfg.line_dist_thresh]
        if refined.size >= 2:
            members = refined
            line = fit_line_lsq(xyz[members])
        lines.append(line)
        remaining = np.setdiff1d(remaining, members)

    # joint nearest-line reassignment resolves points claimed near corners
    assign = None
    for _ in range(20):
        if not lines:
            break
        dist = _line_distances(xyz, lines)
        nearest = np.argmin(dist, axis=1)
        new_assign = np.where(dist[np.arange(xyz.shape[0]), nearest] <= cfg.line_dist_thresh, nearest, -1)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        lines = [
            fit_line_lsq(xyz[assign == j]) if (assign == j).sum() >= 2 else ln
            for j, ln in enumerate(lines)
        ]

    kept = []
    for j, ln in enumerate(lines):
        pts = xyz[assign == j]
        if pts.shape[0] >= cfg.min_line_points:
            # members must sit within the threshold of the final line
            pts = pts[ln.distance(pts) <= cfg.line_dist_thresh]
            if pts.shape[0] >= cfg.min_line_points:
                kept.append((ln, pts))

    anchor = xyz.mean(axis=0) if plane_centroid is None else np.asarray(plane_centroid, dtype=float)
    labels = label_lines([ln for ln, _ in kept], anchor, target_plane.normal, up_axis) if kept else []
    result = sorted(
        (BoundaryLine(lab, ln, pts) for lab, (ln, pts) in zip(labels, kept)),
        key=lambda bl: EDGE_LABELS.index(bl.label),
    )
    edges = EdgeLines(tuple(result))
    if len(edges) < 4:
        raise LineDeficit(len(edges), edges)
    return edges
