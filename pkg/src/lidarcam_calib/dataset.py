"""Manifest loading and per-frame feature extraction."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import formats
from .camera_features import ImageLineSet, build_camera_frame
from .errors import DataError, InsufficientEdgePoints, LineDeficit
from .geometry import CameraIntrinsics, RigidTransform
from .lidar_features import (
    EdgeConfig,
    EdgeLines,
    PassthroughBounds,
    PointCloud,
    RansacConfig,
    detect_edge_points,
    fit_boundary_lines,
    passthrough_filter,
    segment_plane,
)
from .solver import FramePair
from .target import TargetModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExtractionConfig:
    bounds: PassthroughBounds = PassthroughBounds()
    ransac: RansacConfig = RansacConfig()
    edge: EdgeConfig = EdgeConfig()
    pnp_residual_tol: float = 2.0

    def with_seed(self, seed):
        return replace(self, ransac=replace(self.ransac, seed=int(seed)))

    def with_up_axis(self, up):
        return replace(self, edge=replace(self.edge, up_axis=tuple(float(v) for v in up)))


@dataclass(frozen=True)
class RawFrame:
    frame_id: str
    cloud: PointCloud
    lines: ImageLineSet


@dataclass(frozen=True)
class Dataset:
    frames: tuple
    intrinsics: CameraIntrinsics
    target: TargetModel
    image_size: tuple = (1280, 960)
    up_axis: tuple = (0.0, 0.0, 1.0)
    ground_truth: RigidTransform | None = None
    manifest: dict = field(default_factory=dict, compare=False)

    def frame(self, frame_id):
        for f in self.frames:
            if f.frame_id == str(frame_id):
                return f
        raise DataError(f"no frame with id {frame_id!r}")


def extraction_config_from_dict(d) -> ExtractionConfig:
    """Optional ``extraction`` block of a manifest: ``passthrough``, ``ransac``, ``edge``, ``pnp_residual_tol``."""
    d = d or {}
    try:
        pt = d.get("passthrough", {})
        bounds = PassthroughBounds(**{k: tuple(v) for k, v in pt.items()})
        ransac = RansacConfig(**d.get("ransac", {}))
        edge = EdgeConfig(**{k: tuple(v) if k == "up_axis" else v for k, v in d.get("edge", {}).items()})
        return ExtractionConfig(bounds, ransac, edge, float(d.get("pnp_residual_tol", 2.0)))
    except (TypeError, ValueError) as exc:
        raise DataError(f"malformed extraction config: {exc}") from exc


def load_manifest(path) -> Dataset:
    path = Path(path)
    m = formats.read_json(path)
    root = path.parent
    try:
        frames = tuple(
            RawFrame(
                str(f["id"]),
                formats.read_cloud(root / f["cloud"]),
                formats.read_image_features(root / f["image_features"]),
            )
            for f in m["frames"]
        )
        K = formats.intrinsics_from_dict(m["intrinsics"])
        target = TargetModel(float(m["target"]["side_m"]))
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed manifest {path}: missing {exc}") from exc
    ids = [f.frame_id for f in frames]
    if len(set(ids)) != len(ids):
        raise DataError("manifest frame ids are not unique")
    gt = m.get("ground_truth")
    return Dataset(
        frames,
        K,
        target,
        tuple(m.get("image_size", (1280, 960))),
        tuple(m.get("lidar", {}).get("up_axis", (0.0, 0.0, 1.0))),
        formats.transform_from_dict(gt) if gt else None,
        m,
    )


def extract_lidar(cloud: PointCloud, cfg: ExtractionConfig):
    """Planar segmentation and (possibly partial) boundary lines of one cloud."""
    filtered = passthrough_filter(cloud, cfg.bounds)
    seg = segment_plane(filtered, cfg.ransac)
    edge_cloud = detect_edge_points(filtered, cfg.edge)
    try:
        edges = fit_boundary_lines(edge_cloud, seg.plane, cfg.ransac, seg.centroid, cfg.edge.up_axis)
    except LineDeficit as exc:
        log.warning("line deficit: %s", exc)
        edges = exc.partial if exc.partial is not None else EdgeLines()
    except InsufficientEdgePoints as exc:
        log.warning("no usable edge points: %s", exc)
        edges = EdgeLines()
    return seg, edges


def extract_frame_pair(frame_id, cloud, lines, K, target, cfg: ExtractionConfig = ExtractionConfig()) -> FramePair:
    seg, edges = extract_lidar(cloud, cfg)
    camera = build_camera_frame(lines, target, K, cfg.pnp_residual_tol)
    return FramePair.from_features(frame_id, seg, edges, camera)


def build_frame_pairs(ds: Dataset, cfg: ExtractionConfig | None = None, seed=None):
    """Extract every frame; the manifest's up axis and ``extraction`` block apply by default."""
    if cfg is None:
        cfg = extraction_config_from_dict(ds.manifest.get("extraction"))
        if "up_axis" not in ds.manifest.get("extraction", {}).get("edge", {}):
            cfg = cfg.with_up_axis(ds.up_axis)
    if seed is not None:
        cfg = cfg.with_seed(seed)
    pairs = []
    for f in ds.frames:
        try:
            pairs.append(extract_frame_pair(f.frame_id, f.cloud, f.lines, ds.intrinsics, ds.target, cfg))
        except DataError as exc:
            raise DataError(f"frame {f.frame_id}: {exc}") from exc
    return pairs
