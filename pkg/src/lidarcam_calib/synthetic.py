"""Ground-truth scene generator.

Poses a square target in front of a simulated spinning LIDAR and a pinhole
camera related by a known extrinsic transform, and produces the same inputs
the real pipeline consumes: ring-structured point clouds and labelled image
segments.

The simulated LIDAR spins about its ``-y`` axis (x right, y down, z forward),
so its frame roughly coincides with the camera optical frame and identity is
a reasonable initial guess. Besides the regular ring/azimuth samples it emits
one return exactly where each ring crosses the target silhouette; these are
the ideal edge returns the edge detector picks up. A wall behind the target,
restricted to a margin around the silhouette, provides the depth gaps.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .camera_features import ImageLineSet, canonical_corner_order
from .errors import BehindCamera, NoHits
from .geometry import CameraIntrinsics, RigidTransform, rot_x, rot_y, rot_z
from .lidar_features import PointCloud
from .target import CORNER_LABELS, EDGE_CORNERS, EDGE_LABELS, TargetModel

LIDAR_UP = (0.0, -1.0, 0.0)

DEFAULT_GT = RigidTransform(
    tuple(np.deg2rad([10.0, -5.0, 3.0])), (0.1, -0.2, 0.05)
)

KIND_INTERIOR, KIND_EDGE, KIND_WALL = 0, 1, 2


def default_rings():
    return tuple(np.linspace(-25.0, 15.0, 32))


@dataclass(frozen=True)
class SyntheticScene:
    gt_transform: RigidTransform = DEFAULT_GT
    intrinsics: CameraIntrinsics = CameraIntrinsics(900.0, 900.0, 640.0, 480.0)
    image_size: tuple = (1280, 960)
    target: TargetModel = TargetModel(1.0)
    poses: tuple = ()
    ring_elevations_deg: tuple = field(default_factory=default_rings)
    azimuth_step_deg: float = 0.2
    range_sigma: float = 0.0
    pixel_sigma: float = 0.0
    seed: int = 0
    background_offset: float = 3.0
    background_margin: float = 1.25

    def frame_rng(self, index):
        return np.random.default_rng([self.seed, index])

    def with_poses(self, poses):
        return replace(self, poses=tuple(poses))


@dataclass(frozen=True)
class LidarScan:
    """Simulated scan with per-point provenance (for oracles)."""

    cloud: PointCloud
    clean_xyz: np.ndarray
    kind: np.ndarray
    edge_label: np.ndarray


# ---------------------------------------------------------------------------
# LIDAR

def _ray_dirs(elev_deg, az_deg):
    e = np.deg2rad(np.asarray(elev_deg))[:, None]
    a = np.deg2rad(np.asarray(az_deg))[None, :]
    ce = np.cos(e)
    d = np.stack(np.broadcast_arrays(ce * np.sin(a), -np.sin(e), ce * np.cos(a)), axis=-1)
    return d


def _edge_crossings(A, B, elev):
    """Parameters ``s`` in [0, 1] where ``A + s (B - A)`` has elevation ``elev`` (rad)."""
    u = np.array(LIDAR_UP)
    D = B - A
    au, du = A @ u, D @ u
    k = np.sin(elev) ** 2
    a = du * du - k * (D @ D)
    b = 2.0 * (au * du - k * (A @ D))
    c = au * au - k * (A @ A)
    if abs(a) < 1e-15:
        roots = [] if abs(b) < 1e-15 else [-c / b]
    else:
        disc = b * b - 4 * a * c
        if disc < 0:
            return []
        sq = np.sqrt(disc)
        roots = [(-b - sq) / (2 * a), (-b + sq) / (2 * a)]
    out = []
    for s in roots:
        if 0.0 <= s <= 1.0:
            X = A + s * D
            # squaring admits the mirror cone; keep the matching side
            if np.sign(X @ u) == np.sign(np.sin(elev)) or abs(np.sin(elev)) < 1e-15:
                out.append(float(s))
    return out


def scan_target(scene: SyntheticScene, pose: RigidTransform, rng=None) -> LidarScan:
    """Ray-cast one frame. ``pose`` maps target coordinates to the LIDAR frame."""
    rng = np.random.default_rng(0) if rng is None else rng
    R, t = pose.rotation, pose.t
    n = R[:, 2]
    if n @ t < 0:
        n = -n  # away from the sensor
    d_target = float(n @ t)
    if d_target <= 0:
        raise NoHits("target plane passes through the sensor")

    elev = np.asarray(scene.ring_elevations_deg, dtype=float)
    az = np.arange(-90.0, 90.0, scene.azimuth_step_deg)
    dirs = _ray_dirs(elev, az)
    ring = np.broadcast_to(np.arange(elev.size)[:, None], dirs.shape[:2])
    dirs = dirs.reshape(-1, 3)
    ring = ring.reshape(-1)

    cos_inc = dirs @ n
    front = cos_inc > 1e-9
    s_plane = np.zeros(dirs.shape[0])
    s_plane[front] = d_target / cos_inc[front]
    hit = dirs * s_plane[:, None]
    local = (hit - t) @ R
    on_target = front & scene.target.contains(local[:, :2])
    in_margin = front & scene.target.contains(local[:, :2], scene.background_margin) & ~on_target

    s_wall = (d_target + scene.background_offset) / np.where(front, cos_inc, 1.0)

    xyz = [hit[on_target], dirs[in_margin] * s_wall[in_margin, None]]
    rings = [ring[on_target], ring[in_margin]]
    kinds = [np.full(on_target.sum(), KIND_INTERIOR), np.full(in_margin.sum(), KIND_WALL)]
    labels = [np.full(on_target.sum(), ""), np.full(in_margin.sum(), "")]

    corners = pose.apply(scene.target.corners())
    name_to_idx = {c: i for i, c in enumerate(CORNER_LABELS)}
    edge_xyz, edge_ring, edge_lab = [], [], []
    for r_i, e in enumerate(np.deg2rad(elev)):
        for lab in EDGE_LABELS:
            a_name, b_name = EDGE_CORNERS[lab]
            A, B = corners[name_to_idx[a_name]], corners[name_to_idx[b_name]]
            for s in _edge_crossings(A, B, e):
                X = A + s * (B - A)
                if X[2] <= 0:
                    continue
                edge_xyz.append(X)
                edge_ring.append(r_i)
                edge_lab.append(lab)
    if edge_xyz:
        xyz.append(np.array(edge_xyz))
        rings.append(np.array(edge_ring))
        kinds.append(np.full(len(edge_xyz), KIND_EDGE))
        labels.append(np.array(edge_lab))

    clean = np.concatenate(xyz)
    ring_all = np.concatenate(rings)
    kind = np.concatenate(kinds)
    label = np.concatenate(labels).astype(str)
    if not np.any(kind != KIND_WALL):
        raise NoHits("target is outside the LIDAR field of view")

    rng_m = np.linalg.norm(clean, axis=1)
    if scene.range_sigma > 0:
        noisy = clean * ((rng_m + rng.normal(0.0, scene.range_sigma, rng_m.size)) / rng_m)[:, None]
    else:
        noisy = clean.copy()

    az_all = np.arctan2(clean[:, 0], clean[:, 2])
    order = np.lexsort((az_all, ring_all))
    return LidarScan(
        PointCloud(noisy[order], ring_all[order]),
        clean[order],
        kind[order],
        label[order],
    )


def sample_target_lidar(scene: SyntheticScene, pose: RigidTransform, rng=None) -> PointCloud:
    return scan_target(scene, pose, rng).cloud


# ---------------------------------------------------------------------------
# camera

def projected_corners(scene: SyntheticScene, pose: RigidTransform):
    """Noise-free corner pixels (model order Top, Right, Bottom, Left) and depths."""
    Xc = scene.gt_transform.apply(pose.apply(scene.target.corners()))
    if np.any(Xc[:, 2] <= 1e-9):
        raise BehindCamera("a target corner is behind the camera")
    h = Xc @ scene.intrinsics.K.T
    return h[:, :2] / h[:, 2:3], Xc[:, 2]


def sample_target_camera(scene: SyntheticScene, pose: RigidTransform, rng=None) -> ImageLineSet:
    rng = np.random.default_rng(0) if rng is None else rng
    pix, _ = projected_corners(scene, pose)
    order = canonical_corner_order(pix)
    named = {CORNER_LABELS[k]: pix[i] for k, i in enumerate(order)}
    segments = {}
    for lab in EDGE_LABELS:
        a, b = EDGE_CORNERS[lab]
        p0, p1 = named[a].copy(), named[b].copy()
        if scene.pixel_sigma > 0:
            p0 = p0 + rng.normal(0.0, scene.pixel_sigma, 2)
            p1 = p1 + rng.normal(0.0, scene.pixel_sigma, 2)
        segments[lab] = (p0, p1)
    return ImageLineSet(segments)


def simulate_frame(scene: SyntheticScene, index: int):
    """``(cloud, image lines)`` for pose ``index`` with its derived RNG stream."""
    rng = scene.frame_rng(index)
    pose = scene.poses[index]
    cloud = sample_target_lidar(scene, pose, rng)
    lines = sample_target_camera(scene, pose, rng)
    return cloud, lines


# ---------------------------------------------------------------------------
# poses

def edge_return_counts(scene: SyntheticScene, pose: RigidTransform):
    """Number of ring crossings per edge label (ideal, noise-free)."""
    corners = pose.apply(scene.target.corners())
    idx = {c: i for i, c in enumerate(CORNER_LABELS)}
    counts = {}
    for lab in EDGE_LABELS:
        a, b = EDGE_CORNERS[lab]
        A, B = corners[idx[a]], corners[idx[b]]
        counts[lab] = sum(len(_edge_crossings(A, B, e)) for e in np.deg2rad(scene.ring_elevations_deg))
    return counts


def pose_is_valid(scene: SyntheticScene, pose: RigidTransform, pixel_margin=10.0,
                  elevation_margin_deg=1.0, max_incidence_deg=60.0, min_edge_returns=6):
    corners = pose.apply(scene.target.corners())
    try:
        pix, _ = projected_corners(scene, pose)
    except BehindCamera:
        return False
    w, h = scene.image_size
    if np.any(pix < pixel_margin) or np.any(pix[:, 0] > w - pixel_margin) or np.any(pix[:, 1] > h - pixel_margin):
        return False
    el = np.rad2deg(np.arcsin(-corners[:, 1] / np.linalg.norm(corners, axis=1)))
    lo, hi = min(scene.ring_elevations_deg), max(scene.ring_elevations_deg)
    if el.min() < lo + elevation_margin_deg or el.max() > hi - elevation_margin_deg:
        return False
    view = pose.t / np.linalg.norm(pose.t)
    inc = np.rad2deg(np.arccos(abs(view @ pose.rotation[:, 2])))
    if inc > max_incidence_deg:
        return False
    return min(edge_return_counts(scene, pose).values()) >= min_edge_returns


def random_poses(scene: SyntheticScene, n, rng, distance=(2.5, 4.0), yaw_deg=40.0,
                 pitch_deg=35.0, roll_deg=10.0, parallel=False):
    """Draw ``n`` valid target poses; ``parallel`` keeps one orientation for all."""
    poses = []
    fixed = None
    for _ in range(1000 * max(n, 1)):
        if len(poses) == n:
            break
        dist = rng.uniform(*distance)
        az = np.deg2rad(rng.uniform(-12.0, 12.0))
        el = np.deg2rad(rng.uniform(-8.0, 2.0))
        center = dist * np.array([np.cos(el) * np.sin(az), -np.sin(el), np.cos(el) * np.cos(az)])
        if parallel and fixed is not None:
            R = fixed
        else:
            R = (rot_y(np.deg2rad(rng.uniform(-yaw_deg, yaw_deg)))
                 @ rot_x(np.deg2rad(rng.uniform(-pitch_deg, pitch_deg)))
                 @ rot_z(np.deg2rad(rng.uniform(-roll_deg, roll_deg))))
        pose = RigidTransform.from_rt(R, center)
        if pose_is_valid(scene, pose):
            poses.append(pose)
            if parallel and fixed is None:
                fixed = R
    if len(poses) < n:
        raise NoHits(f"could only place {len(poses)} of {n} target poses in view")
    return tuple(poses)


def pose_normal_rank(scene: SyntheticScene, tol=1e-6):
    N = np.array([(scene.gt_transform.rotation @ p.rotation)[:, 2] for p in scene.poses])
    s = np.linalg.svd(N, compute_uv=False)
    return int(np.sum(s / s[0] > tol))


# ---------------------------------------------------------------------------
# config <-> scene

def scene_from_config(cfg: dict) -> SyntheticScene:
    """Build a scene from a ``simulate`` JSON config (all keys optional)."""
    gt = cfg.get("ground_truth", {})
    if "euler_deg" in gt:
        euler = np.deg2rad(gt["euler_deg"])
    elif "euler_zyx_rad" in gt:
        euler = gt["euler_zyx_rad"][::-1]
    else:
        euler = gt.get("euler_rad", DEFAULT_GT.euler)
    gt_t = RigidTransform(tuple(euler), tuple(gt.get("translation_m", DEFAULT_GT.translation)))

    base = SyntheticScene()
    intr = cfg.get("intrinsics")
    K = CameraIntrinsics(**intr) if intr else base.intrinsics
    lidar = cfg.get("lidar", {})
    rings = lidar.get("ring_elevations_deg")
    if rings is None and "rings" in lidar:
        rings = np.linspace(lidar.get("min_elevation_deg", -25.0), lidar.get("max_elevation_deg", 15.0), int(lidar["rings"]))
    noise = cfg.get("noise", {})
    bg = cfg.get("background", {})
    scene = SyntheticScene(
        gt_transform=gt_t,
        intrinsics=K,
        image_size=tuple(cfg.get("image_size", base.image_size)),
        target=TargetModel(float(cfg.get("target", {}).get("side_m", 1.0))),
        ring_elevations_deg=tuple(float(r) for r in rings) if rings is not None else base.ring_elevations_deg,
        azimuth_step_deg=float(lidar.get("azimuth_step_deg", base.azimuth_step_deg)),
        range_sigma=float(noise.get("lidar_range_sigma_m", 0.0)),
        pixel_sigma=float(noise.get("pixel_sigma_px", 0.0)),
        seed=int(cfg.get("seed", 0)),
        background_offset=float(bg.get("offset_m", base.background_offset)),
        background_margin=float(bg.get("margin_scale", base.background_margin)),
    )
    if "poses" in cfg:
        poses = tuple(
            RigidTransform(tuple(p.get("euler_rad", (0.0, 0.0, 0.0))), tuple(p["translation_m"]))
            for p in cfg["poses"]
        )
    else:
        rng = np.random.default_rng([scene.seed, 0xB0A4D])
        poses = random_poses(
            scene, int(cfg.get("n_views", 5)), rng,
            parallel=cfg.get("pose_mode", "random") == "parallel",
        )
    return scene.with_poses(poses)


def make_scene(n_views=5, seed=0, range_sigma=0.0, pixel_sigma=0.0, parallel=False, **kwargs):
    """Scene with ``n_views`` random valid poses (library convenience)."""
    scene = SyntheticScene(seed=seed, range_sigma=range_sigma, pixel_sigma=pixel_sigma, **kwargs)
    rng = np.random.default_rng([seed, 0xB0A4D])
    return scene.with_poses(random_poses(scene, n_views, rng, parallel=parallel))


def generate_dataset(scene: SyntheticScene, out_dir, include_ground_truth=True, cloud_format="csv"):
    """Write clouds, image-feature JSON files and ``manifest.json`` to ``out_dir``."""
    from . import formats

    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    frames = []
    for i in range(len(scene.poses)):
        fid = f"frame_{i:03d}"
        cloud, lines = simulate_frame(scene, i)
        ext = "csv" if cloud_format == "csv" else "bin"
        cloud_rel = f"frames/{fid}.{ext}"
        feat_rel = f"frames/{fid}.json"
        formats.write_cloud(out / cloud_rel, cloud)
        formats.write_image_features(out / feat_rel, lines)
        frames.append({"id": fid, "cloud": cloud_rel, "image_features": feat_rel})

    manifest = {
        "frames": frames,
        "intrinsics": scene.intrinsics.to_dict(),
        "image_size": list(scene.image_size),
        "target": {"side_m": scene.target.side_length},
        "lidar": {"up_axis": list(LIDAR_UP)},
    }
    if include_ground_truth:
        gt = scene.gt_transform
        manifest["ground_truth"] = {
            **formats.transform_to_dict(gt),
            "target_poses": [formats.transform_to_dict(p) for p in scene.poses],
            "pose_normal_rank": pose_normal_rank(scene),
            "noise": {"lidar_range_sigma_m": scene.range_sigma, "pixel_sigma_px": scene.pixel_sigma},
            "seed": scene.seed,
        }
    path = out / "manifest.json"
    formats.write_json(path, manifest)
    return path
