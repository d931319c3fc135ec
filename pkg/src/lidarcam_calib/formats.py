"""On-disk formats: point clouds, image features, manifests, transforms.

Point clouds come in two flavours:

* CSV with header ``x,y,z,ring[,intensity]`` (float64, shortest round-trip
  repr, so values survive a write/read exactly);
* binary: 8-byte magic ``PLCLOUD1``, little-endian uint64 point count, then
  16-byte records of four little-endian float32 ``(x, y, z, ring)``.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .camera_features import ImageLineSet
from .errors import DataError
from .geometry import EULER_CONVENTION, CameraIntrinsics, RigidTransform
from .lidar_features import PointCloud
from .target import EDGE_LABELS

MAGIC = b"PLCLOUD1"
_HEADER = struct.Struct("<8sQ")
_RECORD = np.dtype("<f4")


def write_json(path, obj):
    text = json.dumps(obj, indent=2, allow_nan=False) + "\n"
    Path(path).write_text(text)


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read JSON {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# point clouds

def _fmt(v):
    return repr(float(v))


def write_cloud_csv(path, cloud: PointCloud):
    if cloud.ring is None:
        raise DataError("CSV cloud format requires ring indices")
    cols = ["x", "y", "z", "ring"] + (["intensity"] if cloud.intensity is not None else [])
    lines = [",".join(cols)]
    for i in range(len(cloud)):
        row = [_fmt(c) for c in cloud.xyz[i]] + [str(int(cloud.ring[i]))]
        if cloud.intensity is not None:
            row.append(_fmt(cloud.intensity[i]))
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_cloud_csv(path) -> PointCloud:
    try:
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if header[:4] != ["x", "y", "z", "ring"] or len(header) > 5 or (
                len(header) == 5 and header[4] != "intensity"
            ):
                raise DataError(f"{path}: expected header x,y,z,ring[,intensity], got {header}")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except OSError as exc:
        raise DataError(f"cannot read cloud {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"malformed cloud {path}: {exc}") from exc
    if data.size == 0:
        data = np.empty((0, len(header)))
    if data.shape[1] != len(header):
        raise DataError(f"{path}: rows have {data.shape[1]} columns, header has {len(header)}")
    ring = data[:, 3]
    if np.any(ring != np.round(ring)):
        raise DataError(f"{path}: ring column must hold integers")
    return PointCloud(data[:, :3], ring.astype(np.int64), data[:, 4] if len(header) == 5 else None)


def cloud_to_bytes(cloud: PointCloud) -> bytes:
    ring = np.zeros(len(cloud)) if cloud.ring is None else cloud.ring
    rec = np.column_stack([cloud.xyz, ring]).astype(_RECORD)
    return _HEADER.pack(MAGIC, len(cloud)) + rec.tobytes()


def cloud_from_bytes(buf: bytes) -> PointCloud:
    if len(buf) < _HEADER.size:
        raise DataError("binary cloud shorter than its header")
    magic, count = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise DataError(f"bad cloud magic {magic!r}")
    if len(buf) != _HEADER.size + 16 * count:
        raise DataError(f"binary cloud size mismatch for {count} points")
    rec = np.frombuffer(buf, dtype=_RECORD, offset=_HEADER.size).reshape(count, 4)
    return PointCloud(rec[:, :3].astype(float), rec[:, 3].astype(np.int64))


def write_cloud(path, cloud: PointCloud):
    path = Path(path)
    if path.suffix == ".csv":
        write_cloud_csv(path, cloud)
    else:
        path.write_bytes(cloud_to_bytes(cloud))


def read_cloud(path) -> PointCloud:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(len(MAGIC))
    except OSError as exc:
        raise DataError(f"cannot read cloud {path}: {exc}") from exc
    if head == MAGIC:
        return cloud_from_bytes(path.read_bytes())
    return read_cloud_csv(path)


# ---------------------------------------------------------------------------
# image features

def image_features_to_dict(lines: ImageLineSet):
    return {
        "lines": [
            {"label": lab, "p0": [float(v) for v in lines.segments[lab][0]],
             "p1": [float(v) for v in lines.segments[lab][1]]}
            for lab in EDGE_LABELS
        ]
    }


def image_features_from_dict(d) -> ImageLineSet:
    try:
        segs = {}
        for item in d["lines"]:
            if item["label"] in segs:
                raise DataError(f"duplicate line label {item['label']}")
            segs[item["label"]] = (item["p0"], item["p1"])
        return ImageLineSet(segs)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed image features: {exc}") from exc


def write_image_features(path, lines: ImageLineSet):
    write_json(path, image_features_to_dict(lines))


def read_image_features(path) -> ImageLineSet:
    return image_features_from_dict(read_json(path))


# ---------------------------------------------------------------------------
# transforms

def transform_to_dict(T: RigidTransform):
    phi, theta, psi = T.euler
    return {
        "euler_convention": EULER_CONVENTION,
        "euler_zyx_rad": [psi, theta, phi],
        "translation_m": list(T.translation),
    }


def transform_from_dict(d) -> RigidTransform:
    """Accepts ``euler_zyx_rad`` (psi, theta, phi), ``euler_rad`` (phi, theta, psi) or ``matrix_4x4``."""
    try:
        if "euler_zyx_rad" in d:
            psi, theta, phi = d["euler_zyx_rad"]
            return RigidTransform((phi, theta, psi), tuple(d["translation_m"]))
        if "euler_rad" in d:
            return RigidTransform(tuple(d["euler_rad"]), tuple(d["translation_m"]))
        if "matrix_4x4" in d:
            return RigidTransform.from_matrix(np.asarray(d["matrix_4x4"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed transform: {exc}") from exc
    raise DataError("transform needs euler_zyx_rad + translation_m or matrix_4x4")


def intrinsics_from_dict(d) -> CameraIntrinsics:
    try:
        return CameraIntrinsics(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                                float(d.get("skew", 0.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed intrinsics: {exc}") from exc
