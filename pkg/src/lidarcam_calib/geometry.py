"""Projective and Euclidean geometry primitives.

Conventions used throughout the package:

* Rotations are parameterised by Euler angles ``(phi, theta, psi)`` composed
  as intrinsic Z-Y-X, i.e. ``R = Rz(psi) @ Ry(theta) @ Rx(phi)``.
* A plane is stored in Hessian normal form: unit ``normal`` and signed
  ``distance`` such that a point ``X`` lies on it iff ``normal @ X - distance == 0``.
* Image lines are homogeneous 3-vectors ``l`` with ``l @ (u, v, 1) == 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateConfiguration,
    DegenerateLine,
    NonPositiveDepth,
    ParallelPlanes,
)

EULER_CONVENTION = "intrinsic ZYX: R = Rz(psi) @ Ry(theta) @ Rx(phi)"

DEPTH_EPS = 1e-9
GEOM_EPS = 1e-9
NORM_EPS = 1e-12


def _as_vec(v, n=3):
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (n,):
        raise ValueError(f"expected a {n}-vector, got shape {a.shape}")
    return a


def _unit(v, eps=NORM_EPS, exc=DegenerateConfiguration, what="vector"):
    n = float(np.linalg.norm(v))
    if n < eps:
        raise exc(f"cannot normalise near-zero {what} (norm {n:.3g})")
    return v / n


# ---------------------------------------------------------------------------
# rotations

def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_matrix(euler):
    """Rotation matrix for Euler angles ``(phi, theta, psi)`` in radians."""
    phi, theta, psi = _as_vec(euler)
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    return np.array([
        [cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf],
        [sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf],
        [-st, ct * sf, ct * cf],
    ])


def euler_derivatives(euler):
    """Partial derivatives ``(dR/dphi, dR/dtheta, dR/dpsi)`` of :func:`euler_to_matrix`."""
    phi, theta, psi = _as_vec(euler)
    rx, ry, rz = rot_x(phi), rot_y(theta), rot_z(psi)
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    drx = np.array([[0.0, 0.0, 0.0], [0.0, -sf, -cf], [0.0, cf, -sf]])
    dry = np.array([[-st, 0.0, ct], [0.0, 0.0, 0.0], [-ct, 0.0, -st]])
    drz = np.array([[-sp, -cp, 0.0], [cp, -sp, 0.0], [0.0, 0.0, 0.0]])
    return rz @ ry @ drx, rz @ dry @ rx, drz @ ry @ rx


def matrix_to_euler(R):
    """Inverse of :func:`euler_to_matrix`; ill-conditioned near ``theta = +-pi/2``."""
    R = np.asarray(R, dtype=float)
    theta = -np.arcsin(np.clip(R[2, 0], -1.0, 1.0))
    phi = np.arctan2(R[2, 1], R[2, 2])
    psi = np.arctan2(R[1, 0], R[0, 0])
    return np.array([phi, theta, psi])


def nearest_rotation(M):
    """Project a 3x3 matrix onto SO(3) in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def rotvec_to_matrix(w):
    """Rodrigues' formula."""
    w = _as_vec(w)
    angle = float(np.linalg.norm(w))
    if angle < 1e-12:
        return np.eye(3) + skew(w)
    k = w / angle
    Kx = skew(k)
    return np.eye(3) + np.sin(angle) * Kx + (1.0 - np.cos(angle)) * (Kx @ Kx)


def skew(v):
    x, y, z = _as_vec(v)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_angle(R):
    """Geodesic angle (radians) of a rotation matrix."""
    c = (np.trace(R) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


# Quaternions are (w, x, y, z). They are used where compositions must cancel
# exactly, e.g. ``T @ inverse(T)`` in the stereo-consistency check.

def euler_to_quaternion(euler):
    phi, theta, psi = _as_vec(euler)
    qx = np.array([np.cos(phi / 2), np.sin(phi / 2), 0.0, 0.0])
    qy = np.array([np.cos(theta / 2), 0.0, np.sin(theta / 2), 0.0])
    qz = np.array([np.cos(psi / 2), 0.0, 0.0, np.sin(psi / 2)])
    return quat_multiply(quat_multiply(qz, qy), qx)


def quat_multiply(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + w2 * x1 + (y1 * z2 - z1 * y2),
        w1 * y2 + w2 * y1 + (z1 * x2 - x1 * z2),
        w1 * z2 + w2 * z1 + (x1 * y2 - y1 * x2),
    ])


def quat_conjugate(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quaternion_to_matrix(q):
    q = np.asarray(q, dtype=float)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


# ---------------------------------------------------------------------------
# value types

@dataclass(frozen=True)
class RigidTransform:
    """Rigid transform ``X -> R @ X + t`` with ``R`` from Z-Y-X Euler angles."""

    euler: tuple = (0.0, 0.0, 0.0)
    translation: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "euler", tuple(float(a) for a in _as_vec(self.euler)))
        object.__setattr__(
            self, "translation", tuple(float(a) for a in _as_vec(self.translation))
        )

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_params(cls, x):
        x = _as_vec(x, 6)
        return cls(tuple(x[:3]), tuple(x[3:]))

    @classmethod
    def from_rt(cls, R, t):
        return cls(tuple(matrix_to_euler(R)), tuple(_as_vec(t)))

    @classmethod
    def from_matrix(cls, M):
        M = np.asarray(M, dtype=float)
        return cls.from_rt(M[:3, :3], M[:3, 3])

    @property
    def params(self):
        return np.array(self.euler + self.translation)

    @property
    def rotation(self):
        return euler_to_matrix(self.euler)

    @property
    def t(self):
        return np.array(self.translation)

    @property
    def matrix(self):
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def inverse(self):
        R = self.rotation
        return RigidTransform.from_rt(R.T, -R.T @ self.t)

    def compose(self, other):
        """``self @ other``: apply ``other`` first."""
        R1, R2 = self.rotation, other.rotation
        return RigidTransform.from_rt(R1 @ R2, R1 @ other.t + self.t)

    def apply(self, points):
        """Transform an ``(N, 3)`` array (or a single point)."""
        P = np.asarray(points, dtype=float)
        return P @ self.rotation.T + self.t


@dataclass(frozen=True)
class Plane:
    normal: np.ndarray
    distance: float

    def __post_init__(self):
        n = _as_vec(self.normal)
        norm = float(np.linalg.norm(n))
        if abs(norm - 1.0) > 1e-12:
            if norm < NORM_EPS:
                raise DegenerateConfiguration("plane normal is zero")
            raise ValueError(f"plane normal must be unit length (got norm {norm!r})")
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "distance", float(self.distance))

    @classmethod
    def from_normal(cls, normal, distance=0.0):
        """Normalise ``normal`` and scale ``distance`` accordingly."""
        n = _as_vec(normal)
        norm = float(np.linalg.norm(n))
        if norm < NORM_EPS:
            raise DegenerateConfiguration("plane normal is zero")
        return cls(n / norm, float(distance) / norm)

    @classmethod
    def from_point_normal(cls, point, normal):
        n = _unit(_as_vec(normal), what="plane normal")
        return cls(n, float(n @ _as_vec(point)))

    def signed_distance(self, points):
        return np.asarray(points, dtype=float) @ self.normal - self.distance

    def flipped(self):
        return Plane(-self.normal, -self.distance)

    def facing_origin(self):
        """Same plane with the normal pointing at the origin (``distance <= 0``)."""
        return self.flipped() if self.distance > 0 else self


@dataclass(frozen=True)
class Line3:
    point: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        p = _as_vec(self.point)
        d = _as_vec(self.direction)
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ValueError("line direction must be unit length")
        p.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "direction", d)

    def distance(self, points):
        P = np.asarray(points, dtype=float) - self.point
        along = P @ self.direction
        return np.linalg.norm(P - np.multiply.outer(along, self.direction), axis=-1)

    def at(self, s):
        return self.point + np.multiply.outer(s, self.direction)


@dataclass(frozen=True)
class Line2:
    """Homogeneous image line ``(a, b, c)``: ``a*u + b*v + c == 0``."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = _as_vec(self.coeffs)
        if not np.any(c):
            raise DegenerateLine("image line is the zero vector")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def through(cls, p0, p1):
        a = np.append(_as_vec(p0, 2), 1.0)
        b = np.append(_as_vec(p1, 2), 1.0)
        return cls(np.cross(a, b))

    def normalized(self):
        """Scale so that ``a**2 + b**2 == 1`` with a canonical sign."""
        c = self.coeffs
        n = float(np.hypot(c[0], c[1]))
        if n < NORM_EPS:
            raise DegenerateLine("line at infinity has no Euclidean normal form")
        c = c / n
        lead = c[0] if abs(c[0]) > NORM_EPS else c[1]
        return Line2(-c if lead < 0 else c)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    skew: float = 0.0
    K: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        K = np.array([[self.fx, self.skew, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])
        K.setflags(write=False)
        object.__setattr__(self, "K", K)

    @classmethod
    def from_matrix(cls, K):
        K = np.asarray(K, dtype=float)
        return cls(K[0, 0], K[1, 1], K[0, 2], K[1, 2], K[0, 1])

    def to_dict(self):
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy, "skew": self.skew}


# ---------------------------------------------------------------------------
# operations

def transform_point(T: RigidTransform, P):
    return T.rotation @ _as_vec(P) + T.t


def project_points(K: CameraIntrinsics, T: RigidTransform, points):
    """Project ``(N, 3)`` points; returns ``(pixels (N, 2), depths (N,))``.

    No depth check is made; callers decide what to do with ``depth <= 0``.
    """
    Xc = T.apply(np.atleast_2d(np.asarray(points, dtype=float)))
    h = Xc @ K.K.T
    with np.errstate(divide="ignore", invalid="ignore"):
        pix = h[:, :2] / h[:, 2:3]
    return pix, Xc[:, 2]


def project_point(K: CameraIntrinsics, T: RigidTransform, P):
    """Pixel coordinates of ``K (R P + t)``; raises on non-positive depth."""
    Xc = transform_point(T, P)
    if Xc[2] <= DEPTH_EPS:
        raise NonPositiveDepth(f"point has camera depth {Xc[2]:.3g} <= {DEPTH_EPS}")
    h = K.K @ Xc
    return h[:2] / h[2]


def back_projected_plane(K: CameraIntrinsics, line: Line2) -> Plane:
    """Plane through the camera centre whose image is ``line``.

    The normal ``K^T l`` is scaled to unit length so that point residuals
    against the plane are Euclidean distances in metres.
    """
    n = K.K.T @ np.asarray(line.coeffs if isinstance(line, Line2) else line, dtype=float)
    norm = float(np.linalg.norm(n))
    if norm < NORM_EPS:
        raise DegenerateLine("K^T l vanishes; cannot back-project line")
    return Plane(n / norm, 0.0)


def intersect_planes(a: Plane, b: Plane) -> Line3:
    d = np.cross(a.normal, b.normal)
    s = float(np.linalg.norm(d))
    if s < GEOM_EPS:
        raise ParallelPlanes("planes are parallel")
    d = d / s
    # closest point to the origin satisfying both plane equations
    A = np.vstack([a.normal, b.normal, d])
    p = np.linalg.solve(A, np.array([a.distance, b.distance, 0.0]))
    return Line3(p, d)


def intersect_three_planes(a: Plane, b: Plane, c: Plane):
    A = np.vstack([a.normal, b.normal, c.normal])
    if abs(np.linalg.det(A)) <= GEOM_EPS:
        raise DegenerateConfiguration("plane normals are (nearly) linearly dependent")
    return np.linalg.solve(A, np.array([a.distance, b.distance, c.distance]))


def point_line_distance_2d(p, line):
    """Perpendicular pixel distance from ``p`` to a homogeneous image line."""
    l = np.asarray(line.coeffs if isinstance(line, Line2) else line, dtype=float)
    n = float(np.hypot(l[0], l[1]))
    if n < NORM_EPS:
        raise DegenerateLine("line has no finite normal (a = b = 0)")
    p = np.asarray(p, dtype=float)
    return np.abs(p[..., 0] * l[0] + p[..., 1] * l[1] + l[2]) / n
