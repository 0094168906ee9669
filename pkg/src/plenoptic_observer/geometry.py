"""Rigid transforms, planes, perspective projection and half-cone predicates.

Rotations are stored as unit quaternions ``(w, x, y, z)``; the matrix form is
derived on demand. Cone predicates work on the open sets exactly: no tolerance
is applied at boundaries, so callers that sample near a boundary own the
numerics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from plenoptic_observer.errors import DegenerateProjection, InvalidCone

PARALLEL_EPS = 1e-12


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {a.shape}")
    return a


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


@dataclass(frozen=True)
class Pose:
    """Rigid transform taking camera-frame coordinates to the world frame.

    ``translation`` is the optical centre in world coordinates and the third
    column of :attr:`rotation` is the principal axis.
    """

    quaternion: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.quaternion, dtype=float)
        n = np.linalg.norm(q)
        if q.shape != (4,) or n == 0.0:
            raise ValueError("quaternion must be a non-zero 4-vector (w, x, y, z)")
        q = q / n
        # canonical sign keeps equality checks stable
        if q[0] < 0:
            q = -q
        object.__setattr__(self, "quaternion", q)
        object.__setattr__(self, "translation", _as_vec3(self.translation))

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, rotation, translation=(0.0, 0.0, 0.0)) -> "Pose":
        xyzw = Rotation.from_matrix(np.asarray(rotation, dtype=float)).as_quat()
        return cls(np.roll(xyzw, 1), translation)

    @classmethod
    def from_axis_angle(cls, axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "Pose":
        axis = _as_vec3(axis)
        axis = axis / np.linalg.norm(axis)
        q = np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis])
        return cls(q, translation)

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quaternion)

    @property
    def principal_axis(self) -> np.ndarray:
        return self.rotation[:, 2]

    def inverse(self) -> "Pose":
        w, x, y, z = self.quaternion
        q_inv = np.array([w, -x, -y, -z])
        return Pose(q_inv, -quat_to_matrix(q_inv) @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """Return ``self ∘ other`` (apply ``other`` first)."""
        return Pose(
            quat_multiply(self.quaternion, other.quaternion),
            self.rotation @ other.translation + self.translation,
        )

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


def transform_point(pose: Pose, p) -> np.ndarray:
    """Map camera-frame point(s) ``p`` (shape ``(..., 3)``) into the world frame."""
    p = np.asarray(p, dtype=float)
    return p @ pose.rotation.T + pose.translation


def inverse_transform_point(pose: Pose, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return (p - pose.translation) @ pose.rotation


def rotate_vector(pose: Pose, v) -> np.ndarray:
    return np.asarray(v, dtype=float) @ pose.rotation.T


@dataclass(frozen=True)
class Plane:
    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        n = _as_vec3(self.normal)
        norm = np.linalg.norm(n)
        if norm == 0.0:
            raise ValueError("plane normal must be non-zero")
        object.__setattr__(self, "point", _as_vec3(self.point))
        object.__setattr__(self, "normal", n / norm)

    def signed_distance(self, p) -> np.ndarray:
        return (np.asarray(p, dtype=float) - self.point) @ self.normal


def project_through_point(q, plane: Plane, p) -> np.ndarray:
    """Intersect the line through ``q`` and ``p`` with ``plane``.

    Raises :class:`DegenerateProjection` when the line is (numerically)
    parallel to the plane.
    """
    q = _as_vec3(q)
    p = _as_vec3(p)
    direction = p - q
    denom = direction @ plane.normal
    if abs(denom) < PARALLEL_EPS:
        raise DegenerateProjection("line through q and p is parallel to the plane")
    s = ((plane.point - q) @ plane.normal) / denom
    return q + s * direction


@dataclass(frozen=True)
class HalfCone:
    """Half-cone with apex ``apex`` spanned by the open ball ``B_r(base_center)``."""

    base_center: np.ndarray
    base_radius: float
    apex: np.ndarray

    def __post_init__(self):
        c = _as_vec3(self.base_center)
        a = _as_vec3(self.apex)
        r = float(self.base_radius)
        if not r > 0:
            raise InvalidCone("base radius must be positive")
        if not np.linalg.norm(a - c) > r:
            raise InvalidCone("apex must lie outside the closed base ball")
        object.__setattr__(self, "base_center", c)
        object.__setattr__(self, "apex", a)
        object.__setattr__(self, "base_radius", r)


def _cone_terms(cone: HalfCone, p):
    p = np.asarray(p, dtype=float)
    v = p - cone.apex
    x = cone.base_center - cone.apex
    vx = v @ x
    vv = np.einsum("...i,...i->...", v, v)
    h2 = x @ x - cone.base_radius**2
    return vx, vv, h2


def _maybe_scalar(a):
    return bool(a) if np.ndim(a) == 0 else a


def positive_cone_contains(cone: HalfCone, p):
    """Membership in the open positive half-cone (apex excluded).

    Uses the closed form ``-v·x > c|v||x|`` with ``v = p - apex`` and
    ``x = base_center - apex``, squared to avoid the root.
    """
    vx, vv, h2 = _cone_terms(cone, p)
    return _maybe_scalar((vx < 0) & (vx * vx > vv * h2))


def positive_cones_contain(base_center, base_radius: float, apexes, points, closed_apex: bool = True) -> np.ndarray:
    """Row-wise positive-cone test with one apex per point and a shared base ball.

    Equivalent to building a ``HalfCone`` per row; rows whose apex is not
    outside the closed ball are reported as ``False``.
    """
    c = _as_vec3(base_center)
    a = np.asarray(apexes, dtype=float).reshape(-1, 3)
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    v = p - a
    x = c - a
    vx = np.einsum("ki,ki->k", v, x)
    vv = np.einsum("ki,ki->k", v, v)
    h2 = np.einsum("ki,ki->k", x, x) - float(base_radius) ** 2
    inside = (vx < 0) & (vx * vx > vv * h2)
    if closed_apex:
        inside |= np.all(p == a, axis=1)
    return inside & (h2 > 0)


def negative_cone_contains(cone: HalfCone, p):
    """Membership in the open negative half-cone between the apex and the ball."""
    vx, vv, h2 = _cone_terms(cone, p)
    disc = vx * vx - vv * h2
    root = np.sqrt(np.maximum(disc, 0.0))
    # first entry parameter s1 along apex + s*v into the ball must exceed 1
    before_ball = (vx - vv) > root
    return _maybe_scalar((vv > 0) & (vx > 0) & (disc > 0) & before_ball)


def positive_cone_contains_closed_apex(cone: HalfCone, p):
    """Membership in the positive cone with its apex added back in."""
    p = np.asarray(p, dtype=float)
    at_apex = np.all(p == cone.apex, axis=-1)
    return _maybe_scalar(at_apex | positive_cone_contains(cone, p))


def cone_axis_bound(base_center, base_radius: float) -> float:
    """Cosine bound ``c`` for the cone through the origin spanned by a ball.

    ``p`` is in the cone iff ``-p·x > c |p| |x|`` where ``x`` is the ball centre.
    """
    x = _as_vec3(base_center)
    r = float(base_radius)
    nx = np.linalg.norm(x)
    if not (r > 0 and nx > r):
        raise InvalidCone("need |base_center| > base_radius > 0")
    return float(np.sqrt(1.0 - (r / nx) ** 2))


def right_cone_enclosing_radius(base_radius: float, height: float) -> float:
    if base_radius < 0 or height <= 0:
        raise ValueError("need base_radius >= 0 and height > 0")
    return 2.0 * float(np.hypot(base_radius, height))
