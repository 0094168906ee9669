"""Outward-facing Lissajous camera paths and checks of the scenario assumptions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from plenoptic_observer.camera import CameraModel
from plenoptic_observer.errors import DegenerateOrientation
from plenoptic_observer.geometry import Pose, inverse_transform_point
from plenoptic_observer.scene import SceneModel, Sphere, TriangleMesh

POLE_COS = 0.999


@dataclass(frozen=True)
class LissajousPath:
    """``center + a_i sin(ω_i t + φ_i)`` per axis, ``t`` in frames, ``ω`` in rad/frame."""

    amplitudes: tuple[float, float, float]
    frequencies: tuple[float, float, float]
    phases: tuple[float, float, float] = (0.0, 0.0, 0.0)
    sphere_center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("amplitudes", "frequencies", "phases", "sphere_center"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        if not any(self.amplitudes):
            raise DegenerateOrientation("zero amplitudes keep the camera at the centre, where outward is undefined")

    @classmethod
    def default(cls, frames: int, scene_radius: float = 1.0, amplitude_fraction: float = 0.25,
                phases=(0.4, 1.3, 2.1), sphere_center=(0.0, 0.0, 0.0)) -> "LissajousPath":
        period = max(int(frames), 1)
        omega = 2.0 * np.pi * np.array([2.0, 3.0, 5.0]) / period
        return cls((amplitude_fraction * scene_radius,) * 3, tuple(omega), phases, sphere_center)

    def positions(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)[..., None]
        return np.asarray(self.sphere_center) + np.asarray(self.amplitudes) * np.sin(
            np.asarray(self.frequencies) * t + np.asarray(self.phases)
        )

    def max_step(self) -> float:
        """Lipschitz bound on the per-frame displacement."""
        return float(np.sum(np.abs(np.asarray(self.amplitudes) * np.asarray(self.frequencies))))


def outward_rotation(nu: np.ndarray) -> np.ndarray:
    """Rotation whose third column is ``nu``; roll fixed by projecting world ``+y``."""
    up = np.array([0.0, 1.0, 0.0])
    if abs(nu @ up) > POLE_COS:
        up = np.array([1.0, 0.0, 0.0])
    y = up - (up @ nu) * nu
    y /= np.linalg.norm(y)
    x = np.cross(y, nu)
    return np.column_stack([x, y, nu])


def pose_at(path: LissajousPath, t: float) -> Pose:
    if t < 0:
        raise ValueError("frame index must be non-negative")
    position = path.positions(t)
    radial = position - np.asarray(path.sphere_center)
    norm = np.linalg.norm(radial)
    if norm < 1e-12:
        raise DegenerateOrientation(f"camera at the sphere centre at t={t}")
    return Pose.from_matrix(outward_rotation(radial / norm), position)


# --------------------------------------------------------------------------- assumption checks


@dataclass
class AssumptionReport:
    ball_radius: float
    camera_ball_inside_scene: bool
    scene_convex: bool
    brightness_monotone: bool
    max_revisit_gap: np.ndarray = field(repr=False)
    visible_frames: np.ndarray = field(repr=False)

    @property
    def all_revisited(self) -> bool:
        return bool(len(self.visible_frames) == 0 or np.all(self.visible_frames >= 2))

    @property
    def worst_gap(self) -> float:
        return float(np.max(self.max_revisit_gap)) if len(self.max_revisit_gap) else 0.0

    @property
    def blocking_ok(self) -> bool:
        return self.camera_ball_inside_scene and self.scene_convex

    def lines(self) -> list[str]:
        seen = self.visible_frames
        return [
            f"camera_ball_inside_scene: {'pass' if self.camera_ball_inside_scene else 'FAIL'}"
            f" (ball radius {self.ball_radius:.6g} m)",
            f"monotone_brightness: {'pass' if self.brightness_monotone else 'FAIL'}"
            " (sampled surrogate; non-blocking)",
            f"convex_scene: {'pass' if self.scene_convex else 'FAIL'}",
            f"revisits: {'pass' if self.all_revisited else 'FAIL'}"
            f" (points {len(seen)}, never seen {int(np.sum(seen == 0))},"
            f" seen once {int(np.sum(seen == 1))}, worst gap {self.worst_gap:g} frames,"
            f" median views {float(np.median(seen)) if len(seen) else 0:g})",
        ]


def camera_ball_radius(path: LissajousPath, camera: CameraModel, frames: int) -> float:
    """Radius of the origin-centred ball holding every optical centre and its min-depth cone.

    The bounded cone is the convex hull of the optical centre and the four
    footprint corners pushed out to the minimum depth, so its farthest point
    from the origin is one of those five vertices.
    """
    if frames <= 0:
        return 0.0
    hx, hy = camera.footprint_half_extent
    corners = np.array([[sx * hx, sy * hy, -camera.D] for sx in (-1, 1) for sy in (-1, 1)])
    # rays through the optical centre continue forward along -corner
    ahead = -corners * (camera.min_depth / camera.D)
    radius = 0.0
    for t in range(frames):
        pose = pose_at(path, t)
        pts = np.vstack([pose.translation, ahead @ pose.rotation.T + pose.translation])
        radius = max(radius, float(np.linalg.norm(pts, axis=1).max()))
    return radius


def _ball_inside(surface, radius: float) -> bool:
    if isinstance(surface, Sphere):
        return bool(np.linalg.norm(surface.center) + radius < surface.radius)
    n = surface.face_normals
    offsets = np.einsum("fi,fi->f", n, surface.triangles[:, 0])
    return bool(np.all(offsets > radius))


def _monotone_surrogate(scene: SceneModel, samples: int = 2000, seed: int = 0) -> bool:
    rng = np.random.default_rng(seed)
    if isinstance(scene.surface, Sphere):
        pts = rng.normal(size=(3, samples, 3))
        pts = scene.surface.center + scene.surface.radius * pts / np.linalg.norm(pts, axis=-1, keepdims=True)
    else:
        v = scene.surface.vertices
        pts = v[rng.integers(0, len(v), size=(3, samples))]
    p, x1, x2 = pts
    d1 = np.linalg.norm(x1 - p, axis=-1)
    d2 = np.linalg.norm(x2 - p, axis=-1)
    swap = d1 < d2
    x1[swap], x2[swap] = x2[swap].copy(), x1[swap].copy()
    keep = np.abs(d1 - d2) > 1e-9
    bp = scene.brightness(p)
    c1 = np.linalg.norm(scene.brightness(x1) - bp, axis=-1)
    c2 = np.linalg.norm(scene.brightness(x2) - bp, axis=-1)
    return bool(np.all(c1[keep] > c2[keep]))


def visibility(points: np.ndarray, poses: list[Pose], camera: CameraModel) -> np.ndarray:
    """``(frames, points)`` mask: in front of the camera and projecting into the lenslet footprint."""
    out = np.zeros((len(poses), len(points)), dtype=bool)
    half = camera.footprint_half_extent
    for k, pose in enumerate(poses):
        pc = inverse_transform_point(pose, points)
        front = pc[:, 2] > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            hit = -camera.D * pc[:, :2] / pc[:, 2:3]
        out[k] = front & np.all(np.abs(hit) < half, axis=1)
    return out


def revisit_statistics(points, path: LissajousPath, camera: CameraModel, frames: int):
    """Per point: number of frames in view and the largest gap between consecutive views."""
    points = np.asarray(points, dtype=float)
    poses = [pose_at(path, t) for t in range(frames)]
    vis = visibility(points, poses, camera)
    counts = vis.sum(axis=0)
    gaps = np.full(len(points), np.inf)
    for k in range(len(points)):
        idx = np.flatnonzero(vis[:, k])
        if len(idx) >= 2:
            gaps[k] = float(np.diff(idx).max())
    return counts, gaps


def validate_assumptions(path: LissajousPath, camera: CameraModel, scene: SceneModel, frames: int,
                         estimate_points=None) -> AssumptionReport:
    radius = camera_ball_radius(path, camera, frames)
    surface = scene.surface
    convex = True
    if isinstance(surface, TriangleMesh):
        convex = surface.is_closed() and surface.is_convex()
    if estimate_points is None:
        estimate_points = np.zeros((0, 3))
    counts, gaps = revisit_statistics(estimate_points, path, camera, frames)
    return AssumptionReport(
        ball_radius=radius,
        camera_ball_inside_scene=_ball_inside(surface, radius),
        scene_convex=convex,
        brightness_monotone=_monotone_surrogate(scene),
        max_revisit_gap=gaps,
        visible_frames=counts,
    )
