"""Point-cloud depth observer driven by the light-field consistency error."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum
from pathlib import Path

import numpy as np

from plenoptic_observer.camera import CameraModel, LensletId
from plenoptic_observer.errors import ConfigError
from plenoptic_observer.geometry import Pose, inverse_transform_point
from plenoptic_observer.lightfield import INTERPOLATIONS, LightField
from plenoptic_observer.photometric import DEFAULT_STEP, DEFAULT_TAPER, ProbeError, depth_gradients
from plenoptic_observer.scene import write_ply


class PointStatus(IntEnum):
    INITIAL = 0
    UPDATED = 1
    OUTSIDE_APERTURE_SET = 2
    BEHIND_CAMERA = 3
    TOO_CLOSE = 4
    AT_FOCAL_PLANE = 5
    DEGENERATE_PREFACTOR = 6
    OUT_OF_SUBIMAGE = 7

    @property
    def is_gradient_error(self) -> bool:
        return self in _GRADIENT_ERRORS


_GRADIENT_ERRORS = frozenset(
    {PointStatus.TOO_CLOSE, PointStatus.AT_FOCAL_PLANE, PointStatus.DEGENERATE_PREFACTOR, PointStatus.OUT_OF_SUBIMAGE}
)
_FROM_PROBE = {
    ProbeError.TOO_CLOSE: PointStatus.TOO_CLOSE,
    ProbeError.AT_FOCAL_PLANE: PointStatus.AT_FOCAL_PLANE,
    ProbeError.DEGENERATE_PREFACTOR: PointStatus.DEGENERATE_PREFACTOR,
    ProbeError.OUT_OF_SUBIMAGE: PointStatus.OUT_OF_SUBIMAGE,
}

STATUS_COLOURS = {
    PointStatus.INITIAL: (128, 128, 128),
    PointStatus.UPDATED: (40, 200, 60),
    PointStatus.OUTSIDE_APERTURE_SET: (60, 90, 220),
    PointStatus.BEHIND_CAMERA: (30, 30, 30),
    PointStatus.TOO_CLOSE: (230, 50, 40),
    PointStatus.AT_FOCAL_PLANE: (230, 140, 30),
    PointStatus.DEGENERATE_PREFACTOR: (200, 60, 200),
    PointStatus.OUT_OF_SUBIMAGE: (240, 220, 40),
}


def is_gradient_error(status) -> np.ndarray:
    s = np.asarray(status)
    return (s >= PointStatus.TOO_CLOSE) & (s <= PointStatus.OUT_OF_SUBIMAGE)


@dataclass(frozen=True)
class ObserverConfig:
    """``gain`` multiplies the vector field; ``frame_dt`` is the integration step per frame.

    A zero gain is accepted so that control runs can hold the cloud fixed.
    """

    gain: float
    frame_dt: float = 1.0
    gradient_step: float = DEFAULT_STEP
    taper: float = DEFAULT_TAPER
    interpolation: str = "bilinear"

    def __post_init__(self):
        if not self.gain >= 0:
            raise ConfigError(f"gain must be non-negative, got {self.gain}")
        if not self.frame_dt > 0:
            raise ConfigError(f"frame_dt must be positive, got {self.frame_dt}")
        if not 0 < self.gradient_step < 0.1:
            raise ConfigError(f"gradient_step must lie in (0, 0.1), got {self.gradient_step}")
        if not 0 <= self.taper <= 1:
            raise ConfigError(f"taper must lie in [0, 1], got {self.taper}")
        if self.interpolation not in INTERPOLATIONS:
            raise ConfigError(f"interpolation must be one of {INTERPOLATIONS}, got {self.interpolation!r}")


@dataclass(frozen=True)
class PointEstimateCloud:
    points: np.ndarray
    status: np.ndarray
    update_count: np.ndarray

    @classmethod
    def from_points(cls, points) -> "PointEstimateCloud":
        pts = np.array(points, dtype=float).reshape(-1, 3)
        n = len(pts)
        return cls(pts, np.full(n, int(PointStatus.INITIAL)), np.zeros(n, dtype=int))

    def __len__(self) -> int:
        return len(self.points)

    def status_counts(self) -> dict[PointStatus, int]:
        return {s: int(np.sum(self.status == s)) for s in PointStatus}

    def write_ply(self, path) -> Path:
        colours = np.array([STATUS_COLOURS[PointStatus(s)] for s in self.status], dtype=float).reshape(-1, 3)
        write_ply(path, self.points, colours=colours / 255.0)
        return Path(path)


@dataclass(frozen=True)
class Projection:
    """Nearest-lenslet assignment of world points in one frame."""

    li: np.ndarray
    lj: np.ndarray
    camera_points: np.ndarray
    status: np.ndarray


def project_points(points, pose: Pose, camera: CameraModel) -> Projection:
    """Send each point through the optical centre onto the pupilar plane and snap to a lenslet.

    Points on or behind the lens plane get ``BEHIND_CAMERA``; hits outside the
    open lenslet footprint get ``OUTSIDE_APERTURE_SET``.  Ties between two
    lenslets go to the lower index.
    """
    pc = inverse_transform_point(pose, np.asarray(points, dtype=float).reshape(-1, 3))
    n = len(pc)
    status = np.full(n, int(PointStatus.UPDATED))
    front = pc[:, 2] > 0
    status[~front] = PointStatus.BEHIND_CAMERA
    hit = np.zeros((n, 2))
    hit[front] = -camera.D * pc[front, :2] / pc[front, 2:3]
    inside = np.all(np.abs(hit) < camera.footprint_half_extent, axis=1)
    status[front & ~inside] = PointStatus.OUTSIDE_APERTURE_SET
    t = (hit - camera.grid_origin) / camera.pitch
    idx = np.ceil(t - 0.5).astype(int)
    li = np.clip(idx[:, 0], 0, camera.M - 1)
    lj = np.clip(idx[:, 1], 0, camera.N - 1)
    return Projection(li, lj, pc, status)


def project_to_pupilar(point, pose: Pose, camera: CameraModel) -> tuple[LensletId | None, PointStatus]:
    proj = project_points(point, pose, camera)
    status = PointStatus(int(proj.status[0]))
    if status != PointStatus.UPDATED:
        return None, status
    return camera.lenslet(int(proj.li[0]), int(proj.lj[0])), status


@dataclass(frozen=True)
class FieldResult:
    velocity: np.ndarray
    status: np.ndarray
    depth: np.ndarray
    gradient: np.ndarray


def vector_fields(points, pose: Pose, lf: LightField, config: ObserverConfig) -> FieldResult:
    """Observer velocity (before the gain) for every point; zero wherever the status is not ``UPDATED``."""
    camera = lf.camera
    proj = project_points(points, pose, camera)
    n = len(proj.status)
    velocity = np.zeros((n, 3))
    depth = np.full(n, np.nan)
    grad = np.full(n, np.nan)
    status = proj.status.copy()
    act = np.flatnonzero(status == PointStatus.UPDATED)
    if len(act):
        eta = camera.directions[proj.li[act], proj.lj[act]]
        dep = np.einsum("ki,ki->k", proj.camera_points[act], eta)
        depth[act] = dep
        g, code = depth_gradients(lf, proj.li[act], proj.lj[act], dep, config.gradient_step, taper=config.taper,
                                  interpolation=config.interpolation)
        for probe, st in _FROM_PROBE.items():
            status[act[code == probe]] = st
        ok = code == 0
        grad[act] = g
        velocity[act[ok]] = -g[ok, None] * (eta[ok] @ pose.rotation.T)
    return FieldResult(velocity, status, depth, grad)


def vector_field(point, pose: Pose, lf: LightField, config: ObserverConfig) -> tuple[np.ndarray, PointStatus]:
    res = vector_fields(point, pose, lf, config)
    return res.velocity[0], PointStatus(int(res.status[0]))


def observer_step(cloud: PointEstimateCloud, pose: Pose, lf: LightField, config: ObserverConfig) -> PointEstimateCloud:
    """One forward-Euler step; the input cloud is left untouched."""
    res = vector_fields(cloud.points, pose, lf, config)
    moved = res.status == PointStatus.UPDATED
    points = cloud.points.copy()
    points[moved] = cloud.points[moved] + (config.gain * config.frame_dt) * res.velocity[moved]
    return replace(cloud, points=points, status=res.status, update_count=cloud.update_count + moved)
