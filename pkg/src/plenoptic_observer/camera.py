"""Focused plenoptic camera: thin focus lens in front of a pinhole lenslet array.

Camera-frame layout: the optical centre of the focus lens is the origin and
the camera looks along ``+z``. The lenslets sit on the pupilar plane
``z = -D`` and image onto the retinal plane ``z = -(D + d)``. Lenslets form a
rectangular ``M x N`` grid with uniform pitch centred on the principal axis.

Low-level optics are plain functions over numpy arrays (positions are always
3-vectors in the camera frame, so they broadcast over leading axes). The
:class:`CameraModel` adds the lenslet grid, visibility windows and the
minimum admissible depth.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from plenoptic_observer.errors import (
    AtFocalPlane,
    DegenerateProjection,
    DepthBelowMinimum,
    InvalidIntrinsics,
)

PRINCIPAL_AXIS = np.array([0.0, 0.0, 1.0])


def direction(ell) -> np.ndarray:
    """Unit direction of the central ray of a lenslet at camera-frame position ``ell``."""
    ell = np.asarray(ell, dtype=float)
    return -ell / np.linalg.norm(ell, axis=-1, keepdims=True)


def thin_lens_image(p, focal_length: float) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    denom = focal_length - p[..., 2]
    if np.any(np.abs(denom) < 1e-12 * focal_length):
        raise AtFocalPlane("point lies on the front focal plane")
    return (focal_length / denom)[..., None] * p


def inverse_thin_lens(q, focal_length: float) -> np.ndarray:
    """Invert :func:`thin_lens_image`: the scene point whose image is ``q``."""
    q = np.asarray(q, dtype=float)
    denom = focal_length + q[..., 2]
    if np.any(np.abs(denom) < 1e-12 * focal_length):
        raise AtFocalPlane("image point lies on the back focal plane")
    return (focal_length / denom)[..., None] * q


def virtual_distance(depth, ell, focal_length: float) -> np.ndarray:
    """Signed distance from lenslet ``ell`` to the image of the point ``depth * direction(ell)``.

    Measured along the central ray direction, so ``ell + delta * direction(ell)`` equals the
    thin-lens image of ``depth * direction(ell)``.
    """
    ell = np.asarray(ell, dtype=float)
    eta = direction(ell)
    depth = np.asarray(depth, dtype=float)
    pz = depth * eta[..., 2]
    denom = focal_length - pz
    if np.any(np.abs(denom) < 1e-12 * focal_length):
        raise AtFocalPlane("depth places the point on the front focal plane")
    return focal_length * depth / denom - np.einsum("...i,...i->...", ell, eta)


def lenslet_project(ell_other, delta, ell, d: float) -> np.ndarray:
    """Retinal-plane image, through lenslet ``ell_other``, of the point ``ell + delta * direction(ell)``."""
    ell_other = np.asarray(ell_other, dtype=float)
    ell = np.asarray(ell, dtype=float)
    delta = np.asarray(delta, dtype=float)
    eta = direction(ell)
    s = delta * eta[..., 2]
    if np.any(np.abs(s) < 1e-12):
        raise DegenerateProjection("virtual point lies on the pupilar plane")
    image_point = ell + delta[..., None] * eta
    return ell_other + (d / s)[..., None] * (ell_other - image_point)


def central_pixel(ell, d: float) -> np.ndarray:
    """Retinal hit of the ray from the optical centre through lenslet ``ell``."""
    ell = np.asarray(ell, dtype=float)
    eta = direction(ell)
    return ell - d * eta / eta[..., 2:3]


@dataclass(frozen=True)
class PlenopticIntrinsics:
    """Intrinsic parameters, all lengths in metres."""

    focal_length: float
    lens_to_pupilar: float
    pupilar_to_retinal: float
    aperture: float
    pixel_pitch: float
    lenslet_counts: tuple[int, int] = (15, 15)
    subimage_counts: tuple[int, int] = (9, 9)
    lenslet_pitch: float = 1e-3

    def __post_init__(self):
        for name in (
            "focal_length",
            "lens_to_pupilar",
            "pupilar_to_retinal",
            "aperture",
            "pixel_pitch",
            "lenslet_pitch",
        ):
            if not getattr(self, name) > 0:
                raise InvalidIntrinsics(f"{name} must be positive")
        object.__setattr__(self, "lenslet_counts", tuple(int(c) for c in self.lenslet_counts))
        object.__setattr__(self, "subimage_counts", tuple(int(c) for c in self.subimage_counts))
        if min(self.lenslet_counts) < 1 or min(self.subimage_counts) < 1:
            raise InvalidIntrinsics("grid counts must be positive")
        if self.focal_length == self.lens_to_pupilar:
            raise InvalidIntrinsics("focal length must differ from the lens-to-pupilar distance")

    @property
    def subimage_radius(self) -> float:
        return self.pupilar_to_retinal / self.lens_to_pupilar * self.aperture

    @property
    def subimages_overlap(self) -> bool:
        return 2.0 * self.subimage_radius > self.lenslet_pitch


@dataclass(frozen=True)
class LensletId:
    i: int
    j: int
    position: tuple[float, float]


def min_depth(intrinsics: PlenopticIntrinsics) -> float:
    """Smallest admissible depth: beyond it image points stay behind the pupilar plane."""
    f, dd = intrinsics.focal_length, intrinsics.lens_to_pupilar
    if f <= dd:
        raise InvalidIntrinsics("minimum depth requires focal_length > lens_to_pupilar")
    m, n = intrinsics.lenslet_counts
    half = 0.5 * intrinsics.lenslet_pitch * np.array([m - 1, n - 1])
    # the axial component D/|ell| of the direction is radially decreasing, so a grid corner attains the infimum
    eta_nu_inf = dd / np.sqrt(half @ half + dd * dd)
    return float(max(f, dd * f / (f - dd)) / eta_nu_inf)


class CameraModel:
    """Lenslet grid and derived quantities for a set of intrinsics."""

    def __init__(self, intrinsics: PlenopticIntrinsics):
        self.intrinsics = intrinsics
        self.F = intrinsics.focal_length
        self.D = intrinsics.lens_to_pupilar
        self.d = intrinsics.pupilar_to_retinal
        self.A = intrinsics.aperture
        self.V = intrinsics.subimage_radius
        self.M, self.N = intrinsics.lenslet_counts
        self.m, self.n = intrinsics.subimage_counts
        self.pitch = intrinsics.lenslet_pitch
        self.pixel_pitch = intrinsics.pixel_pitch

    def __repr__(self):
        return f"CameraModel({self.intrinsics!r})"

    @property
    def pupilar_z(self) -> float:
        return -self.D

    @property
    def retinal_z(self) -> float:
        return -(self.D + self.d)

    @cached_property
    def min_depth(self) -> float:
        return min_depth(self.intrinsics)

    @cached_property
    def grid_origin(self) -> np.ndarray:
        return -0.5 * self.pitch * np.array([self.M - 1, self.N - 1], dtype=float)

    @cached_property
    def footprint_half_extent(self) -> np.ndarray:
        """Half-size of the rectangle of lenslet cells that makes up the populated set."""
        return 0.5 * self.pitch * np.array([self.M, self.N], dtype=float)

    @cached_property
    def lenslet_xy(self) -> np.ndarray:
        ii, jj = np.meshgrid(np.arange(self.M), np.arange(self.N), indexing="ij")
        return self.grid_origin + self.pitch * np.stack([ii, jj], axis=-1)

    @cached_property
    def lenslet_positions(self) -> np.ndarray:
        """Camera-frame positions, shape ``(M, N, 3)``."""
        xy = self.lenslet_xy
        return np.concatenate([xy, np.full(xy.shape[:-1] + (1,), -self.D)], axis=-1)

    @cached_property
    def directions(self) -> np.ndarray:
        return direction(self.lenslet_positions)

    @cached_property
    def central_pixels(self) -> np.ndarray:
        return central_pixel(self.lenslet_positions, self.d)

    @cached_property
    def pixel_offsets(self) -> np.ndarray:
        """In-plane offsets of subimage pixel centres from the central pixel, ``(m, n, 2)``."""
        uu, vv = np.meshgrid(np.arange(self.m), np.arange(self.n), indexing="ij")
        centre = np.array([(self.m - 1) / 2.0, (self.n - 1) / 2.0])
        return self.pixel_pitch * (np.stack([uu, vv], axis=-1) - centre)

    @cached_property
    def pixel_mask(self) -> np.ndarray:
        return np.linalg.norm(self.pixel_offsets, axis=-1) < self.V

    def lenslet(self, i: int, j: int) -> LensletId:
        if not (0 <= i < self.M and 0 <= j < self.N):
            raise IndexError(f"lenslet ({i}, {j}) outside the {self.M}x{self.N} grid")
        x, y = self.lenslet_xy[i, j]
        return LensletId(int(i), int(j), (float(x), float(y)))

    @property
    def central_lenslet(self) -> LensletId:
        return self.lenslet((self.M - 1) // 2, (self.N - 1) // 2)

    def lenslets(self):
        for i in range(self.M):
            for j in range(self.N):
                yield self.lenslet(i, j)

    def pos3(self, ell) -> np.ndarray:
        if isinstance(ell, LensletId):
            return self.lenslet_positions[ell.i, ell.j]
        ell = np.asarray(ell, dtype=float)
        if ell.shape[-1] == 2:
            return np.concatenate([ell, np.full(ell.shape[:-1] + (1,), -self.D)], axis=-1)
        return ell

    def direction(self, ell) -> np.ndarray:
        return direction(self.pos3(ell))

    def thin_lens_image(self, p) -> np.ndarray:
        return thin_lens_image(p, self.F)

    def virtual_distance(self, depth, ell) -> np.ndarray:
        return virtual_distance(depth, self.pos3(ell), self.F)

    def lenslet_project(self, ell_other, delta, ell) -> np.ndarray:
        return lenslet_project(self.pos3(ell_other), delta, self.pos3(ell), self.d)

    def central_pixel(self, ell) -> np.ndarray:
        return central_pixel(self.pos3(ell), self.d)

    def image_depth(self, depth, ell) -> np.ndarray:
        """z-coordinate of the thin-lens image of ``depth * direction(ell)``."""
        pz = np.asarray(depth, dtype=float) * self.direction(ell)[..., 2]
        return self.F * pz / (self.F - pz)

    def window_radius(self, depth, ell) -> np.ndarray:
        """Radius on the pupilar plane of the disc of lenslets that see the image point.

        The aperture disc projects through the image point onto the pupilar
        plane as a disc centred on ``ell`` scaled by ``|1 + D/Q^z|``.
        """
        qz = self.image_depth(depth, ell)
        return self.A * np.abs(1.0 + self.D / qz)

    def _check_depth(self, depth):
        if np.any(np.asarray(depth) <= self.min_depth):
            raise DepthBelowMinimum(f"depth must exceed the minimum depth {self.min_depth:.6g} m")

    def window_mask(self, depth: float, ell) -> np.ndarray:
        """Boolean ``(M, N)`` mask of lenslets whose subimage contains the image point."""
        self._check_depth(depth)
        ell3 = self.pos3(ell)
        delta = self.virtual_distance(depth, ell3)
        phi = lenslet_project(self.lenslet_positions, np.full((self.M, self.N), delta), ell3, self.d)
        offset = phi[..., :2] - self.central_pixels[..., :2]
        return np.linalg.norm(offset, axis=-1) < self.V

    def visibility_window(self, depth: float, ell) -> list[LensletId]:
        mask = self.window_mask(depth, ell)
        return [self.lenslet(i, j) for i, j in zip(*np.nonzero(mask))]

    def window_truncated(self, depth, ell: LensletId) -> np.ndarray:
        """Whether the window disc reaches lattice sites outside the populated grid."""
        r = self.window_radius(depth, ell)
        margin = min(ell.i + 1, self.M - ell.i, ell.j + 1, self.N - ell.j) * self.pitch
        return margin < r
