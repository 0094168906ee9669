"""Tiled light-field images and the ray-tracing renderer."""

from __future__ import annotations

from dataclasses import dataclass, fields
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np

from plenoptic_observer.camera import CameraModel, LensletId
from plenoptic_observer.errors import OutOfSubimage
from plenoptic_observer.geometry import Pose, rotate_vector, transform_point
from plenoptic_observer.scene import SceneModel, intersect_rays


@dataclass(frozen=True, eq=False)
class LightField:
    """Radiometric image with the subimage of lenslet ``(i, j)`` in block ``(i, j)``.

    ``data`` has shape ``(M*m, N*n, 3)``; ``mask`` marks pixels inside their
    lenslet's circular subimage; ``hit`` marks in-mask pixels whose ray met
    the scene.
    """

    data: np.ndarray
    mask: np.ndarray
    hit: np.ndarray
    camera: CameraModel
    pose: Pose

    @property
    def tiles(self) -> np.ndarray:
        """View of ``data`` as ``(M, m, N, n, 3)``."""
        c = self.camera
        return self.data.reshape(c.M, c.m, c.N, c.n, 3)

    @cached_property
    def padded_tiles(self) -> np.ndarray:
        """``tiles`` with out-of-mask pixels filled by local extrapolation from their own subimage."""
        c = self.camera
        ghost, src, op = _ghost_operator(c.pixel_mask.tobytes(), c.m, c.n)
        out = self.tiles.copy()
        if len(ghost):
            inside = out[:, src[:, 0], :, src[:, 1]]
            out[:, ghost[:, 0], :, ghost[:, 1]] = np.einsum("gs,smNc->gmNc", op, inside)
        return out

    def pixel(self, ell: LensletId, u: int, v: int) -> np.ndarray:
        c = self.camera
        return self.data[ell.i * c.m + u, ell.j * c.n + v]

    def central_colour(self, ell: LensletId) -> np.ndarray:
        c = self.camera
        return sample_pixels(self, np.array([ell.i]), np.array([ell.j]),
                             np.array([(c.m - 1) / 2.0]), np.array([(c.n - 1) / 2.0]))[0]


def _tile_layout(values: np.ndarray) -> np.ndarray:
    """``(M, N, m, n, ...)`` to the tiled ``(M*m, N*n, ...)`` layout."""
    M, N, m, n = values.shape[:4]
    rest = values.shape[4:]
    return values.transpose(0, 2, 1, 3, *range(4, values.ndim)).reshape(M * m, N * n, *rest)


def refract(camera: CameraModel, ell, pixel):
    """World-side ray of light reaching retinal position ``pixel`` through lenslet ``ell``.

    Both inputs are camera-frame 3-vectors (broadcasting over leading axes).
    The ray leaves the pixel through its lenslet to the lens plane.
    The thin lens maps its intra-camera points to their conjugates outside;
    the intra-camera line crosses ``z = -F`` at a point conjugate to infinity,
    which fixes the outgoing direction without a singular division.
    Returns ``(origins on the lens plane, unit directions)``.
    """
    ell = np.asarray(ell, dtype=float)
    pixel = np.asarray(pixel, dtype=float)
    zeta = ell + (ell - pixel) * (camera.D / camera.d)
    at_back_focal = zeta + (pixel - ell) * (camera.F / camera.d)
    return zeta, -at_back_focal / np.linalg.norm(at_back_focal, axis=-1, keepdims=True)


def pixel_rays(camera: CameraModel):
    """Refracted camera-frame rays for every pixel centre, shapes ``(M, N, m, n, 3)``."""
    ell = camera.lenslet_positions[:, :, None, None, :]
    offsets = camera.pixel_offsets
    pix = camera.central_pixels[:, :, None, None, :] + np.concatenate(
        [offsets, np.zeros(offsets.shape[:-1] + (1,))], axis=-1
    )[None, None]
    return refract(camera, ell, pix)


def render(scene: SceneModel, camera: CameraModel, pose: Pose, miss_colour=(0.0, 0.0, 0.0)) -> LightField:
    """Ray-trace one light-field frame, one ray per pixel centre."""
    zeta, dirs = pixel_rays(camera)
    pix_mask = np.broadcast_to(camera.pixel_mask, (camera.M, camera.N, camera.m, camera.n))
    origins_w = transform_point(pose, zeta[pix_mask])
    dirs_w = rotate_vector(pose, dirs[pix_mask])
    t = intersect_rays(scene.surface, origins_w, dirs_w)
    hit = ~np.isnan(t)
    colours = np.empty((len(t), 3))
    colours[hit] = scene.brightness(origins_w[hit] + t[hit, None] * dirs_w[hit])
    colours[~hit] = np.clip(np.asarray(miss_colour, dtype=float), 0.0, 1.0)

    values = np.zeros((camera.M, camera.N, camera.m, camera.n, 3))
    values[pix_mask] = colours
    hits = np.zeros(pix_mask.shape, dtype=bool)
    hits[pix_mask] = hit
    return LightField(
        data=_tile_layout(values),
        mask=_tile_layout(pix_mask.copy()),
        hit=_tile_layout(hits),
        camera=camera,
        pose=pose,
    )


GHOST_RADIUS = 2.5


def _fit_weights(rel: np.ndarray, dist: np.ndarray) -> np.ndarray:
    """Weights that evaluate a local least-squares fit at the origin of ``rel``.

    A quadratic is preferred; the neighbourhood widens until one is
    determined, and only once it spans every source pixel does the fit drop
    to linear or constant.
    """
    limit = float(dist.max())
    radius = GHOST_RADIUS
    while True:
        near = dist <= radius
        x, y = rel[near, 0], rel[near, 1]
        full = np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], axis=-1)
        for cols in (6, 3, 1):
            basis = full[:, :cols]
            if (cols == 6 or radius >= limit) and len(x) >= cols and np.linalg.matrix_rank(basis) == cols:
                w = np.exp(-0.5 * (dist[near] / radius) ** 2)
                row = np.zeros(len(rel))
                row[near] = (np.linalg.pinv(basis * w[:, None]) * w[None, :])[0]
                return row
        radius += 1.0


@lru_cache(maxsize=16)
def _ghost_operator(mask_bytes: bytes, m: int, n: int):
    """Linear map from in-mask pixels to extrapolated values at out-of-mask pixels."""
    mask = np.frombuffer(mask_bytes, dtype=bool).reshape(m, n)
    src = np.argwhere(mask)
    ghost = np.argwhere(~mask)
    op = np.zeros((len(ghost), len(src)))
    if len(src):
        for g, centre in enumerate(ghost):
            rel = (src - centre).astype(float)
            op[g] = _fit_weights(rel, np.hypot(rel[:, 0], rel[:, 1]))
    return ghost, src, op


INTERPOLATIONS = ("bilinear", "cubic")


def _keys_weights(t: np.ndarray) -> np.ndarray:
    """Cubic-convolution kernel with ``a = -1/2``; reproduces quadratics exactly."""
    t = np.abs(t)
    inner = (1.5 * t - 2.5) * t * t + 1.0
    outer = ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0
    return np.where(t < 1.0, inner, np.where(t < 2.0, outer, 0.0))


def sample_pixels(lf: LightField, li, lj, fu, fv, interpolation: str = "bilinear") -> np.ndarray:
    """Interpolated lookup at fractional pixel coordinates inside each lenslet's tile.

    ``bilinear`` blends the four surrounding pixel centres; ``cubic`` uses
    the 4x4 cubic-convolution stencil.  Stencil entries outside the mask come
    from ``padded_tiles``, which are extrapolated from the same subimage only,
    so the lookup is continuous in the query position and never reads a
    neighbouring subimage.  Both kernels return stored colours exactly at
    pixel centres.
    """
    c = lf.camera
    tiles = lf.padded_tiles
    li = np.asarray(li, dtype=np.int64)
    lj = np.asarray(lj, dtype=np.int64)
    fu = np.clip(np.asarray(fu, dtype=float), 0.0, c.m - 1.0)
    fv = np.clip(np.asarray(fv, dtype=float), 0.0, c.n - 1.0)
    if interpolation == "bilinear":
        taps, kernel = (0, 1), lambda t: np.maximum(1.0 - np.abs(t), 0.0)
    elif interpolation == "cubic":
        taps, kernel = (-1, 0, 1, 2), _keys_weights
    else:
        raise ValueError(f"interpolation must be one of {INTERPOLATIONS}, got {interpolation!r}")
    u0 = np.floor(fu).astype(np.int64)
    v0 = np.floor(fv).astype(np.int64)
    acc = np.zeros(fu.shape + (3,))
    for du in taps:
        u = u0 + du
        wu = kernel(fu - u)
        uc = np.clip(u, 0, c.m - 1)
        for dv in taps:
            v = v0 + dv
            w = wu * kernel(fv - v)
            acc += w[..., None] * tiles[li, uc, lj, np.clip(v, 0, c.n - 1)]
    return acc


def sample(lf: LightField, ell: LensletId, q, interpolation: str = "bilinear") -> np.ndarray:
    """Colour at retinal-plane position ``q`` (camera-frame ``xy``) in the subimage of ``ell``."""
    c = lf.camera
    offset = np.asarray(q, dtype=float)[:2] - c.central_pixels[ell.i, ell.j, :2]
    if not np.linalg.norm(offset) < c.V:
        raise OutOfSubimage(f"retinal position is outside the subimage of lenslet ({ell.i}, {ell.j})")
    fu = offset[0] / c.pixel_pitch + (c.m - 1) / 2.0
    fv = offset[1] / c.pixel_pitch + (c.n - 1) / 2.0
    return sample_pixels(lf, np.array([ell.i]), np.array([ell.j]), np.array([fu]), np.array([fv]), interpolation)[0]


def save_png(lf: LightField, path, frame_index: int | None = None) -> Path:
    """Write the tiled frame as 8-bit RGB PNG plus a ``.txt`` metadata sidecar."""
    from PIL import Image

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img = np.clip(np.rint(lf.data * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(img, mode="RGB").save(path)
    meta = [f"frame_index = {frame_index if frame_index is not None else ''}"]
    for f in fields(lf.camera.intrinsics):
        meta.append(f"{f.name} = {getattr(lf.camera.intrinsics, f.name)}")
    meta.append("pose_quaternion_wxyz = " + " ".join(repr(float(x)) for x in lf.pose.quaternion))
    meta.append("pose_translation_m = " + " ".join(repr(float(x)) for x in lf.pose.translation))
    sidecar = path.with_suffix(".txt")
    sidecar.write_text("\n".join(meta) + "\n")
    return sidecar
