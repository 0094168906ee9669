"""Windowed photometric error and its depth derivative.

For a lenslet ``ell`` and a depth estimate, every lenslet whose subimage
contains the image point of ``depth * direction(ell)`` contributes the squared colour
difference between its sample of that image point and the central ray of
``ell``. The sum over the window (midpoint rule, one lenslet-cell area per
lenslet) is scaled by ``(1 + D/Q^z)^-2`` to undo the growth of the window
with the image point's distance from the pupilar plane.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Callable

import numpy as np

from plenoptic_observer.camera import LensletId
from plenoptic_observer.errors import (
    AtFocalPlane,
    DegeneratePrefactor,
    DepthBelowMinimum,
    OutOfSubimage,
)
from plenoptic_observer.lightfield import INTERPOLATIONS, LightField, sample, sample_pixels

PREFACTOR_EPS = 1e-9
DEFAULT_STEP = 1e-3
DEFAULT_TAPER = 0.3


class ProbeError(IntEnum):
    NONE = 0
    TOO_CLOSE = 1
    AT_FOCAL_PLANE = 2
    DEGENERATE_PREFACTOR = 3
    OUT_OF_SUBIMAGE = 4


_EXCEPTIONS = {
    ProbeError.TOO_CLOSE: DepthBelowMinimum,
    ProbeError.AT_FOCAL_PLANE: AtFocalPlane,
    ProbeError.DEGENERATE_PREFACTOR: DegeneratePrefactor,
    ProbeError.OUT_OF_SUBIMAGE: OutOfSubimage,
}


@dataclass(frozen=True)
class ErrorEvalContext:
    light_field: LightField
    lenslet: LensletId
    weight: float | None = None
    step: float = DEFAULT_STEP
    taper: float = DEFAULT_TAPER
    interpolation: str = "bilinear"

    def __post_init__(self):
        if self.weight is None:
            object.__setattr__(self, "weight", self.light_field.camera.pitch**2)
        if not self.weight > 0:
            raise ValueError("quadrature weight must be positive")
        if not 0 < self.step < 0.1:
            raise ValueError("gradient step must lie in (0, 0.1)")
        if not 0 <= self.taper <= 1:
            raise ValueError("taper must lie in [0, 1]")
        if self.interpolation not in INTERPOLATIONS:
            raise ValueError(f"interpolation must be one of {INTERPOLATIONS}")

    @property
    def camera(self):
        return self.light_field.camera


@dataclass(frozen=True)
class LocalErrorResult:
    value: float
    window_count: int
    window_area: float
    truncated: bool
    prefactor: float


@dataclass
class _Batch:
    value: np.ndarray
    window_count: np.ndarray
    window_area: np.ndarray
    prefactor: np.ndarray
    error: np.ndarray


def local_errors(
    lf: LightField,
    li,
    lj,
    depth,
    weight: float | None = None,
    integrand: Callable[[np.ndarray], np.ndarray] | None = None,
    taper: float = DEFAULT_TAPER,
    interpolation: str = "bilinear",
) -> _Batch:
    """Vectorised local error for many ``(lenslet, depth)`` pairs.

    Failures are reported per entry in ``error`` (value set to NaN) rather
    than raised, so one bad point never poisons a batch.
    """
    cam = lf.camera
    li = np.atleast_1d(np.asarray(li, dtype=np.int64))
    lj = np.atleast_1d(np.asarray(lj, dtype=np.int64))
    depth = np.atleast_1d(np.asarray(depth, dtype=float))
    weight = cam.pitch**2 if weight is None else weight
    n = len(depth)
    error = np.zeros(n, dtype=np.int64)
    error[depth <= cam.min_depth] = ProbeError.TOO_CLOSE

    ell = cam.lenslet_positions[li, lj]
    eta = cam.directions[li, lj]
    pz = depth * eta[:, 2]
    lens_denom = cam.F - pz
    error[(error == 0) & (np.abs(lens_denom) < 1e-12 * cam.F)] = ProbeError.AT_FOCAL_PLANE
    ok = error == 0
    safe_denom = np.where(ok, lens_denom, 1.0)
    qz = cam.F * pz / safe_denom
    factor = 1.0 + cam.D / np.where(qz == 0, np.inf, qz)
    error[ok & ((qz == 0) | (np.abs(factor) < PREFACTOR_EPS))] = ProbeError.DEGENERATE_PREFACTOR
    ok = error == 0
    prefactor = np.where(ok, 1.0 / np.where(ok, factor, 1.0) ** 2, np.nan)

    # signed distance from the lenslet to the image point along its central ray
    delta = cam.F * depth / safe_denom + np.linalg.norm(ell, axis=1)
    image_point = ell + delta[:, None] * eta
    s = delta * eta[:, 2]
    s = np.where(ok & (np.abs(s) > 1e-12), s, np.nan)

    others = cam.lenslet_positions.reshape(-1, 3)
    centres = cam.central_pixels.reshape(-1, 3)[:, :2]
    phi_xy = others[None, :, :2] + (cam.d / s)[:, None, None] * (others[None, :, :2] - image_point[:, None, :2])
    offset = phi_xy - centres[None]
    radial = np.linalg.norm(offset, axis=-1) / cam.V
    in_window = (radial < 1.0) & ok[:, None]

    cu, cv = (cam.m - 1) / 2.0, (cam.n - 1) / 2.0
    central = sample_pixels(lf, li, lj, np.full(n, cu), np.full(n, cv), interpolation)
    rows, cols = np.nonzero(in_window)
    oi, oj = np.divmod(cols, cam.N)
    fu = offset[rows, cols, 0] / cam.pixel_pitch + cu
    fv = offset[rows, cols, 1] / cam.pixel_pitch + cv
    samples = sample_pixels(lf, oi, oj, fu, fv, interpolation)
    e = np.sum((central[rows] - samples) ** 2, axis=-1)
    if integrand is not None:
        e = integrand(e)
    if taper > 0:
        w = np.clip((1.0 - radial[rows, cols]) / taper, 0.0, 1.0)
    else:
        w = np.ones(len(rows))
    total = np.bincount(rows, weights=w * e, minlength=n)
    area = weight * np.bincount(rows, weights=w, minlength=n)
    value = np.where(ok, prefactor * weight * total, np.nan)
    return _Batch(
        value=value,
        window_count=in_window.sum(axis=1),
        window_area=area,
        prefactor=prefactor,
        error=error,
    )


def _raise_for(code: int, depth: float):
    if code != ProbeError.NONE:
        raise _EXCEPTIONS[ProbeError(code)](f"local error undefined at depth {depth:.6g} m ({ProbeError(code).name})")


def evaluate_local_error(ctx: ErrorEvalContext, depth: float, integrand=None) -> LocalErrorResult:
    ell = ctx.lenslet
    batch = local_errors(ctx.light_field, ell.i, ell.j, depth, ctx.weight, integrand, ctx.taper, ctx.interpolation)
    _raise_for(int(batch.error[0]), depth)
    return LocalErrorResult(
        value=float(batch.value[0]),
        window_count=int(batch.window_count[0]),
        window_area=float(batch.window_area[0]),
        truncated=bool(ctx.camera.window_truncated(depth, ell)),
        prefactor=float(batch.prefactor[0]),
    )


def local_error(ctx: ErrorEvalContext, depth: float) -> float:
    return evaluate_local_error(ctx, depth).value


def pairwise_error(ctx: ErrorEvalContext, ell_other: LensletId, depth: float) -> float:
    """Squared colour difference between the central ray of ``ctx.lenslet`` and
    ``ell_other``'s sample of the image point at ``depth``."""
    cam = ctx.camera
    ell = ctx.lenslet
    delta = cam.virtual_distance(depth, ell)
    phi = cam.lenslet_project(ell_other, delta, ell)
    reference = ctx.light_field.central_colour(ell)
    other = sample(ctx.light_field, ell_other, phi[:2], ctx.interpolation)
    return float(np.sum((reference - other) ** 2))


def depth_gradients(lf: LightField, li, lj, depth, step: float = DEFAULT_STEP, weight=None, taper=DEFAULT_TAPER,
                    interpolation: str = "bilinear"):
    """Central differences of the local error in depth, with relative step ``step``.

    Returns ``(gradient, error_code)`` arrays; entries with a non-zero code
    have a NaN gradient.
    """
    depth = np.atleast_1d(np.asarray(depth, dtype=float))
    li = np.atleast_1d(li)
    lj = np.atleast_1d(lj)
    n = len(depth)
    both = local_errors(
        lf,
        np.concatenate([li, li]),
        np.concatenate([lj, lj]),
        np.concatenate([depth * (1.0 + step), depth * (1.0 - step)]),
        weight,
        taper=taper,
        interpolation=interpolation,
    )
    hi, lo = both.value[:n], both.value[n:]
    code = np.where(both.error[n:] != 0, both.error[n:], both.error[:n])
    grad = (hi - lo) / (2.0 * step * depth)
    return np.where(code == 0, grad, np.nan), code


def depth_gradient(ctx: ErrorEvalContext, depth: float) -> float:
    ell = ctx.lenslet
    grad, code = depth_gradients(ctx.light_field, ell.i, ell.j, depth, ctx.step, ctx.weight, ctx.taper,
                                 ctx.interpolation)
    _raise_for(int(code[0]), depth)
    return float(grad[0])
