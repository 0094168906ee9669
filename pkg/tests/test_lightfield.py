import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from plenoptic_observer.errors import OutOfSubimage
from plenoptic_observer.geometry import Pose, rotate_vector, transform_point
from plenoptic_observer.lightfield import (
    LightField,
    _tile_layout,
    refract,
    render,
    sample,
    sample_pixels,
    save_png,
)
from plenoptic_observer.scene import ConstantRGB, CoordinateRGB, SceneModel, Sphere, distance_map, intersect_rays

from conftest import outward_pose


def synthetic_field(camera, fn):
    """Light field whose every subimage holds ``fn(u, v)`` (same for all lenslets) inside the mask."""
    c = camera
    uu, vv = np.meshgrid(np.arange(c.m, dtype=float), np.arange(c.n, dtype=float), indexing="ij")
    tile = np.stack([fn(uu, vv), 0.5 * fn(vv, uu), np.full_like(uu, 0.25)], axis=-1)
    tile = np.where(c.pixel_mask[..., None], tile, 0.0)
    values = np.broadcast_to(tile, (c.M, c.N, c.m, c.n, 3)).copy()
    mask = np.broadcast_to(c.pixel_mask, (c.M, c.N, c.m, c.n)).copy()
    return LightField(_tile_layout(values), _tile_layout(mask), _tile_layout(mask), camera, Pose.identity())


def quadratic(u, v):
    return 0.3 + 0.02 * u - 0.01 * v + 0.003 * u * u - 0.002 * u * v + 0.001 * v * v


@pytest.fixture(scope="module")
def frame(small_camera, unit_sphere_scene):
    pose = outward_pose((0.1, -0.05, 0.12), (0.3, -0.2, 1.0))
    return render(unit_sphere_scene, small_camera, pose)


# --------------------------------------------------------------------------- render


def test_layout_shapes_and_mask(frame, small_camera):
    c = small_camera
    assert frame.data.shape == (c.M * c.m, c.N * c.n, 3)
    assert np.array_equal(frame.mask, np.tile(c.pixel_mask, (c.M, c.N)))
    assert np.all(frame.data[~frame.mask] == 0.0)
    assert np.all((frame.data >= 0) & (frame.data <= 1))
    assert np.all(frame.hit == frame.mask)


def test_tiles_view_indexes_lenslet_blocks(frame, small_camera):
    c = small_camera
    ell = c.lenslet(2, 3)
    assert np.array_equal(frame.tiles[2, :, 3, :], frame.data[2 * c.m:3 * c.m, 3 * c.n:4 * c.n])
    assert np.array_equal(frame.pixel(ell, 1, 4), frame.data[2 * c.m + 1, 3 * c.n + 4])


def test_central_pixel_sees_distance_map_point(frame, small_camera, unit_sphere_scene):
    c = small_camera
    pose = frame.pose
    for ell in c.lenslets():
        gamma = distance_map(unit_sphere_scene, pose, c, ell)
        point = pose.translation + gamma * rotate_vector(pose, c.direction(ell))
        expected = unit_sphere_scene.colour(point)
        assert np.allclose(frame.pixel(ell, c.m // 2, c.n // 2), expected, atol=1e-12)


def test_constant_scene_renders_constant(small_camera):
    scene = SceneModel(Sphere((0, 0, 0), 1.0), ConstantRGB((0.5, 0.5, 0.5)))
    lf = render(scene, small_camera, Pose.identity())
    assert np.all(lf.data[lf.mask] == 0.5)


def test_render_is_deterministic(small_camera, unit_sphere_scene, frame):
    again = render(unit_sphere_scene, small_camera, frame.pose)
    assert np.array_equal(again.data, frame.data)


def test_missed_rays_take_sentinel_colour(small_camera):
    scene = SceneModel(Sphere((0, 0, 10), 0.5), ConstantRGB((0.5, 0.5, 0.5)))
    lf = render(scene, small_camera, Pose.from_axis_angle((1, 0, 0), np.pi), miss_colour=(1.0, 0.0, 0.0))
    assert not lf.hit.any()
    assert np.all(lf.data[lf.mask] == (1.0, 0.0, 0.0))


def test_lambertian_point_same_colour_from_two_poses(small_camera, unit_sphere_scene):
    c = small_camera
    a = outward_pose((0.0, 0.0, 0.0), (0, 0, 1))
    b = outward_pose((0.05, 0.0, 0.1), (0, 0, 1))
    ell = c.central_lenslet
    for pose, lf in ((a, render(unit_sphere_scene, c, a)), (b, render(unit_sphere_scene, c, b))):
        gamma = distance_map(unit_sphere_scene, pose, c, ell)
        point = pose.translation + gamma * rotate_vector(pose, c.direction(ell))
        assert np.array_equal(lf.pixel(ell, c.m // 2, c.n // 2), unit_sphere_scene.colour(point))


# --------------------------------------------------------------------------- refraction


@settings(max_examples=300)
@given(data=st.data())
def test_backward_traced_pixel_reaches_scene_point(desk_camera, data):
    c = desk_camera
    draw = data.draw
    ell = c.lenslet(draw(st.integers(0, c.M - 1)), draw(st.integers(0, c.N - 1)))
    position = np.array([draw(st.floats(-0.2, 0.2)) for _ in range(3)])
    pose = outward_pose(position, [draw(st.floats(-1, 1)), draw(st.floats(-1, 1)), 1.0])
    depth = draw(st.floats(c.min_depth * 1.001, 1.5))
    point = transform_point(pose, depth * c.direction(ell))
    # a sphere enclosing the camera with the point on its surface: the exit hit is the point
    radius = depth + 1.0
    scene = SceneModel(Sphere(point - radius * rotate_vector(pose, c.direction(ell)), radius))
    window = c.visibility_window(depth, ell)
    other = window[draw(st.integers(0, len(window) - 1))]
    delta = c.virtual_distance(depth, ell)
    phi = c.lenslet_project(other, delta, ell)
    zeta, d = refract(c, c.pos3(other), phi)
    t = intersect_rays(scene.surface, transform_point(pose, zeta), rotate_vector(pose, d))
    hit = transform_point(pose, zeta) + t * rotate_vector(pose, d)
    assert np.linalg.norm(hit - point) < 1e-6


def test_refracted_central_ray_passes_optical_centre(desk_camera):
    c = desk_camera
    ell = c.pos3(c.lenslet(2, 12))
    zeta, d = refract(c, ell, c.central_pixel(ell))
    assert np.allclose(zeta, 0.0, atol=1e-15)
    assert np.allclose(d, c.direction(ell), atol=1e-12)


def test_epipolar_constancy(desk_camera, unit_sphere_scene):
    c = desk_camera
    pose = outward_pose((0.05, 0.02, -0.04), (0.2, 0.1, 1.0))
    lf = render(unit_sphere_scene, c, pose)
    beta = unit_sphere_scene.brightness
    for ij in [(7, 7), (3, 10), (12, 2), (1, 1)]:
        ell = c.lenslet(*ij)
        gamma = distance_map(unit_sphere_scene, pose, c, ell)
        delta = c.virtual_distance(gamma, ell)
        reference = lf.central_colour(ell)
        # scene-space size of one pixel step, measured on neighbouring pixel rays
        zeta, d = refract(c, c.pos3(ell), c.central_pixel(ell) + np.array([[0, 0, 0], [c.pixel_pitch, 0, 0]]))
        o, dw = transform_point(pose, zeta), rotate_vector(pose, d)
        hits = o + intersect_rays(unit_sphere_scene.surface, o, dw)[:, None] * dw
        tol = 2.0 * np.linalg.norm(hits[1] - hits[0]) * beta.lipschitz
        for other in c.visibility_window(gamma, ell):
            phi = c.lenslet_project(other, delta, ell)
            assert np.linalg.norm(sample(lf, other, phi) - reference) <= tol


# --------------------------------------------------------------------------- sampling


def test_sample_at_pixel_centre_returns_stored_colour(frame, small_camera):
    c = small_camera
    ell = c.lenslet(1, 3)
    centre = c.central_pixel(ell)[:2]
    for u, v in [(4, 4), (2, 5), (6, 3), (0, 4)]:
        q = centre + c.pixel_offsets[u, v]
        for mode in ("bilinear", "cubic"):
            assert np.allclose(sample(frame, ell, q, mode), frame.pixel(ell, u, v), atol=1e-12)


def test_sample_midpoint_is_average(frame, small_camera):
    c = small_camera
    ell = c.lenslet(3, 0)
    q = c.central_pixel(ell)[:2] + 0.5 * (c.pixel_offsets[4, 4] + c.pixel_offsets[5, 4])
    assert np.allclose(sample(frame, ell, q), 0.5 * (frame.pixel(ell, 4, 4) + frame.pixel(ell, 5, 4)), atol=1e-12)


def test_sample_outside_disc_raises(frame, small_camera):
    c = small_camera
    ell = c.lenslet(0, 0)
    with pytest.raises(OutOfSubimage):
        sample(frame, ell, c.central_pixel(ell)[:2] + np.array([1.001 * c.V, 0.0]))


def test_unknown_interpolation_raises(frame):
    with pytest.raises(ValueError):
        sample_pixels(frame, [0], [0], [4.0], [4.0], "nearest")


def test_ghost_padding_reproduces_quadratics(small_camera):
    lf = synthetic_field(small_camera, quadratic)
    c = small_camera
    uu, vv = np.meshgrid(np.arange(c.m, dtype=float), np.arange(c.n, dtype=float), indexing="ij")
    padded = lf.padded_tiles[2, :, 1, :, 0]
    assert np.allclose(padded, quadratic(uu, vv), atol=1e-12)
    # in-mask pixels are untouched
    inside = np.broadcast_to(c.pixel_mask[None, :, None, :], lf.tiles.shape[:4])
    assert np.array_equal(lf.padded_tiles[inside], lf.tiles[inside])


def test_cubic_sampling_is_exact_for_quadratics(small_camera, rng):
    c = small_camera
    lf = synthetic_field(c, quadratic)
    # keep the 4x4 stencil inside the tile; at the tile border indices are clamped
    r = rng.random(500) * ((c.m - 1) / 2 - 1)
    th = rng.random(500) * 2 * np.pi
    fu = (c.m - 1) / 2 + r * np.cos(th)
    fv = (c.n - 1) / 2 + r * np.sin(th)
    got = sample_pixels(lf, np.full(500, 2), np.full(500, 2), fu, fv, "cubic")[:, 0]
    assert np.allclose(got, quadratic(fu, fv), atol=1e-12)


def test_bilinear_sampling_is_exact_for_affine_fields(small_camera, rng):
    c = small_camera
    lf = synthetic_field(c, lambda u, v: 0.2 + 0.03 * u + 0.02 * v)
    fu, fv = rng.uniform(0.5, c.m - 1.5, (2, 300))
    got = sample_pixels(lf, np.zeros(300, int), np.zeros(300, int), fu, fv)[:, 0]
    assert np.allclose(got, 0.2 + 0.03 * fu + 0.02 * fv, atol=1e-12)


@pytest.mark.parametrize("mode", ["bilinear", "cubic"])
def test_sampling_is_continuous_across_the_rim(frame, small_camera, mode):
    c = small_camera
    steps = np.linspace(-3.9, 3.9, 20001)
    fu = (c.m - 1) / 2 + steps
    fv = np.full_like(fu, (c.n - 1) / 2 + 0.37)
    vals = sample_pixels(frame, np.full(len(fu), 1), np.full(len(fu), 2), fu, fv, mode)
    jumps = np.linalg.norm(np.diff(vals, axis=0), axis=1)
    assert jumps.max() < 1e-3


def test_central_colour_matches_centre_pixel(frame, small_camera):
    ell = small_camera.lenslet(4, 4)
    assert np.array_equal(frame.central_colour(ell), frame.pixel(ell, 4, 4))


# --------------------------------------------------------------------------- export


def test_png_export_and_sidecar(frame, tmp_path):
    sidecar = save_png(frame, tmp_path / "f.png", frame_index=7)
    img = np.asarray(Image.open(tmp_path / "f.png"))
    assert img.shape == frame.data.shape and img.dtype == np.uint8
    assert np.max(np.abs(img / 255.0 - frame.data)) <= 0.5 / 255 + 1e-12
    text = sidecar.read_text()
    assert "frame_index = 7" in text
    assert "focal_length = 0.34" in text
    assert "pose_translation_m" in text


def test_coordinate_texture_frequency_changes_pixels(small_camera):
    a = render(SceneModel(Sphere((0, 0, 0), 1.0), CoordinateRGB(1.0)), small_camera, Pose.identity())
    b = render(SceneModel(Sphere((0, 0, 0), 1.0), CoordinateRGB(3.0)), small_camera, Pose.identity())
    assert not np.array_equal(a.data, b.data)
