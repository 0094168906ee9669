import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from plenoptic_observer.camera import CameraModel, PlenopticIntrinsics
from plenoptic_observer.geometry import Pose
from plenoptic_observer.lightfield import render
from plenoptic_observer.scene import CoordinateRGB, RadialMonotone, SceneModel, Sphere
from plenoptic_observer.simharness import CameraBlock, RunConfig
from plenoptic_observer.trajectory import outward_rotation, pose_at

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=10_000,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def desk_camera() -> CameraModel:
    return CameraModel(CameraBlock().intrinsics())


@pytest.fixture(scope="session")
def small_camera() -> CameraModel:
    """Coarse 5x5 grid with the desk optics; quick to render."""
    b = CameraBlock()
    return CameraModel(PlenopticIntrinsics(b.focal_length_m, b.lens_to_pupilar_m, b.pupilar_to_retinal_m,
                                           b.aperture_radius_m, b.pixel_pitch_m, (5, 5), (9, 9),
                                           b.lenslet_pitch_m))


@pytest.fixture(scope="session")
def unit_sphere_scene() -> SceneModel:
    return SceneModel(Sphere((0.0, 0.0, 0.0), 1.0), CoordinateRGB(1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def outward_pose(position, facing) -> Pose:
    nu = np.asarray(facing, dtype=float)
    return Pose.from_matrix(outward_rotation(nu / np.linalg.norm(nu)), position)


# --------------------------------------------------------------------------- unique-minimum study setup
# Same optics as the desk camera but 33x33 pixels per subimage and cubic
# interpolation; the 9x9 default is too coarse for a clean single minimum.

STUDY_SUBIMAGE = 33
STUDY_INTERPOLATION = "cubic"
STUDY_RAMP_SCALE = 0.3


def study_camera(m: int = STUDY_SUBIMAGE) -> CameraModel:
    b = CameraBlock()
    v = b.pupilar_to_retinal_m / b.lens_to_pupilar_m * b.aperture_radius_m
    return CameraModel(PlenopticIntrinsics(b.focal_length_m, b.lens_to_pupilar_m, b.pupilar_to_retinal_m,
                                           b.aperture_radius_m, 2 * v / (m - 1) * 0.999, tuple(b.lenslet_counts),
                                           (m, m), b.lenslet_pitch_m))


def study_cases(camera: CameraModel, count: int, seed: int = 1, frames: int = 600):
    """Yield ``(light_field, i, j, true_depth)`` for random poses along the default path and random lenslets.

    Each frame shows a unit sphere coloured by a radial ramp anchored where
    the lenslet's central ray meets the sphere.
    """
    path = RunConfig().with_overrides(frames=frames).path()
    rng = np.random.default_rng(seed)
    for _ in range(count):
        pose = pose_at(path, int(rng.integers(frames)))
        i, j = (int(x) for x in rng.integers(0, camera.M, 2))
        o = pose.translation
        d = pose.rotation @ camera.directions[i, j]
        b = o @ d
        gamma = -b + np.sqrt(b * b - (o @ o - 1.0))
        scene = SceneModel(Sphere((0.0, 0.0, 0.0), 1.0), RadialMonotone(o + gamma * d, STUDY_RAMP_SCALE))
        yield render(scene, camera, pose), i, j, float(gamma)
