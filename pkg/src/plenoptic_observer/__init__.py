"""Plenoptic camera simulation and a gradient-descent geometric observer.

The package renders synthetic light fields of convex Lambertian scenes and
reconstructs the scene as a point cloud by moving each point estimate along
its viewing ray against the depth gradient of a windowed photometric error.
"""

from plenoptic_observer.geometry import HalfCone, Plane, Pose
from plenoptic_observer.camera import CameraModel, PlenopticIntrinsics
from plenoptic_observer.scene import SceneModel
from plenoptic_observer.lightfield import LightField, render
from plenoptic_observer.observer import ObserverConfig, PointEstimateCloud, PointStatus
from plenoptic_observer.trajectory import LissajousPath, pose_at
from plenoptic_observer.simharness import RunConfig, gain_sweep, run

__all__ = [
    "CameraModel",
    "HalfCone",
    "LightField",
    "LissajousPath",
    "ObserverConfig",
    "PlenopticIntrinsics",
    "Plane",
    "PointEstimateCloud",
    "PointStatus",
    "Pose",
    "RunConfig",
    "SceneModel",
    "gain_sweep",
    "pose_at",
    "render",
    "run",
]
