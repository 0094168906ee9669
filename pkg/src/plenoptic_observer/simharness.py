"""Simulation driver: configuration, the render/observe loop, metrics and gain sweeps."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from plenoptic_observer.camera import CameraModel, PlenopticIntrinsics, min_depth
from plenoptic_observer.errors import ConfigError, PlenopticError
from plenoptic_observer.geometry import positive_cones_contain
from plenoptic_observer.lightfield import render
from plenoptic_observer.observer import (
    ObserverConfig,
    PointEstimateCloud,
    PointStatus,
    is_gradient_error,
    observer_step,
)
from plenoptic_observer.photometric import DEFAULT_STEP, DEFAULT_TAPER
from plenoptic_observer.scene import (
    ConstantRGB,
    CoordinateRGB,
    RadialMonotone,
    SceneModel,
    Sphere,
    TriangleMesh,
    make_icosphere,
    point_to_scene_distance,
    read_ply,
    surface_contains,
)
from plenoptic_observer.trajectory import AssumptionReport, LissajousPath, pose_at, validate_assumptions

log = logging.getLogger(__name__)

METRICS_HEADER = ["frame", "total_sq_error_m2", "mean_dist_m", "n_updated", "n_outside", "n_behind", "n_grad_err"]
DIVERGENCE_FACTOR = 10.0


# --------------------------------------------------------------------------- configuration


def _build(cls, data: dict | None, where: str):
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class CameraBlock:
    focal_length_m: float = 0.34
    lens_to_pupilar_m: float = 0.17
    pupilar_to_retinal_m: float = 0.012
    aperture_radius_m: float = 0.08
    pixel_pitch_m: float = 0.00141
    lenslet_counts: tuple[int, int] = (15, 15)
    subimage_counts: tuple[int, int] = (9, 9)
    lenslet_pitch_m: float = 0.016

    def intrinsics(self) -> PlenopticIntrinsics:
        try:
            intr = PlenopticIntrinsics(
                focal_length=float(self.focal_length_m),
                lens_to_pupilar=float(self.lens_to_pupilar_m),
                pupilar_to_retinal=float(self.pupilar_to_retinal_m),
                aperture=float(self.aperture_radius_m),
                pixel_pitch=float(self.pixel_pitch_m),
                lenslet_counts=tuple(int(x) for x in self.lenslet_counts),
                subimage_counts=tuple(int(x) for x in self.subimage_counts),
                lenslet_pitch=float(self.lenslet_pitch_m),
            )
            # the observer needs a finite minimum depth, so F > D is required here
            min_depth(intr)
            return intr
        except PlenopticError as exc:
            raise ConfigError(f"camera: {exc}") from exc


@dataclass
class SceneBlock:
    kind: str = "sphere"
    center_m: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius_m: float = 1.0
    mesh_path: str | None = None
    brightness: str = "coordinate_rgb"
    texture_frequency_cycles_per_m: float = 1.0
    constant_rgb: tuple[float, float, float] = (0.5, 0.5, 0.5)
    ramp_anchor_m: tuple[float, float, float] = (0.0, 0.0, 1.0)
    ramp_scale_m: float = 0.3
    miss_rgb: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def model(self) -> SceneModel:
        if self.kind == "sphere":
            if not self.radius_m > 0:
                raise ConfigError("scene: radius_m must be positive")
            surface = Sphere(tuple(self.center_m), float(self.radius_m))
        elif self.kind == "mesh":
            if not self.mesh_path:
                raise ConfigError("scene: kind 'mesh' needs mesh_path")
            vertices, _, faces = read_ply(self.mesh_path)
            if faces is None:
                raise ConfigError(f"scene: {self.mesh_path} has no faces")
            surface = TriangleMesh(vertices, faces)
        else:
            raise ConfigError(f"scene: unknown kind {self.kind!r}")
        if self.brightness == "coordinate_rgb":
            brightness = CoordinateRGB(float(self.texture_frequency_cycles_per_m))
        elif self.brightness == "constant_rgb":
            brightness = ConstantRGB(tuple(self.constant_rgb))
        elif self.brightness == "radial_monotone":
            brightness = RadialMonotone(np.asarray(self.ramp_anchor_m, dtype=float), float(self.ramp_scale_m))
        else:
            raise ConfigError(f"scene: unknown brightness {self.brightness!r}")
        return SceneModel(surface, brightness)

    @property
    def scale(self) -> float:
        return float(self.radius_m)


@dataclass
class TrajectoryBlock:
    amplitude_fraction: float = 0.15
    amplitudes_m: tuple[float, float, float] | None = None
    harmonics: tuple[float, float, float] = (2.0, 3.0, 5.0)
    phases_rad: tuple[float, float, float] = (1.1, 0.3, 2.6)
    period_frames: int | None = None

    def path(self, frames: int, scene: SceneBlock) -> LissajousPath:
        if self.amplitudes_m is not None:
            amplitudes = tuple(float(a) for a in self.amplitudes_m)
        else:
            amplitudes = (float(self.amplitude_fraction) * scene.scale,) * 3
        period = int(self.period_frames or frames or 1)
        if period <= 0:
            raise ConfigError("trajectory: period_frames must be positive")
        omega = tuple(2.0 * np.pi * float(h) / period for h in self.harmonics)
        try:
            return LissajousPath(amplitudes, omega, tuple(self.phases_rad), tuple(scene.center_m))
        except PlenopticError as exc:
            raise ConfigError(f"trajectory: {exc}") from exc


@dataclass
class ObserverBlock:
    frames: int = 600
    gain: float = 3000.0
    sweep_gains: tuple[float, ...] = (300.0, 1000.0, 3000.0, 30000.0)
    frame_dt_s: float = 1.0
    gradient_step_rel: float = DEFAULT_STEP
    window_taper: float = DEFAULT_TAPER
    interpolation: str = "bilinear"

    def config(self, gain: float | None = None) -> ObserverConfig:
        try:
            return ObserverConfig(
                gain=float(self.gain if gain is None else gain),
                frame_dt=float(self.frame_dt_s),
                gradient_step=float(self.gradient_step_rel),
                taper=float(self.window_taper),
                interpolation=str(self.interpolation),
            )
        except PlenopticError as exc:
            raise ConfigError(f"observer: {exc}") from exc


@dataclass
class EstimateBlock:
    icosphere_subdivisions: int = 3
    initial_radius_m: float = 0.9

    def cloud(self, scene: SceneBlock) -> PointEstimateCloud:
        if int(self.icosphere_subdivisions) < 0 or not self.initial_radius_m > 0:
            raise ConfigError("estimate: need subdivisions >= 0 and a positive initial radius")
        ico = make_icosphere(tuple(scene.center_m), float(self.initial_radius_m), int(self.icosphere_subdivisions))
        return PointEstimateCloud.from_points(ico.vertices)


@dataclass
class OutputBlock:
    directory: str = "runs/default"
    export_every_frames: int = 50
    write_frames_png: bool = False


@dataclass
class RunConfig:
    camera: CameraBlock = field(default_factory=CameraBlock)
    scene: SceneBlock = field(default_factory=SceneBlock)
    trajectory: TrajectoryBlock = field(default_factory=TrajectoryBlock)
    observer: ObserverBlock = field(default_factory=ObserverBlock)
    estimate: EstimateBlock = field(default_factory=EstimateBlock)
    output: OutputBlock = field(default_factory=OutputBlock)
    seed: int = 0

    _BLOCKS = {
        "camera": CameraBlock,
        "scene": SceneBlock,
        "trajectory": TrajectoryBlock,
        "observer": ObserverBlock,
        "estimate": EstimateBlock,
        "output": OutputBlock,
    }

    @classmethod
    def from_dict(cls, data: dict | None) -> "RunConfig":
        data = dict(data or {})
        unknown = sorted(set(data) - set(cls._BLOCKS) - {"seed"})
        if unknown:
            raise ConfigError(f"unknown top-level keys {unknown}")
        blocks = {name: _build(kind, data.get(name), name) for name, kind in cls._BLOCKS.items()}
        cfg = cls(**blocks, seed=int(data.get("seed", 0)))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            return cls.from_dict(yaml.safe_load(text))
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def to_dict(self) -> dict[str, Any]:
        def plain(v):
            if isinstance(v, tuple):
                return [plain(x) for x in v]
            return v

        out = {name: {k: plain(v) for k, v in asdict(getattr(self, name)).items()} for name in self._BLOCKS}
        out["seed"] = self.seed
        return out

    def dump(self, path) -> Path:
        path = Path(path)
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))
        return path

    def validate(self) -> None:
        self.intrinsics()
        self.scene.model()
        if int(self.observer.frames) < 0:
            raise ConfigError("observer: frames must be non-negative")
        self.observer.config()
        if int(self.output.export_every_frames) <= 0:
            raise ConfigError("output: export_every_frames must be positive")
        self.path()

    def intrinsics(self) -> PlenopticIntrinsics:
        return self.camera.intrinsics()

    def path(self) -> LissajousPath:
        return self.trajectory.path(int(self.observer.frames), self.scene)

    def with_overrides(self, frames: int | None = None, gain: float | None = None, out: str | None = None) -> "RunConfig":
        data = self.to_dict()
        if frames is not None:
            data["observer"]["frames"] = int(frames)
        if gain is not None:
            data["observer"]["gain"] = float(gain)
        if out is not None:
            data["output"]["directory"] = str(out)
        return RunConfig.from_dict(data)


# --------------------------------------------------------------------------- metrics


@dataclass
class RunMetrics:
    initial_total_sq_error: float
    total_sq_error: np.ndarray
    mean_dist: np.ndarray
    n_updated: np.ndarray
    n_outside: np.ndarray
    n_behind: np.ndarray
    n_grad_err: np.ndarray
    wall_clock_s: np.ndarray
    update_counts: np.ndarray
    cone_checked_points: int = 0
    cone_violations: int = 0
    cone_samples: int = 0
    max_scene_overshoot_m: float = 0.0
    overshoot_bound_m: float = 0.0
    final_cloud: PointEstimateCloud | None = field(default=None, repr=False)
    report: AssumptionReport | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.total_sq_error)

    @property
    def final_ratio(self) -> float:
        if len(self) == 0 or self.initial_total_sq_error == 0:
            return 1.0
        return float(self.total_sq_error[-1] / self.initial_total_sq_error)

    @property
    def diverged(self) -> bool:
        return bool(len(self) and np.nanmax(self.total_sq_error) > DIVERGENCE_FACTOR * self.initial_total_sq_error)

    @property
    def median_updates(self) -> float:
        return float(np.median(self.update_counts)) if len(self.update_counts) else 0.0

    def rows(self):
        for k in range(len(self)):
            yield [
                k,
                repr(float(self.total_sq_error[k])),
                repr(float(self.mean_dist[k])),
                int(self.n_updated[k]),
                int(self.n_outside[k]),
                int(self.n_behind[k]),
                int(self.n_grad_err[k]),
            ]

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(METRICS_HEADER)
            writer.writerows(self.rows())
        return path

    def summary(self) -> dict[str, Any]:
        return {
            "frames": len(self),
            "initial_total_sq_error_m2": float(self.initial_total_sq_error),
            "final_total_sq_error_m2": float(self.total_sq_error[-1]) if len(self) else float(self.initial_total_sq_error),
            "final_ratio": self.final_ratio,
            "diverged": self.diverged,
            "median_update_count": self.median_updates,
            "min_update_count": int(self.update_counts.min()) if len(self.update_counts) else 0,
            "cone_checked_points": self.cone_checked_points,
            "cone_samples": self.cone_samples,
            "cone_violations": self.cone_violations,
            "max_scene_overshoot_m": self.max_scene_overshoot_m,
            "overshoot_bound_m": self.overshoot_bound_m,
            "mean_frame_time_s": float(np.mean(self.wall_clock_s)) if len(self) else 0.0,
        }


def scene_distance(scene: SceneModel, points: np.ndarray) -> np.ndarray:
    """Unsigned distance from each point to the scene surface."""
    surface = scene.surface
    if isinstance(surface, Sphere):
        return np.abs(np.linalg.norm(points - surface.center, axis=1) - surface.radius)
    return np.asarray(point_to_scene_distance(scene, points))


def _signed_overshoot(scene: SceneModel, points: np.ndarray) -> np.ndarray:
    surface = scene.surface
    if isinstance(surface, Sphere):
        return np.linalg.norm(points - surface.center, axis=1) - surface.radius
    inside = np.asarray(surface_contains(surface, points))
    return np.where(inside, -1.0, 1.0) * scene_distance(scene, points)


# --------------------------------------------------------------------------- run


def _export_cloud(cloud: PointEstimateCloud, directory: Path, name: str) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    cloud.write_ply(directory / name)


def write_poses_csv(path, poses) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["frame", "x_m", "y_m", "z_m", "qw", "qx", "qy", "qz"])
        for k, pose in enumerate(poses):
            writer.writerow([k, *(repr(float(v)) for v in pose.translation), *(repr(float(v)) for v in pose.quaternion)])
    return path


def run(config: RunConfig, out_dir=None, write: bool = True, track_cones: bool = True) -> RunMetrics:
    """Render, observe and record every frame of the configured scenario.

    Aborts with ``ConfigError`` when the camera ball leaves the scene or the
    scene is not convex; the other two scenario checks only warn.
    """
    out = Path(out_dir if out_dir is not None else config.output.directory)
    camera = CameraModel(config.intrinsics())
    scene = config.scene.model()
    path = config.path()
    frames = int(config.observer.frames)
    obs = config.observer.config()
    cloud = config.estimate.cloud(config.scene)

    report = validate_assumptions(path, camera, scene, frames, cloud.points)
    for line in report.lines():
        log.info(line)
    if not report.blocking_ok:
        raise ConfigError("scenario violates a blocking assumption: " + "; ".join(report.lines()[0::2]))
    if not report.brightness_monotone:
        log.warning("brightness map fails the monotonicity surrogate; continuing")
    if not report.all_revisited:
        log.warning("some estimates are seen fewer than twice along the path; continuing")

    if write:
        out.mkdir(parents=True, exist_ok=True)
        config.dump(out / "config.yaml")
        (out / "assumptions.txt").write_text("\n".join(report.lines()) + "\n")
        _export_cloud(cloud, out / "clouds", "cloud_00000.ply")

    initial = float(np.sum(scene_distance(scene, cloud.points) ** 2))
    n = len(cloud)
    series = {k: np.zeros(frames) for k in ("err", "mean", "upd", "out", "beh", "grad", "clock")}

    apex = cloud.points.copy()
    ball = report.ball_radius
    # points starting inside the scene but outside the closed camera ball
    tracked = (np.linalg.norm(apex, axis=1) > ball) & np.asarray(surface_contains(scene.surface, apex))
    cone_violations = 0
    cone_samples = 0
    overshoot = 0.0
    max_speed = 0.0
    poses = []

    for t in range(frames):
        tic = time.perf_counter()
        pose = pose_at(path, t)
        poses.append(pose)
        lf = render(scene, camera, pose, config.scene.miss_rgb)
        before = cloud.points
        cloud = observer_step(cloud, pose, lf, obs)
        moved = np.linalg.norm(cloud.points - before, axis=1)
        max_speed = max(max_speed, float(moved.max()) if n else 0.0)
        dist = scene_distance(scene, cloud.points)
        series["err"][t] = np.sum(dist**2)
        series["mean"][t] = np.mean(dist) if n else 0.0
        status = cloud.status
        series["upd"][t] = np.sum(status == PointStatus.UPDATED)
        series["out"][t] = np.sum(status == PointStatus.OUTSIDE_APERTURE_SET)
        series["beh"][t] = np.sum(status == PointStatus.BEHIND_CAMERA)
        series["grad"][t] = np.sum(is_gradient_error(status))
        if track_cones and np.any(tracked):
            inside = positive_cones_contain(np.zeros(3), ball, apex[tracked], cloud.points[tracked])
            cone_violations += int(np.sum(~inside))
            cone_samples += int(inside.size)
        if n:
            overshoot = max(overshoot, float(np.max(_signed_overshoot(scene, cloud.points))))
        series["clock"][t] = time.perf_counter() - tic
        if write and (t + 1) % int(config.output.export_every_frames) == 0:
            _export_cloud(cloud, out / "clouds", f"cloud_{t + 1:05d}.ply")
        if write and config.output.write_frames_png:
            from plenoptic_observer.lightfield import save_png

            save_png(lf, out / "frames" / f"frame_{t:05d}.png", t)

    metrics = RunMetrics(
        initial_total_sq_error=initial,
        total_sq_error=series["err"],
        mean_dist=series["mean"],
        n_updated=series["upd"].astype(int),
        n_outside=series["out"].astype(int),
        n_behind=series["beh"].astype(int),
        n_grad_err=series["grad"].astype(int),
        wall_clock_s=series["clock"],
        update_counts=cloud.update_count.copy(),
        cone_checked_points=int(np.sum(tracked)) if track_cones else 0,
        cone_violations=cone_violations,
        cone_samples=cone_samples,
        max_scene_overshoot_m=max(overshoot, 0.0),
        overshoot_bound_m=max_speed,
        final_cloud=cloud,
        report=report,
    )
    if write:
        metrics.write_csv(out / "metrics.csv")
        write_poses_csv(out / "poses.csv", poses)
        _export_cloud(cloud, out / "clouds", "cloud_final.ply")
        (out / "summary.yaml").write_text(yaml.safe_dump(metrics.summary(), sort_keys=False))
    return metrics


# --------------------------------------------------------------------------- gain sweep


@dataclass
class SweepResult:
    gains: list[float]
    metrics: list[RunMetrics]

    @property
    def best_gain(self) -> float:
        finals = [m.total_sq_error[-1] if len(m) else np.inf for m in self.metrics]
        return float(self.gains[int(np.nanargmin(finals))])

    def table(self) -> list[dict[str, Any]]:
        return [
            {"gain": g, "final_ratio": m.final_ratio, "diverged": m.diverged, "median_update_count": m.median_updates}
            for g, m in zip(self.gains, self.metrics)
        ]

    def write_csv(self, path) -> Path:
        """Frame-by-frame total error, one column per gain."""
        path = Path(path)
        frames = max((len(m) for m in self.metrics), default=0)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["frame", *(f"gain_{g:g}" for g in self.gains)])
            writer.writerow(["initial", *(repr(m.initial_total_sq_error) for m in self.metrics)])
            for k in range(frames):
                writer.writerow([k, *(repr(float(m.total_sq_error[k])) if k < len(m) else "" for m in self.metrics)])
        return path

    def write_table(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["gain", "final_ratio", "diverged", "median_update_count"],
                                    lineterminator="\n")
            writer.writeheader()
            writer.writerows(self.table())
        return path


def gain_sweep(config: RunConfig, gains=None, out_dir=None, write: bool = True) -> SweepResult:
    gains = list(config.observer.sweep_gains if gains is None else gains)
    if not gains:
        raise ConfigError("gain sweep needs at least one gain")
    out = Path(out_dir if out_dir is not None else config.output.directory)
    results = []
    for g in gains:
        sub = config.with_overrides(gain=float(g))
        results.append(run(sub, out / f"gain_{float(g):g}", write=write, track_cones=False))
        log.info("gain %g: final ratio %.4g, diverged %s", g, results[-1].final_ratio, results[-1].diverged)
    sweep = SweepResult([float(g) for g in gains], results)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        sweep.write_csv(out / "sweep_errors.csv")
        sweep.write_table(out / "sweep_summary.csv")
    return sweep


def overshoot_threshold(config: RunConfig, low: float, high: float, frames: int | None = None,
                        iterations: int = 6) -> float:
    """Bisect (geometrically) for the smallest gain whose run diverges.

    ``low`` must converge and ``high`` must diverge over ``frames`` frames.
    """
    base = config
    if frames is not None:
        data = config.to_dict()
        data["trajectory"]["period_frames"] = config.trajectory.period_frames or config.observer.frames
        data["observer"]["frames"] = int(frames)
        base = RunConfig.from_dict(data)

    def diverges(g: float) -> bool:
        return run(base.with_overrides(gain=g), write=False, track_cones=False).diverged

    if diverges(low) or not diverges(high):
        raise ValueError("bisection bracket must converge at low and diverge at high")
    for _ in range(iterations):
        mid = float(np.sqrt(low * high))
        if diverges(mid):
            high = mid
        else:
            low = mid
    return high
