"""Print the scenario assumption checks and per-point revisit coverage for a config."""

import argparse
from pathlib import Path

import numpy as np

from plenoptic_observer.camera import CameraModel
from plenoptic_observer.simharness import RunConfig
from plenoptic_observer.trajectory import validate_assumptions

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "default.yaml")
    args = ap.parse_args()
    cfg = RunConfig.load(args.config)
    camera = CameraModel(cfg.intrinsics())
    points = cfg.estimate.cloud(cfg.scene).points
    report = validate_assumptions(cfg.path(), camera, cfg.scene.model(), cfg.observer.frames, points)
    print("\n".join(report.lines()))
    print(f"minimum depth {camera.min_depth:.4f} m, subimage radius {camera.V:.6f} m")
    seen = report.visible_frames
    for q in (0, 10, 50, 90, 100):
        print(f"views per point, {q:3d}th percentile: {np.percentile(seen, q):g}")
    gaps = report.max_revisit_gap[np.isfinite(report.max_revisit_gap)]
    if len(gaps):
        print(f"revisit gap (frames): median {np.median(gaps):g}, worst {gaps.max():g}")


if __name__ == "__main__":
    main()
