"""Command-line entry point: ``run``, ``sweep``, ``validate`` and ``render-frame``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from plenoptic_observer.camera import CameraModel
from plenoptic_observer.errors import PlenopticError
from plenoptic_observer.lightfield import render, save_png
from plenoptic_observer.simharness import RunConfig, gain_sweep, run
from plenoptic_observer.trajectory import pose_at, validate_assumptions


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    return cfg.with_overrides(frames=args.frames, gain=getattr(args, "gain", None), out=args.out)


def _cmd_run(args) -> int:
    cfg = _config(args)
    metrics = run(cfg)
    print(yaml.safe_dump(metrics.summary(), sort_keys=False), end="")
    print(f"outputs written to {cfg.output.directory}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _config(args)
    gains = args.gains if args.gains else None
    sweep = gain_sweep(cfg, gains)
    for row in sweep.table():
        print(f"gain {row['gain']:>10g}  final_ratio {row['final_ratio']:.4g}  diverged {row['diverged']}")
    print(f"best gain {sweep.best_gain:g}; outputs written to {cfg.output.directory}")
    return 0


def _cmd_validate(args) -> int:
    cfg = _config(args)
    frames = cfg.observer.frames
    report = validate_assumptions(cfg.path(), CameraModel(cfg.intrinsics()), cfg.scene.model(), frames,
                                  cfg.estimate.cloud(cfg.scene).points)
    print("\n".join(report.lines()))
    return 0 if report.blocking_ok else 1


def _cmd_render(args) -> int:
    cfg = _config(args)
    camera = CameraModel(cfg.intrinsics())
    lf = render(cfg.scene.model(), camera, pose_at(cfg.path(), args.frame), cfg.scene.miss_rgb)
    target = Path(args.out or cfg.output.directory)
    if target.suffix.lower() != ".png":
        target = target / f"frame_{args.frame:05d}.png"
    print(save_png(lf, target, args.frame))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plenoptic-observer", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, gain=True):
        p.add_argument("--config", type=Path, help="YAML run configuration (defaults built in)")
        p.add_argument("--out", help="output directory (render-frame: directory or .png path)")
        p.add_argument("--frames", type=int, help="override the frame count")
        if gain:
            p.add_argument("--gain", type=float, help="override the observer gain")
        return p

    common(sub.add_parser("run", help="run one scenario")).set_defaults(func=_cmd_run)
    sweep = common(sub.add_parser("sweep", help="run the scenario for several gains"), gain=False)
    sweep.add_argument("--gains", type=float, nargs="+", help="gains to try (default: config sweep_gains)")
    sweep.set_defaults(func=_cmd_sweep)
    common(sub.add_parser("validate", help="check the scenario assumptions"), gain=False).set_defaults(
        func=_cmd_validate)
    render_p = common(sub.add_parser("render-frame", help="write one light-field frame as PNG"), gain=False)
    render_p.add_argument("--frame", type=int, default=0, help="frame index along the path")
    render_p.set_defaults(func=_cmd_render)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (PlenopticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
