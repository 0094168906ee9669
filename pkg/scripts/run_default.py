"""Run the default desk-scale scenario and print its summary."""

import argparse
import logging
from pathlib import Path

import yaml

from plenoptic_observer.simharness import RunConfig, run

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "default.yaml")
    ap.add_argument("--out", default="runs/default")
    ap.add_argument("--frames", type=int)
    ap.add_argument("--gain", type=float)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    cfg = RunConfig.load(args.config).with_overrides(frames=args.frames, gain=args.gain, out=args.out)
    metrics = run(cfg)
    print(yaml.safe_dump(metrics.summary(), sort_keys=False), end="")


if __name__ == "__main__":
    main()
