"""Sweep the observer gain over the default scenario and bisect for the divergence threshold."""

import argparse
import logging
from pathlib import Path

from plenoptic_observer.simharness import RunConfig, gain_sweep, overshoot_threshold

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "default.yaml")
    ap.add_argument("--out", default="runs/sweep")
    ap.add_argument("--gains", type=float, nargs="+")
    ap.add_argument("--bisect", action="store_true", help="also bisect between the best and largest gain")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    cfg = RunConfig.load(args.config).with_overrides(out=args.out)
    sweep = gain_sweep(cfg, args.gains)
    for row in sweep.table():
        print(f"gain {row['gain']:>10g}  final_ratio {row['final_ratio']:.4g}  "
              f"diverged {row['diverged']}  median_updates {row['median_update_count']:g}")
    print(f"best gain {sweep.best_gain:g}")
    top = max(sweep.gains)
    if args.bisect and sweep.metrics[sweep.gains.index(top)].diverged and top > sweep.best_gain:
        print(f"divergence threshold ~ {overshoot_threshold(cfg, sweep.best_gain, top):.4g}")


if __name__ == "__main__":
    main()
