"""Depth sweeps of the local error on a radial-ramp sphere, by subimage size and interpolation.

For each setting, random lenslets along the default path view a unit sphere
coloured by a ramp anchored where the lenslet's central ray lands.  Reports
the error at the true depth relative to the sweep maximum and the adjacent
depth pairs where the error fails to fall toward the truth.
"""

import argparse

import numpy as np

from plenoptic_observer.camera import CameraModel, PlenopticIntrinsics
from plenoptic_observer.lightfield import render
from plenoptic_observer.photometric import local_errors
from plenoptic_observer.scene import RadialMonotone, SceneModel, Sphere
from plenoptic_observer.simharness import CameraBlock, RunConfig
from plenoptic_observer.trajectory import pose_at


def camera_with_subimage(m):
    b = CameraBlock()
    v = b.pupilar_to_retinal_m / b.lens_to_pupilar_m * b.aperture_radius_m
    return CameraModel(PlenopticIntrinsics(b.focal_length_m, b.lens_to_pupilar_m, b.pupilar_to_retinal_m,
                                           b.aperture_radius_m, 2 * v / (m - 1) * 0.999, tuple(b.lenslet_counts),
                                           (m, m), b.lenslet_pitch_m))


def study(m, interpolation, cases, per_side, scale, seed):
    cam = camera_with_subimage(m)
    path = RunConfig().path()
    rng = np.random.default_rng(seed)
    worst = 0.0
    pairs = violations = at_jumps = 0
    for _ in range(cases):
        pose = pose_at(path, int(rng.integers(600)))
        i, j = (int(x) for x in rng.integers(0, cam.M, 2))
        o, d = pose.translation, pose.rotation @ cam.directions[i, j]
        b = o @ d
        gamma = -b + np.sqrt(b * b - (o @ o - 1.0))
        lf = render(SceneModel(Sphere((0, 0, 0), 1.0), RadialMonotone(o + gamma * d, scale)), cam, pose)
        near = np.linspace(cam.min_depth * 1.0011, gamma, per_side + 1)[:-1]
        far = np.linspace(gamma, 3 * gamma, per_side + 1)[1:]
        depths = np.concatenate([near, [gamma], far])
        res = local_errors(lf, np.full(len(depths), i), np.full(len(depths), j), depths, interpolation=interpolation)
        v, c = res.value, res.window_count
        worst = max(worst, v[per_side] / np.nanmax(v))
        for a in range(len(depths) - 1):
            pairs += 1
            toward = v[a] > v[a + 1] if a < per_side else v[a + 1] > v[a]
            if not toward:
                violations += 1
                at_jumps += c[a] != c[a + 1]
    return worst, violations, at_jumps, pairs


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--subimage", type=int, nargs="+", default=[9, 17, 33])
    ap.add_argument("--interpolation", nargs="+", default=["bilinear", "cubic"])
    ap.add_argument("--cases", type=int, default=50)
    ap.add_argument("--per-side", type=int, default=20)
    ap.add_argument("--ramp-scale", type=float, default=0.3)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    print(f"{'m':>4} {'interp':>9} {'truth/max':>10} {'violations':>11} {'at jumps':>9} {'pairs':>6}")
    for m in args.subimage:
        for mode in args.interpolation:
            worst, bad, jumps, pairs = study(m, mode, args.cases, args.per_side, args.ramp_scale, args.seed)
            print(f"{m:>4} {mode:>9} {worst:>10.3g} {bad:>11d} {jumps:>9d} {pairs:>6d}")


if __name__ == "__main__":
    main()
