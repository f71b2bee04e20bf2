"""Time patch restoration against step count and fit a line."""

import argparse
from statistics import median

from stmforge.genmodel.denoiser import TinyDenoiser, TorchDenoiser
from stmforge.patchwork import bench, linear_fit_r2


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, nargs="+", default=[2, 5, 10])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--size", type=int, default=128)
    args = ap.parse_args()

    rows = bench(TorchDenoiser(TinyDenoiser()), args.steps, args.repeat, size=args.size)
    for r in rows:
        print(f"steps {r['steps']:3d}  repeat {r['repeat']}  total {r['total_s']:.4f}s  "
              f"per step {r['per_step_s']:.4f}s")
    xs = sorted(set(args.steps))
    ys = [median(r["total_s"] for r in rows if r["steps"] == s) for s in xs]
    slope, intercept, r2 = linear_fit_r2(xs, ys)
    print(f"fit: {slope:.4f}s/step + {intercept:.4f}s overhead, R^2 = {r2:.5f}")


if __name__ == "__main__":
    main()
