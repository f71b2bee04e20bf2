"""Train the TinyDenoiser on degraded lattices and report restoration gains.

    python scripts/desk_restore.py --seconds 270 --steps 1 2 5
"""

import argparse
import dataclasses
import json

from stmforge.desk import DESK_TRAIN, run_desk


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seconds", type=float, default=DESK_TRAIN.max_seconds, help="training wall-clock cap")
    ap.add_argument("--steps", type=int, default=1, help="RK2 steps at inference")
    ap.add_argument("--train", type=int, default=400)
    ap.add_argument("--test", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0, help="training seed")
    args = ap.parse_args()

    cfg = dataclasses.replace(DESK_TRAIN, max_seconds=args.seconds, seed=args.seed)
    res = run_desk(args.train, args.test, args.steps, train_cfg=cfg)
    print(json.dumps({
        "epochs": res.epochs,
        "train_seconds": round(res.seconds, 1),
        "psnr": [res.psnr_degraded, res.psnr_restored],
        "ssim": [res.ssim_degraded, res.ssim_restored],
        "psnr_gain": res.psnr_gain,
        "ssim_gain": res.ssim_gain,
    }, indent=2))


if __name__ == "__main__":
    main()
