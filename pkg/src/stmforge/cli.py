"""``stmforge`` command line.

Exit codes: 0 success, 1 I/O or runtime failure, 2 bad usage, 3 failed check.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config, with_run, write_stamp
from .degrade import TASKS, TARGETED

_NOT_REPLAYED = ("--out", "--jobs")


def _replay_args(argv: list) -> list:
    """Arguments needed to replay a run; output location and worker count are excluded."""
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a in _NOT_REPLAYED:
            skip = True
            continue
        if any(a.startswith(f + "=") for f in _NOT_REPLAYED):
            continue
        out.append(a)
    return out


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _pristine(args, seed: int):
    from .dataset import load_pristine_dir, toy_pristine_set

    if args.pristine:
        return load_pristine_dir(args.pristine)
    return toy_pristine_set(seed=seed)


def cmd_generate(args, cfg, argv):
    from .dataset import generate_dataset, split_pristine

    counts = args.counts
    if len(counts) != 3:
        raise ValueError("--counts needs three values: train,val,test")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    splits = split_pristine(_pristine(args, args.pristine_seed))
    manifests = generate_dataset(
        splits, cfg.run.task, dict(zip(("train", "val", "test"), counts)), cfg.run.seed, out,
        cfg.degrade, args.jobs,
    )
    write_stamp(out, "generate", argv, cfg, cfg.run.seed)
    print(json.dumps({k: len(m["entries"]) for k, m in manifests.items()}))
    return 0


def cmd_targeted(args, cfg, argv):
    from .dataset import generate_targeted_set, split_pristine

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    test_images = split_pristine(_pristine(args, args.pristine_seed))["test"]
    manifest, _ = generate_targeted_set(
        test_images, args.degradation, cfg.run.task, args.n, cfg.run.seed, out, cfg.degrade, args.jobs
    )
    write_stamp(out, "targeted", argv, cfg, cfg.run.seed)
    print(json.dumps({manifest["split"]: len(manifest["entries"])}))
    return 0


def cmd_train_toy(args, cfg, argv):
    from .dataset import load_split
    from .genmodel.checkpoint import save_checkpoint
    from .genmodel.train import train_toy

    pairs = load_split(args.data, "train", args.limit)
    tcfg = cfg.train_config(epochs=args.epochs, batch=args.batch, lr=args.lr, seed=args.seed,
                            channels=tuple(args.channels) if args.channels else None)
    net, result = train_toy(pairs, args.objective, tcfg)
    meta = {"objective": args.objective, "T": tcfg.T, "curve": result.curve, "seed": tcfg.seed}
    save_checkpoint(args.out, net, meta)
    with open(f"{args.out}.loss.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "probe_loss"])
        for i, v in enumerate(result.curve):
            w.writerow([i, repr(v)])
    write_stamp(args.out, "train-toy", argv, cfg, tcfg.seed)
    print(json.dumps({"params": net.n_params(), "curve": result.curve}))
    return 0


def _load_restorer(path, sampler):
    from .genmodel.checkpoint import load_checkpoint
    from .genmodel.denoiser import TinyDenoiser, TorchDenoiser
    from .genmodel.schedule import cosine_schedule
    from .genmodel.train import OBJECTIVE_SAMPLER

    if path is None:
        net, meta = TinyDenoiser(), {"objective": "fm", "T": 1000}
    else:
        net, meta = load_checkpoint(path)
    sampler = sampler or OBJECTIVE_SAMPLER[meta.get("objective", "fm")]
    return TorchDenoiser(net), sampler, cosine_schedule(meta.get("T", 1000))


def cmd_restore(args, cfg, argv):
    from .imagecore import load_image, write_stmi
    from .patchwork import restore_image, super_resolve

    model, sampler, sched = _load_restorer(args.model, args.sampler)
    img = load_image(args.input)
    pw = cfg.patchwork
    overlap = args.overlap or pw.overlap
    if args.command == "sr":
        out = super_resolve(model, sampler, args.steps, img, args.factor, args.seed, sched, pw.patch, overlap)
    else:
        out = restore_image(model, sampler, args.steps, img, args.seed, sched, pw.patch, overlap)
    write_stmi(args.out, out)
    write_stamp(args.out, args.command, argv, cfg, args.seed)
    return 0


def _image_files(d: Path) -> dict:
    return {p.stem: p for p in sorted(d.iterdir()) if p.suffix.lower() in (".stmi", ".pgm")}


def cmd_eval(args, cfg, argv):
    from .imagecore import load_image
    from .metrics import FileEmbeddings, RandomProjectionEmbedder, cmmd, evaluate_pairs, kid

    gt_files, pred_files = _image_files(Path(args.gt)), _image_files(Path(args.pred))
    names = sorted(set(gt_files) & set(pred_files))
    if not names:
        raise FileNotFoundError(f"no matching image names in {args.gt} and {args.pred}")
    gts = [load_image(gt_files[n]) for n in names]
    preds = [load_image(pred_files[n]) for n in names]
    metrics = set(args.metrics.split(","))
    unknown = metrics - {"psnr", "ssim", "kid", "cmmd"}
    if unknown:
        raise ValueError(f"unknown metrics: {sorted(unknown)}")
    report = evaluate_pairs(list(zip(gts, preds)), names, ssim_mode=args.ssim_mode)
    summary = {k: v for k, v in report.summary.items() if k.split("_")[0] in metrics}
    if metrics & {"kid", "cmmd"}:
        if args.embeddings:
            eg, ep = (FileEmbeddings(p).embed_all() for p in args.embeddings)
        else:
            emb = RandomProjectionEmbedder()
            eg, ep = emb.embed_all(gts), emb.embed_all(preds)
        if "kid" in metrics:
            summary["kid"] = kid(eg, ep) if min(eg.n, ep.n) >= 2 else math.nan
        if "cmmd" in metrics:
            summary["cmmd"] = cmmd(eg, ep)
    out = Path(args.out)
    report.write_csv(out)
    with open(out.with_name(out.stem + "_summary.csv"), "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["metric", "value"])
        for k, v in summary.items():
            w.writerow([k, repr(float(v))])
    write_stamp(out, "eval", argv, cfg, None)
    print(json.dumps(summary))
    return 0


def cmd_physics_check(args, cfg, argv):
    from .tipphysics import equivalence_sweep

    worst = equivalence_sweep(args.draws, args.size, args.seed)
    print(json.dumps({"draws": args.draws, "max_abs_deviation": worst, "tolerance": args.tol}))
    return 0 if worst < args.tol else 3


def cmd_bench(args, cfg, argv):
    from .patchwork import bench, bench_r2

    model, sampler, sched = _load_restorer(args.model, args.sampler)
    rows = bench(model, args.steps, args.repeat, sampler, args.size, sched, args.seed)
    with open(args.out, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=["steps", "repeat", "total_s", "per_step_s"])
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    write_stamp(args.out, "bench", argv, cfg, args.seed)
    print(json.dumps({"r2": bench_r2(rows), "rows": len(rows)}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stmforge", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", help="TOML run config; flags override it")
        if seed:
            sp.add_argument("--seed", type=int)

    g = sub.add_parser("generate", help="build train/val/test datasets")
    common(g)
    g.add_argument("--task", choices=TASKS)
    g.add_argument("--out", required=True)
    g.add_argument("--counts", type=_int_list, default=[20000, 2000, 2000])
    g.add_argument("--pristine", help="directory of pristine .stmi/.pgm scans (default: toy lattices)")
    g.add_argument("--pristine-seed", type=int, default=0)
    g.add_argument("--jobs", type=int, default=1)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("targeted", help="build a single-degradation test set")
    common(t)
    t.add_argument("--degradation", required=True, choices=tuple(TARGETED))
    t.add_argument("--task", choices=TASKS)
    t.add_argument("--n", type=int, default=1000)
    t.add_argument("--out", required=True)
    t.add_argument("--pristine")
    t.add_argument("--pristine-seed", type=int, default=0)
    t.add_argument("--jobs", type=int, default=1)
    t.set_defaults(func=cmd_targeted)

    tr = sub.add_parser("train-toy", help="train the tiny reference denoiser")
    common(tr)
    tr.add_argument("--objective", choices=("fm", "ddim", "ddim_fft", "mae"), default="fm")
    tr.add_argument("--data", required=True, help="output directory of `generate`")
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--batch", type=int)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--channels", type=_int_list)
    tr.add_argument("--limit", type=int, help="use only the first N training samples")
    tr.add_argument("--out", required=True)
    tr.set_defaults(func=cmd_train_toy)

    for name in ("restore", "sr"):
        r = sub.add_parser(name, help="restore an image" if name == "restore" else "super-resolve scan lines")
        common(r, seed=False)
        r.add_argument("--model", help="STMW checkpoint (default: untrained TinyDenoiser)")
        r.add_argument("--sampler", choices=("ddim", "fm", "direct"))
        r.add_argument("--steps", type=int, default=2)
        r.add_argument("--in", dest="input", required=True)
        r.add_argument("--out", required=True)
        r.add_argument("--seed", type=int, default=0)
        r.add_argument("--overlap", type=int)
        if name == "sr":
            r.add_argument("--factor", type=int, choices=(2, 4), required=True)
        r.set_defaults(func=cmd_restore)

    e = sub.add_parser("eval", help="score predictions against ground truth")
    common(e, seed=False)
    e.add_argument("--gt", required=True)
    e.add_argument("--pred", required=True)
    e.add_argument("--metrics", default="psnr,ssim,kid,cmmd")
    e.add_argument("--embeddings", nargs=2, metavar=("GT_STME", "PRED_STME"))
    e.add_argument("--ssim-mode", choices=("windowed", "global"), default="windowed")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    ph = sub.add_parser("physics-check", help="double-tip model vs multi-tip sigmoid sweep")
    common(ph, seed=False)
    ph.add_argument("--draws", type=int, default=1000)
    ph.add_argument("--size", type=int, default=32)
    ph.add_argument("--seed", type=int, default=0)
    ph.add_argument("--tol", type=float, default=1e-9)
    ph.set_defaults(func=cmd_physics_check)

    b = sub.add_parser("bench", help="time restoration per sampler step count")
    common(b, seed=False)
    b.add_argument("--model")
    b.add_argument("--sampler", choices=("ddim", "fm", "direct"))
    b.add_argument("--steps", type=_int_list, default=[2, 5, 10])
    b.add_argument("--repeat", type=int, default=3)
    b.add_argument("--size", type=int, default=128)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)
    return p


def _error(kind: str, exc: Exception) -> None:
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
        cfg = with_run(cfg, task=getattr(args, "task", None), seed=getattr(args, "seed", None))
        return args.func(args, cfg, _replay_args(argv))
    except OSError as exc:
        _error("io", exc)
        return 1
    except (ValueError, KeyError) as exc:
        _error("usage", exc)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort structured report
        _error("runtime", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
