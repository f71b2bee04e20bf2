"""Per-degradation evaluation over targeted test sets."""

from __future__ import annotations

import csv

import numpy as np

from .dataset import generate_targeted_set
from .imagecore import Image, NormState
from .metrics import evaluate_pairs

RESTORE_TYPES = ("multitip", "misalign", "tipchange", "blunt", "scanline")
REPORT_COLUMNS = (
    "task",
    "degradation",
    "n",
    "psnr_degraded",
    "ssim_degraded",
    "psnr_restored",
    "ssim_restored",
)


def degradation_types(task: str) -> tuple:
    return RESTORE_TYPES if task == "restore" else RESTORE_TYPES + ("lowres_only",)


def targeted_report(restorer, pristine, task: str, n: int = 1000, seed: int = 0, cfg=None,
                    types=None, ssim_mode: str = "windowed") -> list[dict]:
    """One row per degradation type with mean PSNR/SSIM before and after restoration.

    ``restorer`` maps a ``(B, H, W)`` stack of degraded [-1, 1] inputs to restored stacks.
    """
    rows = []
    for deg in types or degradation_types(task):
        _, records = generate_targeted_set(pristine, deg, task, n=n, seed=seed, cfg=cfg)
        cond = np.stack([r.degraded.pixels for r in records])
        out = np.clip(np.asarray(restorer(cond)), -1.0, 1.0)
        before = evaluate_pairs([(r.ground_truth, r.degraded) for r in records], ssim_mode=ssim_mode)
        after = evaluate_pairs(
            [(r.ground_truth, Image(o, NormState.SYM)) for r, o in zip(records, out)], ssim_mode=ssim_mode
        )
        b, a = before.summary, after.summary
        rows.append({
            "task": task,
            "degradation": deg,
            "n": len(records),
            "psnr_degraded": b["psnr_mean"],
            "ssim_degraded": b["ssim_mean"],
            "psnr_restored": a["psnr_mean"],
            "ssim_restored": a["ssim_mean"],
        })
    return rows


def write_report(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=list(REPORT_COLUMNS))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(r[k]) if isinstance(r[k], float) else r[k] for k in REPORT_COLUMNS})
