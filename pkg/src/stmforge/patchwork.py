"""Overlapping-patch restoration of images larger than the model's patch size.

Patches are blended with separable squared-cosine cross-fades. Windows are
built per axis and renormalised so the weights at every pixel sum to one, also
where the last placement is clamped against the image border.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .genmodel.process import run_sampler
from .imagecore import Image, NormState, normalize_sym, resample_y

DEFAULT_PATCH = 128
DEFAULT_OVERLAP = 32


def cos2_ramp(u):
    """Fade-out weight cos^2(pi u / 2) for u in [0, 1]; the fade-in is its mirror."""
    return np.cos(0.5 * np.pi * np.asarray(u, dtype=np.float64)) ** 2


def _ramp_up(n: int) -> np.ndarray:
    return cos2_ramp(1.0 - (np.arange(n) + 0.5) / n)


def _positions(length: int, patch: int, overlap: int) -> list[int]:
    stride = patch - overlap
    pos = list(range(0, length - patch + 1, stride))
    if pos[-1] != length - patch:
        pos.append(length - patch)
    return pos


def _axis_windows(length: int, patch: int, pos: list[int]) -> list[np.ndarray]:
    raw = []
    for k, p in enumerate(pos):
        w = np.ones(patch)
        if k > 0:
            band = pos[k - 1] + patch - p
            w[:band] = _ramp_up(band)
        if k < len(pos) - 1:
            band = p + patch - pos[k + 1]
            w[patch - band:] = _ramp_up(band)[::-1]
        raw.append(w)
    total = np.zeros(length)
    for p, w in zip(pos, raw):
        total[p:p + patch] += w
    return [w / total[p:p + patch] for p, w in zip(pos, raw)]


@dataclass(frozen=True, eq=False)
class PatchPlan:
    height: int
    width: int
    patch: int
    overlap: int
    tops: tuple
    lefts: tuple
    row_windows: tuple
    col_windows: tuple

    @property
    def placements(self) -> list[tuple[int, int]]:
        return [(t, l) for t in self.tops for l in self.lefts]

    def window(self, index: int) -> np.ndarray:
        i, j = divmod(index, len(self.lefts))
        return np.outer(self.row_windows[i], self.col_windows[j])

    def __len__(self):
        return len(self.tops) * len(self.lefts)


def plan_patches(h: int, w: int, patch: int = DEFAULT_PATCH, overlap: int = DEFAULT_OVERLAP) -> PatchPlan:
    if h < patch or w < patch:
        raise ValueError(f"{h}x{w} image is smaller than the {patch}px patch")
    if not 0 < overlap <= patch // 2:
        raise ValueError(f"overlap must be in (0, {patch // 2}], got {overlap}")
    tops, lefts = _positions(h, patch, overlap), _positions(w, patch, overlap)
    return PatchPlan(
        h, w, patch, overlap,
        tuple(tops), tuple(lefts),
        tuple(_axis_windows(h, patch, tops)),
        tuple(_axis_windows(w, patch, lefts)),
    )


def cos2_window(patch: int = DEFAULT_PATCH, overlap: int = DEFAULT_OVERLAP) -> np.ndarray:
    """Interior-patch window: 1 in the core, cos^2 fades across an ``overlap`` band on each edge."""
    if not 0 < overlap <= patch // 2:
        raise ValueError(f"overlap must be in (0, {patch // 2}], got {overlap}")
    w = np.ones(patch)
    w[:overlap] = _ramp_up(overlap)
    w[patch - overlap:] = _ramp_up(overlap)[::-1]
    return np.outer(w, w)


def extract_patches(img, plan: PatchPlan) -> np.ndarray:
    px = img.pixels if isinstance(img, Image) else np.asarray(img)
    p = plan.patch
    return np.stack([px[t:t + p, l:l + p] for t, l in plan.placements])


def assemble(patches, plan: PatchPlan) -> np.ndarray:
    patches = [pt.pixels if isinstance(pt, Image) else np.asarray(pt) for pt in patches]
    if len(patches) != len(plan):
        raise ValueError(f"plan has {len(plan)} placements, got {len(patches)} patches")
    out = np.zeros((plan.height, plan.width))
    p = plan.patch
    for k, ((t, l), pt) in enumerate(zip(plan.placements, patches)):
        out[t:t + p, l:l + p] += plan.window(k) * pt
    return out


def patch_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1, dtype=np.uint64)[0])


def restore_image(model, sampler: str, steps: int, img: Image, seed: int = 0, sched=None,
                  patch: int = DEFAULT_PATCH, overlap: int = DEFAULT_OVERLAP) -> Image:
    """Restore ``img`` patch by patch with a conditioned sampler and blend the results.

    The input is normalised to [-1, 1]; each patch's starting noise comes from
    ``patch_seed(seed, index)``. All patches are sampled as one batch.
    """
    if img.height < patch or img.width < patch:
        raise ValueError(f"{img.height}x{img.width} image is smaller than the {patch}px patch")
    cond_img = img if img.norm_state is NormState.SYM else normalize_sym(img)
    plan = plan_patches(img.height, img.width, patch, overlap)
    cond = extract_patches(cond_img, plan)
    noise = np.stack([np.random.default_rng(patch_seed(seed, k)).standard_normal((patch, patch))
                      for k in range(len(plan))])
    out = run_sampler(sampler, model, cond, steps, sched=sched, seed=seed, noise=noise)
    return Image(np.clip(assemble(np.asarray(out), plan), -1.0, 1.0), NormState.SYM)


def super_resolve(model, sampler: str, steps: int, img: Image, factor: int, seed: int = 0, sched=None,
                  patch: int = DEFAULT_PATCH, overlap: int = DEFAULT_OVERLAP) -> Image:
    """Nearest-repeat scan lines by ``factor`` then restore on the full-density grid."""
    if factor not in (2, 4):
        raise ValueError(f"factor must be 2 or 4, got {factor}")
    up = resample_y(img, factor, "up_nearest")
    return restore_image(model, sampler, steps, up, seed, sched, patch, overlap)


def bench(model, steps_list, repeat: int = 3, sampler: str = "fm", size: int = DEFAULT_PATCH,
          sched=None, seed: int = 0) -> list[dict]:
    """Wall-clock restoration time of one ``size`` x ``size`` patch per step count."""
    rng = np.random.default_rng(seed)
    img = Image(np.clip(rng.standard_normal((size, size)) * 0.3, -1, 1), NormState.SYM)
    kw = {"patch": size, "overlap": min(DEFAULT_OVERLAP, size // 2)}
    restore_image(model, sampler, 1, img, seed, sched, **kw)  # warm-up
    rows = []
    for steps in steps_list:
        for r in range(repeat):
            t0 = time.perf_counter()
            restore_image(model, sampler, steps, img, seed, sched, **kw)
            total = time.perf_counter() - t0
            rows.append({"steps": steps, "repeat": r, "total_s": total, "per_step_s": total / steps})
    return rows


def linear_fit_r2(x, y) -> tuple[float, float, float]:
    """(slope, intercept, R^2) of an ordinary least-squares line."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def bench_r2(rows) -> float:
    """R^2 of median total time against step count."""
    steps = sorted({r["steps"] for r in rows})
    med = [np.median([r["total_s"] for r in rows if r["steps"] == s]) for s in steps]
    return linear_fit_r2(steps, med)[2]
