"""Physics-informed STM degradation pipeline.

Generation is split in two: :func:`sample_trace` draws every random parameter
into a :class:`DegradationTrace`, and :func:`apply_trace` deterministically
renders it. Replaying a stored trace therefore runs exactly the code path used
to create the sample.

Pipeline order: rotate, multitip, misalign, crop, blunt, tipchange, resample,
scanlinenoise, normalize.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .imagecore import (
    Image,
    Kernel,
    NormState,
    _blur_array,
    _shift_array,
    convolve,
    crop,
    decode_stmi,
    encode_stmi,
    gaussian_blur,
    median_filter,
    normalize_sym,
    normalize_unit,
    resample_y,
    rotate_quarter,
    shift_rows,
)

STEPS = (
    "rotate",
    "multitip",
    "misalign",
    "crop",
    "blunt",
    "tipchange",
    "resample",
    "scanlinenoise",
    "normalize",
)
OPTIONAL_STEPS = ("multitip", "misalign", "blunt", "tipchange", "scanlinenoise")
TASKS = ("restore", "sr2", "sr4")
TASK_FACTOR = {"restore": None, "sr2": 2, "sr4": 4}
KERNEL_KINDS = ("gaussian", "median", "random")
SCANLINE_KINDS = ("constant", "lognormal", "sine")
TARGETED = {
    "multitip": "multitip",
    "misalign": "misalign",
    "tipchange": "tipchange",
    "blunt": "blunt",
    "scanline": "scanlinenoise",
    "lowres_only": None,
}


@dataclass(frozen=True)
class DegradeConfig:
    crop: int = 128
    multitip_p: float = 1.0
    tip_count_probs: tuple = (0.5, 0.3, 0.2)
    tip_amplitude: tuple = (1.0, 2.5)
    tip_c: tuple = (5.0, 9.0)
    tip_d: tuple = (7.0, 10.0)
    tip_offset: tuple = (1.0, 11.0)
    tip_kernel_probs: tuple = (0.3, 0.4, 0.3)
    tip_gauss_sigma: tuple = (1.0, 3.0)
    tip_median_max: int = 9
    tip_random_sizes: tuple = (5, 6)
    tip_random_range: tuple = (-0.5, 1.0)
    misalign_p: float = 0.3
    misalign_sigma: float = 0.8
    blunt_p: float = 0.6
    blunt_sigma: tuple = (0.3, 0.6)
    tipchange_p: float = 0.6
    tipchange_sigma: tuple = (0.3, 0.6)
    tipchange_offset_p: float = 0.5
    tipchange_offset: tuple = (0.05, 0.4)
    scanline_p: float = 0.6
    scanline_rows: tuple = (25, 35)
    scanline_max_frac: float = 0.8
    scanline_type_probs: tuple = (0.3, 0.45, 0.25)
    scanline_constant: tuple = (0.0, 0.4)
    lognorm_mu: tuple = (1.0, 2.0)
    lognorm_sigma: tuple = (0.5, 1.0)
    lognorm_peak: tuple = (0.1, 0.4)
    sine_amplitude: tuple = (0.05, 0.4)
    sine_period: tuple = (8.0, 64.0)

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                object.__setattr__(self, f.name, tuple(v))
        for name in ("tip_count_probs", "tip_kernel_probs", "scanline_type_probs"):
            if abs(sum(getattr(self, name)) - 1.0) > 1e-9:
                raise ValueError(f"{name} must sum to 1")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "DegradeConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown degrade config keys: {sorted(unknown)}")
        return cls(**d)


def targeted_config(degradation: str, task: str, base: DegradeConfig | None = None) -> DegradeConfig:
    """Config in which exactly one optional degradation always fires (none for lowres_only)."""
    base = base or DegradeConfig()
    if degradation not in TARGETED:
        raise ValueError(f"unknown degradation {degradation!r}")
    if degradation == "lowres_only" and task == "restore":
        raise ValueError("lowres_only is only defined for super-resolution tasks")
    chosen = TARGETED[degradation]
    probs = {f"{s}_p": 1.0 if s == chosen else 0.0 for s in ("multitip", "misalign", "blunt", "tipchange")}
    probs["scanline_p"] = 1.0 if chosen == "scanlinenoise" else 0.0
    return replace(base, **probs)


@dataclass
class StepRecord:
    step: str
    fired: bool
    params: dict = field(default_factory=dict)


@dataclass
class DegradationTrace:
    seed: int | None
    task: str
    applied: list

    def record(self, step: str) -> StepRecord:
        for r in self.applied:
            if r.step == step:
                return r
        raise KeyError(step)

    def fired(self, step: str) -> bool:
        return self.record(step).fired

    def to_dict(self) -> dict:
        return {"seed": self.seed, "task": self.task, "applied": [asdict(r) for r in self.applied]}

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationTrace":
        return cls(d["seed"], d["task"], [StepRecord(**r) for r in d["applied"]])


@dataclass
class TipCopy:
    amplitude: float
    c: float
    d: float
    dx: int
    dy: int
    kernel: dict


@dataclass
class MultiTipParams:
    n_tips: int
    copies: list

    def __post_init__(self):
        if self.n_tips < 2:
            raise ValueError("a multi-tip needs at least 2 tips")
        if len(self.copies) != self.n_tips - 1:
            raise ValueError(f"{self.n_tips} tips need {self.n_tips - 1} displaced copies")

    def to_dict(self) -> dict:
        return {"n_tips": self.n_tips, "copies": [asdict(c) for c in self.copies]}

    @classmethod
    def from_dict(cls, d: dict) -> "MultiTipParams":
        return cls(d["n_tips"], [TipCopy(**c) for c in d["copies"]])


@dataclass
class SampleRecord:
    ground_truth: Image
    degraded: Image
    trace: DegradationTrace
    task: str

    def __post_init__(self):
        if self.ground_truth.shape != self.degraded.shape:
            raise ValueError("ground truth and degraded channels differ in shape")

    def to_bytes(self) -> bytes:
        return encode_stmi(self.ground_truth) + encode_stmi(self.degraded)

    def stacked(self) -> np.ndarray:
        return np.stack([self.ground_truth.pixels, self.degraded.pixels])


def read_sample(data: bytes) -> tuple[Image, Image]:
    gt, deg = decode_stmi(data, 2)
    return gt, deg


# --- individual steps ---------------------------------------------------------


def _apply_kernel(px: np.ndarray, spec: dict) -> np.ndarray:
    kind = spec["kind"]
    if kind == "identity":
        return px
    if kind == "gaussian":
        return _blur_array(px, spec["sigma"])
    if kind == "median":
        return median_filter(Image(px), spec["k"]).pixels
    if kind == "random":
        return convolve(Image(px), Kernel(np.asarray(spec["weights"], dtype=np.float64))).pixels
    raise ValueError(f"unknown kernel kind {kind!r}")


def apply_multi_tip(img, p: MultiTipParams) -> Image:
    """Add ``n_tips - 1`` sigmoid-modulated, displaced and filtered ghost copies."""
    h = img.pixels if isinstance(img, Image) else np.asarray(img, dtype=np.float64)
    out = h.copy()
    with np.errstate(over="ignore"):
        for cp in p.copies:
            displaced = _shift_array(h, int(cp.dx), int(cp.dy))
            ghost = cp.amplitude / (1.0 + np.exp(cp.c - cp.d * displaced))
            out = out + _apply_kernel(ghost, cp.kernel)
    return Image(out, NormState.RAW)


def apply_misalignment(img: Image, sigma: float = 0.8, rng=None) -> Image:
    rng = np.random.default_rng(rng)
    shifts = np.rint(rng.normal(0.0, sigma, size=img.height)).astype(np.int64)
    return shift_rows(img, shifts)


def apply_blunt_tip(img: Image, sigma: float) -> Image:
    return gaussian_blur(img, sigma)


def apply_tip_change(img: Image, start_row: int, sigma: float, offset: float | None = None) -> Image:
    if not 0 <= start_row < img.height:
        raise ValueError(f"start_row {start_row} outside image of height {img.height}")
    out = np.array(img.pixels)
    out[start_row:] = _blur_array(img.pixels, sigma)[start_row:]
    if offset is not None:
        out[start_row] += offset
    return Image(out, NormState.RAW)


def segment_profile(seg: dict) -> np.ndarray:
    n = int(seg["length"])
    j = np.arange(n, dtype=np.float64)
    kind = seg["kind"]
    if kind == "constant":
        prof = np.full(n, seg["value"])
    elif kind == "lognormal":
        x = j + 1.0
        mu, s = seg["mu"], seg["sigma"]
        pdf = np.exp(-((np.log(x) - mu) ** 2) / (2.0 * s * s)) / (x * s * math.sqrt(2.0 * math.pi))
        prof = pdf * (seg["peak"] / pdf.max()) if n else pdf
    elif kind == "sine":
        prof = seg["amplitude"] * np.sin(2.0 * np.pi * j / seg["period"] + seg["phase"])
    else:
        raise ValueError(f"unknown scan-line perturbation {kind!r}")
    return seg["sign"] * prof


def apply_scanline_segments(img: Image, segments) -> Image:
    out = np.array(img.pixels)
    for seg in segments:
        n = int(seg["length"])
        if n:
            out[seg["row"], seg["start"]:seg["start"] + n] += segment_profile(seg)
    return Image(out, NormState.RAW)


def sample_scanline_segments(shape, rng, cfg: DegradeConfig | None = None) -> list:
    cfg = cfg or DegradeConfig()
    height, width = shape
    lo, hi = cfg.scanline_rows
    m = min(int(rng.integers(lo, hi + 1)), height)
    rows = rng.choice(height, size=m, replace=False)
    max_len = cfg.scanline_max_frac * width
    segments = []
    for row in rows:
        length = min(int(rng.uniform(0.0, max_len)), width)
        start = int(rng.integers(0, width - length + 1))
        kind = SCANLINE_KINDS[int(rng.choice(3, p=cfg.scanline_type_probs))]
        seg = {"row": int(row), "start": start, "length": length, "kind": kind}
        if kind == "constant":
            seg["value"] = float(rng.uniform(*cfg.scanline_constant))
        elif kind == "lognormal":
            seg["mu"] = float(rng.uniform(*cfg.lognorm_mu))
            seg["sigma"] = float(rng.uniform(*cfg.lognorm_sigma))
            seg["peak"] = float(rng.uniform(*cfg.lognorm_peak))
        else:
            seg["amplitude"] = float(rng.uniform(*cfg.sine_amplitude))
            seg["period"] = float(rng.uniform(*cfg.sine_period))
            seg["phase"] = float(rng.uniform(0.0, 2.0 * np.pi))
        seg["sign"] = 1 if rng.random() < 0.5 else -1
        segments.append(seg)
    return segments


def apply_scanline_noise(img: Image, rng=None, cfg: DegradeConfig | None = None) -> Image:
    rng = np.random.default_rng(rng)
    return apply_scanline_segments(img, sample_scanline_segments(img.shape, rng, cfg))


def sample_tip_kernel(rng, cfg: DegradeConfig) -> dict:
    kind = KERNEL_KINDS[int(rng.choice(3, p=cfg.tip_kernel_probs))]
    if kind == "gaussian":
        return {"kind": kind, "sigma": float(rng.uniform(*cfg.tip_gauss_sigma))}
    if kind == "median":
        drawn = int(rng.integers(1, cfg.tip_median_max + 1))
        return {"kind": kind, "k_drawn": drawn, "k": drawn if drawn % 2 else drawn + 1}
    size = int(rng.choice(cfg.tip_random_sizes))
    while True:
        w = rng.uniform(*cfg.tip_random_range, size=(size, size))
        total = w.sum()
        if abs(total) > 0.1:
            break
    return {"kind": kind, "size": size, "weights": (w / total).tolist()}


def sample_multi_tip(rng, cfg: DegradeConfig | None = None) -> MultiTipParams:
    cfg = cfg or DegradeConfig()
    n_tips = int(rng.choice([2, 3, 4], p=cfg.tip_count_probs))
    copies = []
    for _ in range(n_tips - 1):
        copies.append(
            TipCopy(
                amplitude=float(rng.uniform(*cfg.tip_amplitude)),
                c=float(rng.uniform(*cfg.tip_c)),
                d=float(rng.uniform(*cfg.tip_d)),
                dx=int(round(rng.uniform(*cfg.tip_offset))),
                dy=int(round(rng.uniform(*cfg.tip_offset))),
                kernel=sample_tip_kernel(rng, cfg),
            )
        )
    return MultiTipParams(n_tips, copies)


# --- whole pipeline -------------------------------------------------------------


def sample_trace(shape, task: str, seed: int, cfg: DegradeConfig | None = None) -> DegradationTrace:
    """Draw every random decision for one sample of a ``shape`` pristine image."""
    cfg = cfg or DegradeConfig()
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    rng = np.random.default_rng(seed)
    size = cfg.crop
    turns = int(rng.integers(4))
    rh, rw = (shape[0], shape[1]) if turns % 2 == 0 else (shape[1], shape[0])
    if rh < size or rw < size:
        raise ValueError(f"{shape[0]}x{shape[1]} image is smaller than the {size}px crop")

    recs = [StepRecord("rotate", True, {"turns": turns})]

    fired = bool(rng.random() < cfg.multitip_p)
    recs.append(StepRecord("multitip", fired, sample_multi_tip(rng, cfg).to_dict() if fired else {}))

    fired = bool(rng.random() < cfg.misalign_p)
    params = {}
    if fired:
        shifts = np.rint(rng.normal(0.0, cfg.misalign_sigma, size=rh)).astype(np.int64)
        params = {"sigma": cfg.misalign_sigma, "shifts": shifts.tolist()}
    recs.append(StepRecord("misalign", fired, params))

    top = int(rng.integers(0, rh - size + 1))
    left = int(rng.integers(0, rw - size + 1))
    recs.append(StepRecord("crop", True, {"top": top, "left": left, "size": size}))

    fired = bool(rng.random() < cfg.blunt_p)
    recs.append(StepRecord("blunt", fired, {"sigma": float(rng.uniform(*cfg.blunt_sigma))} if fired else {}))

    fired = bool(rng.random() < cfg.tipchange_p)
    params = {}
    if fired:
        params = {"start_row": int(rng.integers(0, size)), "sigma": float(rng.uniform(*cfg.tipchange_sigma))}
        offset = None
        if rng.random() < cfg.tipchange_offset_p:
            sign = 1.0 if rng.random() < 0.5 else -1.0
            offset = sign * float(rng.uniform(*cfg.tipchange_offset))
        params["offset"] = offset
    recs.append(StepRecord("tipchange", fired, params))

    factor = TASK_FACTOR[task]
    recs.append(StepRecord("resample", factor is not None, {"factor": factor} if factor else {}))

    fired = bool(rng.random() < cfg.scanline_p)
    segs = sample_scanline_segments((size, size), rng, cfg) if fired else []
    recs.append(StepRecord("scanlinenoise", fired, {"segments": segs} if fired else {}))

    recs.append(StepRecord("normalize", True, {"range": [-1, 1]}))
    return DegradationTrace(int(seed), task, recs)


def apply_trace(pristine: Image, trace: DegradationTrace) -> tuple[Image, Image]:
    """Render (ground_truth, degraded), both normalised to [-1, 1]."""
    x = rotate_quarter(normalize_unit(pristine), trace.record("rotate").params["turns"])
    c = trace.record("crop").params
    window = (c["top"], c["left"], c["size"], c["size"])
    ground_truth = normalize_sym(crop(x, *window))

    rec = trace.record("multitip")
    if rec.fired:
        x = apply_multi_tip(x, MultiTipParams.from_dict(rec.params))
    rec = trace.record("misalign")
    if rec.fired:
        x = shift_rows(x, rec.params["shifts"])
    x = crop(x, *window)
    rec = trace.record("blunt")
    if rec.fired:
        x = apply_blunt_tip(x, rec.params["sigma"])
    rec = trace.record("tipchange")
    if rec.fired:
        x = apply_tip_change(x, rec.params["start_row"], rec.params["sigma"], rec.params["offset"])
    rec = trace.record("resample")
    if rec.fired:
        f = rec.params["factor"]
        x = resample_y(resample_y(x, f, "down"), f, "up_nearest")
    rec = trace.record("scanlinenoise")
    if rec.fired:
        x = apply_scanline_segments(x, rec.params["segments"])
    return ground_truth, normalize_sym(x)


def degrade_sample(pristine: Image, task: str, seed: int, cfg: DegradeConfig | None = None) -> SampleRecord:
    trace = sample_trace(pristine.shape, task, seed, cfg)
    gt, degraded = apply_trace(pristine, trace)
    return SampleRecord(gt, degraded, trace, task)


def replay(pristine: Image, trace: DegradationTrace) -> SampleRecord:
    gt, degraded = apply_trace(pristine, trace)
    return SampleRecord(gt, degraded, trace, trace.task)
