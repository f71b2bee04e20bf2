"""Mixed and targeted dataset generation with replayable manifests."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .degrade import (
    DegradationTrace,
    DegradeConfig,
    SampleRecord,
    apply_trace,
    degrade_sample,
    targeted_config,
)
from .imagecore import Image, load_image, synth_lattice

SPLITS = ("train", "val", "test")
DEFAULT_COUNTS = {"train": 20000, "val": 2000, "test": 2000}
PRISTINE_SPLIT = (36, 12, 6)
TARGETED_N = 1000
SAMPLE_SUFFIX = ".stmp"

_SPLIT_CODES = {"train": 0, "val": 1, "test": 2, "targeted": 3}


def sample_seeds(seed: int, split: str, index: int) -> tuple[int, int]:
    """(source-pick seed, trace seed) for one sample; independent of worker layout."""
    ss = np.random.SeedSequence(seed, spawn_key=(_SPLIT_CODES[split], index))
    pick, trace = ss.generate_state(2, dtype=np.uint64)
    return int(pick), int(trace)


def split_pristine(images, sizes=PRISTINE_SPLIT) -> dict:
    """Disjoint train/val/test subsets; sizes are rescaled when the pool is not 54 images."""
    n = len(images)
    total = sum(sizes)
    if n < 3:
        raise ValueError("need at least 3 pristine images to split three ways")
    n_val = max(1, round(n * sizes[1] / total))
    n_test = max(1, round(n * sizes[2] / total))
    n_train = n - n_val - n_test
    if n_train < 1:
        raise ValueError(f"cannot split {n} images into {sizes}")
    return {
        "train": list(images[:n_train]),
        "val": list(images[n_train:n_train + n_val]),
        "test": list(images[n_train + n_val:]),
    }


def toy_pristine_set(n: int = 54, size: int = 512, seed: int = 0) -> list:
    """Stand-in pristine scans: synthetic dimer-row lattices of varying pitch and defect load."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        out.append(
            synth_lattice(
                size,
                size,
                period=float(rng.uniform(6.0, 12.0)),
                orientation="horizontal" if rng.random() < 0.5 else "vertical",
                defect_density=float(rng.uniform(0.0, 0.004)),
                seed=int(rng.integers(2**63)),
            )
        )
    return out


def load_pristine_dir(path) -> list:
    files = sorted(p for p in Path(path).iterdir() if p.suffix.lower() in (".stmi", ".pgm"))
    if not files:
        raise FileNotFoundError(f"no .stmi or .pgm images in {path}")
    return [load_image(p) for p in files]


_WORKER: dict = {}


def _init_worker(state):
    _WORKER.clear()
    _WORKER.update(state)


def _make_one(index: int):
    w = _WORKER
    pick_seed, trace_seed = sample_seeds(w["seed"], w["seed_split"], index)
    source = int(np.random.default_rng(pick_seed).integers(len(w["images"])))
    rec = degrade_sample(w["images"][source], w["task"], trace_seed, w["cfg"])
    return index, source, rec


def _run(state: dict, count: int, jobs: int) -> list:
    if jobs <= 1 or count < 2:
        _init_worker(state)
        return [_make_one(i) for i in range(count)]
    chunk = max(1, count // (4 * jobs))
    with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(state,)) as ex:
        return list(ex.map(_make_one, range(count), chunksize=chunk))


def generate_split(images, task: str, count: int, seed: int, split: str,
                   cfg: DegradeConfig | None = None, jobs: int = 1, seed_split: str | None = None):
    """Generate ``count`` samples; returns ``[(index, source_index, SampleRecord)]`` in index order."""
    if not images:
        raise ValueError(f"empty pristine subset for split {split!r}")
    state = {
        "images": list(images),
        "task": task,
        "seed": int(seed),
        "seed_split": seed_split or split,
        "cfg": cfg or DegradeConfig(),
    }
    return _run(state, count, jobs)


def _entry(split: str, index: int, source: int, rec: SampleRecord) -> dict:
    return {
        "index": index,
        "file": f"{split}/{index:06d}{SAMPLE_SUFFIX}",
        "source_id": f"{split}/{source}",
        "trace": rec.trace.to_dict(),
    }


def _write_split(out_dir: Path, manifest: dict, samples) -> None:
    for (index, source, rec), entry in zip(samples, manifest["entries"]):
        path = out_dir / entry["file"]
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(rec.to_bytes())
    name = f"manifest_{manifest['split']}.json"
    (out_dir / name).write_text(json.dumps(manifest, indent=1), encoding="utf-8")


def generate_dataset(pristine: dict, task: str, counts=None, seed: int = 0, out_dir=None,
                     cfg: DegradeConfig | None = None, jobs: int = 1) -> dict:
    """Build train/val/test splits, each drawing sources only from its own pristine subset.

    Returns ``{split: manifest}``; sample files and ``manifest_<split>.json`` are
    written under ``out_dir`` when given.
    """
    counts = dict(DEFAULT_COUNTS if counts is None else counts)
    cfg = cfg or DegradeConfig()
    manifests = {}
    for split in SPLITS:
        n = int(counts.get(split, 0))
        subset = pristine.get(split, [])
        if not subset:
            raise ValueError(f"empty pristine subset for split {split!r}")
        samples = generate_split(subset, task, n, seed, split, cfg, jobs)
        manifest = {
            "task": task,
            "seed": int(seed),
            "split": split,
            "config": cfg.to_dict(),
            "entries": [_entry(split, i, s, r) for i, s, r in samples],
        }
        if out_dir is not None:
            _write_split(Path(out_dir), manifest, samples)
        manifests[split] = manifest
    return manifests


def generate_targeted_set(pristine, degradation: str, task: str, n: int = TARGETED_N, seed: int = 0,
                          out_dir=None, cfg: DegradeConfig | None = None, jobs: int = 1):
    """Test set in which only ``degradation`` fires (plus rotate/crop/normalize and SR resampling).

    Returns ``(manifest, records)``.
    """
    cfg = targeted_config(degradation, task, cfg)
    split = f"targeted-{degradation}"
    samples = generate_split(pristine, task, n, seed, split, cfg, jobs, seed_split="targeted")
    manifest = {
        "task": task,
        "seed": int(seed),
        "split": split,
        "degradation": degradation,
        "config": cfg.to_dict(),
        "entries": [_entry(split, i, s, r) for i, s, r in samples],
    }
    if out_dir is not None:
        _write_split(Path(out_dir), manifest, samples)
    return manifest, [r for _, _, r in samples]


def replay_entry(entry: dict, images) -> SampleRecord:
    """Re-render a manifest entry from its stored trace and source image list."""
    trace = DegradationTrace.from_dict(entry["trace"])
    source = images[int(entry["source_id"].rsplit("/", 1)[1])]
    gt, degraded = apply_trace(source, trace)
    return SampleRecord(gt, degraded, trace, trace.task)


def regenerate_entry(entry: dict, images, cfg: DegradeConfig) -> SampleRecord:
    """Re-draw a sample from its trace seed alone (no stored parameters used)."""
    source = images[int(entry["source_id"].rsplit("/", 1)[1])]
    return degrade_sample(source, entry["trace"]["task"], entry["trace"]["seed"], cfg)


def load_split(out_dir, split: str = "train", limit: int | None = None) -> list:
    """Read ``[(ground_truth, degraded)]`` image pairs of one split written by :func:`generate_dataset`."""
    from .degrade import read_sample

    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / f"manifest_{split}.json").read_text(encoding="utf-8"))
    entries = manifest["entries"][:limit] if limit else manifest["entries"]
    return [read_sample((out_dir / e["file"]).read_bytes()) for e in entries]


def pairs_from_records(records) -> list:
    return [(r.ground_truth, r.degraded) for r in records]


def as_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    gt = np.stack([g.pixels if isinstance(g, Image) else g for g, _ in pairs])
    deg = np.stack([d.pixels if isinstance(d, Image) else d for _, d in pairs])
    return gt, deg
