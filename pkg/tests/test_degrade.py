import json
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stmforge.dataset import (
    DEFAULT_COUNTS,
    TARGETED_N,
    generate_dataset,
    generate_targeted_set,
    load_split,
    regenerate_entry,
    replay_entry,
    sample_seeds,
    split_pristine,
)
from stmforge.degrade import (
    OPTIONAL_STEPS,
    STEPS,
    DegradationTrace,
    DegradeConfig,
    MultiTipParams,
    TipCopy,
    apply_blunt_tip,
    apply_misalignment,
    apply_multi_tip,
    apply_scanline_noise,
    apply_scanline_segments,
    apply_tip_change,
    degrade_sample,
    read_sample,
    replay,
    sample_multi_tip,
    sample_scanline_segments,
    sample_trace,
    segment_profile,
    targeted_config,
)
from stmforge.imagecore import Image, NormState, gaussian_blur, normalize_sym, synth_lattice

OFF = DegradeConfig(multitip_p=0, misalign_p=0, blunt_p=0, tipchange_p=0, scanline_p=0)
IDENTITY = {"kind": "identity"}


def lattice(n=160, seed=0):
    return synth_lattice(n, n, period=8.0, orientation="horizontal", defect_density=0.005, seed=seed)


def binom_ok(count, n, p, k=3.0):
    return abs(count - n * p) <= k * math.sqrt(n * p * (1 - p))


# --- multi-tip -----------------------------------------------------------------


def test_multitip_flat_surface():
    p = MultiTipParams(2, [TipCopy(2.0, 6.0, 8.0, 3, 4, IDENTITY)])
    out = apply_multi_tip(Image(np.zeros((8, 8))), p)
    expected = 2 / (1 + math.exp(6))
    np.testing.assert_allclose(out.pixels, expected, rtol=1e-15)
    assert abs(expected - 0.004945) < 5e-7
    assert out.norm_state is NormState.RAW


def test_multitip_zero_amplitude_is_identity():
    img = lattice(32)
    copies = [TipCopy(0.0, 6.0, 8.0, 2, 5, {"kind": "gaussian", "sigma": 1.5}) for _ in range(3)]
    np.testing.assert_array_equal(apply_multi_tip(img, MultiTipParams(4, copies)).pixels, img.pixels)


def test_multitip_matches_scalar_loop():
    rng = np.random.default_rng(2)
    h = rng.random((16, 16))
    copies = [TipCopy(1.7, 6.2, 8.4, 3, 2, IDENTITY), TipCopy(2.2, 5.5, 9.1, 1, 7, IDENTITY)]
    out = apply_multi_tip(Image(h), MultiTipParams(3, copies)).pixels
    oracle = np.empty_like(h)
    for y in range(16):
        for x in range(16):
            v = h[y, x]
            for cp in copies:
                yy = min(max(y - cp.dy, 0), 15)
                xx = min(max(x - cp.dx, 0), 15)
                v += cp.amplitude / (1 + math.exp(cp.c - cp.d * h[yy, xx]))
            oracle[y, x] = v
    np.testing.assert_allclose(out, oracle, atol=1e-9)


def test_multitip_params_invariant():
    with pytest.raises(ValueError):
        MultiTipParams(3, [TipCopy(1, 5, 7, 1, 1, IDENTITY)])
    with pytest.raises(ValueError):
        MultiTipParams(1, [])


def test_multitip_sampling_ranges():
    rng = np.random.default_rng(0)
    kinds = Counter()
    for _ in range(3000):
        p = sample_multi_tip(rng)
        assert p.n_tips in (2, 3, 4) and len(p.copies) == p.n_tips - 1
        for cp in p.copies:
            assert 1 <= cp.amplitude <= 2.5 and 5 <= cp.c <= 9 and 7 <= cp.d <= 10
            assert 1 <= cp.dx <= 11 and 1 <= cp.dy <= 11
            kinds[cp.kernel["kind"]] += 1
            k = cp.kernel
            if k["kind"] == "gaussian":
                assert 1 <= k["sigma"] <= 3
            elif k["kind"] == "median":
                assert k["k"] % 2 == 1 and 1 <= k["k"] <= 9
            else:
                assert k["size"] in (5, 6)
                assert abs(np.sum(k["weights"]) - 1) < 1e-9
    total = sum(kinds.values())
    for kind, p in zip(("gaussian", "median", "random"), (0.3, 0.4, 0.3)):
        assert binom_ok(kinds[kind], total, p)


# --- misalignment -----------------------------------------------------------------


def test_misalignment_zero_sigma_identity():
    img = lattice(32)
    assert apply_misalignment(img, 1e-9, rng=0) == img


def test_misalignment_shift_histogram():
    n, w = 100_000, 41
    ramp = Image(np.tile(np.arange(w, dtype=float), (n, 1)))
    out = apply_misalignment(ramp, 0.8, rng=7).pixels
    shifts = (w // 2 - out[:, w // 2]).astype(int)
    counts = Counter(shifts.tolist())

    def phi(z):
        return 0.5 * (1 + math.erf(z / math.sqrt(2)))

    for k in range(-3, 4):
        p = phi((k + 0.5) / 0.8) - phi((k - 0.5) / 0.8)
        assert binom_ok(counts.get(k, 0), n, p), (k, counts.get(k, 0), n * p)


def test_misalignment_single_row_shift():
    stripes = np.tile((np.arange(16) % 4 < 2).astype(float), (4, 1))
    from stmforge.imagecore import shift_rows

    out = shift_rows(Image(stripes), [0, 2, 0, 0]).pixels
    np.testing.assert_array_equal(out[1, 2:], stripes[1, :-2])
    np.testing.assert_array_equal(out[[0, 2, 3]], stripes[[0, 2, 3]])


# --- blunt tip / tip change --------------------------------------------------------


def test_blunt_tip():
    const = Image(np.full((12, 12), 0.3))
    np.testing.assert_allclose(apply_blunt_tip(const, 0.3).pixels, 0.3, atol=1e-15)
    checker = Image((np.indices((16, 16)).sum(0) % 2).astype(float))
    assert apply_blunt_tip(checker, 0.6).pixels.var() < checker.pixels.var()
    img = lattice(32)
    assert apply_blunt_tip(img, 0.45).pixels.tobytes() == gaussian_blur(img, 0.45).pixels.tobytes()


def test_tip_change():
    img = lattice(32)
    whole = apply_tip_change(img, 0, 0.5)
    np.testing.assert_array_equal(whole.pixels, gaussian_blur(img, 0.5).pixels)
    last = apply_tip_change(img, 31, 0.5, offset=0.2)
    np.testing.assert_array_equal(last.pixels[:31], img.pixels[:31])
    blurred_last = gaussian_blur(img, 0.5).pixels[31]
    assert abs(last.pixels[31].mean() - blurred_last.mean() - 0.2) < 1e-12
    mid = apply_tip_change(img, 13, 0.4, offset=-0.1)
    assert mid.pixels[:13].tobytes() == img.pixels[:13].tobytes()
    with pytest.raises(ValueError):
        apply_tip_change(img, 32, 0.4)


# --- scan-line noise ---------------------------------------------------------------


def test_scanline_zero_length_identity():
    img = lattice(32)
    seg = {"row": 3, "start": 5, "length": 0, "kind": "constant", "value": 0.3, "sign": 1}
    np.testing.assert_array_equal(apply_scanline_segments(img, [seg]).pixels, img.pixels)


def test_scanline_constant_segment():
    img = Image(np.zeros((20, 64)))
    seg = {"row": 4, "start": 10, "length": 40, "kind": "constant", "value": 0.3, "sign": 1}
    out = apply_scanline_segments(img, [seg]).pixels
    expected = np.zeros((20, 64))
    expected[4, 10:50] = 0.3
    np.testing.assert_array_equal(out, expected)


def test_scanline_profiles():
    lg = {"length": 60, "kind": "lognormal", "mu": 1.5, "sigma": 0.7, "peak": 0.25, "sign": -1}
    prof = segment_profile(lg)
    assert abs(prof.min() + 0.25) < 1e-15
    mode = math.exp(1.5 - 0.7 ** 2)
    assert abs(int(np.argmin(prof)) + 1 - mode) <= 1
    sine = {"length": 64, "kind": "sine", "amplitude": 0.2, "period": 16.0, "phase": 0.0, "sign": 1}
    s = segment_profile(sine)
    np.testing.assert_allclose(s[:48], s[16:], atol=1e-12)
    assert abs(s.max() - 0.2) < 1e-12


def test_scanline_sampling_rules():
    rng = np.random.default_rng(3)
    kinds = Counter()
    signs = Counter()
    while sum(kinds.values()) < 10_000:
        segs = sample_scanline_segments((128, 128), rng)
        assert 25 <= len(segs) <= 35
        assert len({s["row"] for s in segs}) == len(segs)
        for s in segs:
            assert 0 <= s["length"] <= 102 and s["start"] + s["length"] <= 128
            kinds[s["kind"]] += 1
            signs[s["sign"]] += 1
            if s["kind"] == "constant":
                assert 0 <= s["value"] <= 0.4
            elif s["kind"] == "lognormal":
                assert 0.1 <= s["peak"] <= 0.4
    n = sum(kinds.values())
    for kind, p in zip(("constant", "lognormal", "sine"), (0.3, 0.45, 0.25)):
        assert binom_ok(kinds[kind], n, p)
    assert binom_ok(signs[1], n, 0.5)


def test_scanline_noise_touches_only_chosen_rows():
    img = Image(np.zeros((128, 128)))
    out = apply_scanline_noise(img, rng=4).pixels
    changed = np.flatnonzero(np.any(out != 0, axis=1))
    assert len(changed) <= 35


# --- full pipeline -------------------------------------------------------------------


def test_noop_pipeline():
    img = lattice()
    rec = degrade_sample(img, "restore", 5, OFF)
    assert rec.degraded == rec.ground_truth
    assert rec.ground_truth.shape == (128, 128)
    assert rec.ground_truth.norm_state is NormState.SYM


def test_sr4_noop_is_decimated_ground_truth():
    rec = degrade_sample(lattice(), "sr4", 6, OFF)
    gt = rec.ground_truth.pixels
    rep = np.repeat(gt[::4], 4, axis=0)
    np.testing.assert_allclose(rec.degraded.pixels, normalize_sym(Image(rep)).pixels, atol=0)
    assert rec.trace.fired("resample")


def test_sr_ground_truth_keeps_full_resolution():
    for task in ("sr2", "sr4"):
        gt = degrade_sample(lattice(), task, 8).ground_truth.pixels
        assert not np.array_equal(gt[0::2], gt[1::2])


def test_determinism_and_bytes():
    img = lattice()
    a = degrade_sample(img, "restore", 42)
    b = degrade_sample(img, "restore", 42)
    assert a.to_bytes() == b.to_bytes()
    gt, deg = read_sample(a.to_bytes())
    np.testing.assert_array_equal(gt.pixels, a.ground_truth.pixels.astype(np.float32))
    assert deg.norm_state is NormState.SYM


def test_small_image_rejected():
    with pytest.raises(ValueError):
        degrade_sample(lattice(100), "restore", 0)
    with pytest.raises(ValueError):
        degrade_sample(lattice(), "sr8", 0)


@given(st.integers(0, 2**32), st.sampled_from(["restore", "sr2", "sr4"]))
@settings(max_examples=15, deadline=None)
def test_replay_and_trace_order(seed, task):
    img = lattice(140, seed % 7)
    rec = degrade_sample(img, task, seed)
    assert [r.step for r in rec.trace.applied] == list(STEPS)
    assert rec.degraded.pixels.min() >= -1 and rec.degraded.pixels.max() <= 1
    trace = DegradationTrace.from_dict(json.loads(json.dumps(rec.trace.to_dict())))
    again = replay(img, trace)
    assert again.degraded.pixels.tobytes() == rec.degraded.pixels.tobytes()
    # ground truth is unaffected by any optional step
    clean = DegradationTrace(trace.seed, task, [
        r if r.step not in OPTIONAL_STEPS else type(r)(r.step, False, {}) for r in trace.applied
    ])
    assert replay(img, clean).ground_truth == rec.ground_truth


def test_firing_rate_calibration():
    n = 10_000
    fired = Counter()
    tips = Counter()
    for seed in range(n):
        tr = sample_trace((128, 128), "restore", seed)
        for step in OPTIONAL_STEPS:
            fired[step] += tr.fired(step)
        tips[tr.record("multitip").params["n_tips"]] += 1
    for step, p in (("misalign", 0.3), ("blunt", 0.6), ("tipchange", 0.6), ("scanlinenoise", 0.6)):
        assert binom_ok(fired[step], n, p), step
    assert fired["multitip"] == n
    for k, p in ((2, 0.5), (3, 0.3), (4, 0.2)):
        assert binom_ok(tips[k], n, p)


def test_config_roundtrip():
    cfg = DegradeConfig(misalign_p=0.5, scanline_rows=[20, 30])
    assert DegradeConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        DegradeConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        DegradeConfig(tip_count_probs=(0.5, 0.5, 0.5))


# --- datasets ----------------------------------------------------------------------------


@pytest.fixture(scope="module")
def sources():
    return [lattice(140, s) for s in range(6)]


def test_split_pristine_sizes(sources):
    pool = list(range(54))
    s = split_pristine(pool)
    assert [len(s[k]) for k in ("train", "val", "test")] == [36, 12, 6]
    assert set(s["train"]).isdisjoint(s["val"]) and set(s["val"]).isdisjoint(s["test"])
    with pytest.raises(ValueError):
        split_pristine([1, 2])


def test_default_counts():
    assert DEFAULT_COUNTS == {"train": 20000, "val": 2000, "test": 2000}
    assert sum(DEFAULT_COUNTS.values()) == 24000
    assert TARGETED_N == 1000


def test_small_dataset(tmp_path, sources):
    pristine = {"train": sources[:3], "val": sources[3:5], "test": sources[5:]}
    manifests = generate_dataset(pristine, "restore", {"train": 4, "val": 1, "test": 1}, seed=9, out_dir=tmp_path)
    files = sorted(p.relative_to(tmp_path).as_posix() for p in tmp_path.rglob("*.stmp"))
    assert len(files) == 6
    for split, m in manifests.items():
        on_disk = json.loads((tmp_path / f"manifest_{split}.json").read_text())
        assert on_disk == json.loads(json.dumps(m))
        for e in m["entries"]:
            src = int(e["source_id"].split("/")[1])
            assert e["source_id"].startswith(split + "/") and src < len(pristine[split])
            data = (tmp_path / e["file"]).read_bytes()
            assert replay_entry(e, pristine[split]).to_bytes() == data
            assert regenerate_entry(e, pristine[split], DegradeConfig()).to_bytes() == data
    assert len(load_split(tmp_path, "train")) == 4
    with pytest.raises(ValueError):
        generate_dataset({"train": sources, "val": [], "test": sources}, "restore", {"train": 1})


def test_dataset_independent_of_jobs(sources):
    pristine = {"train": sources[:3], "val": sources[3:5], "test": sources[5:]}
    counts = {"train": 6, "val": 2, "test": 2}
    one = generate_dataset(pristine, "sr2", counts, seed=1, jobs=1)
    two = generate_dataset(pristine, "sr2", counts, seed=1, jobs=2)
    assert one == two
    assert sample_seeds(1, "train", 0) != sample_seeds(1, "val", 0)


@pytest.mark.parametrize("deg", ["multitip", "misalign", "tipchange", "blunt", "scanline"])
def test_targeted_sets(sources, deg):
    step = "scanlinenoise" if deg == "scanline" else deg
    manifest, recs = generate_targeted_set(sources, deg, "restore", n=12, seed=3)
    assert len(manifest["entries"]) == 12
    for r in recs:
        for s in OPTIONAL_STEPS:
            assert r.trace.fired(s) == (s == step)
        assert not r.trace.fired("resample")


def test_targeted_blunt_is_blur_only(sources):
    _, recs = generate_targeted_set(sources, "blunt", "restore", n=4, seed=2)
    for r in recs:
        sigma = r.trace.record("blunt").params["sigma"]
        expected = normalize_sym(gaussian_blur(r.ground_truth, sigma))
        np.testing.assert_allclose(r.degraded.pixels, expected.pixels, atol=1e-12)


def test_targeted_lowres(sources):
    _, recs = generate_targeted_set(sources, "lowres_only", "sr2", n=3, seed=2)
    assert all(r.trace.fired("resample") and not any(r.trace.fired(s) for s in OPTIONAL_STEPS) for r in recs)
    with pytest.raises(ValueError):
        generate_targeted_set(sources, "lowres_only", "restore", n=3)
    with pytest.raises(ValueError):
        targeted_config("sandstorm", "restore")
