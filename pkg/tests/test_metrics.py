import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stmforge.imagecore import Image, NormState
from stmforge.metrics import (
    EmbeddingSet,
    FileEmbeddings,
    RandomProjectionEmbedder,
    cmmd,
    evaluate_pairs,
    gaussian_kernel,
    kid,
    linear_kernel,
    mmd2,
    polynomial_kernel,
    psnr,
    read_embeddings,
    ssim,
    write_embeddings,
)


def unit(px):
    return Image(np.asarray(px, dtype=float), NormState.UNIT)


def rand_unit(shape, seed):
    return unit(np.random.default_rng(seed).random(shape))


# --- PSNR ---------------------------------------------------------------------------


def test_psnr_examples():
    a = unit(np.zeros((10, 10)))
    b = unit(np.full((10, 10), 0.1))
    assert abs(psnr(a, b) - 20.0) < 1e-12
    assert psnr(a, a) == math.inf
    x, y = rand_unit((9, 7), 1), rand_unit((9, 7), 2)
    mse = sum((x.pixels[i, j] - y.pixels[i, j]) ** 2 for i in range(9) for j in range(7)) / 63
    assert abs(psnr(x, y) - 10 * math.log10(1 / mse)) < 1e-9
    with pytest.raises(ValueError):
        psnr(x, rand_unit((9, 8), 3))


def test_psnr_sym_images_use_unit_range():
    a = Image(np.zeros((4, 4)), NormState.SYM)
    b = Image(np.full((4, 4), 0.2), NormState.SYM)
    assert abs(psnr(a, b) - 20.0) < 1e-12


# --- SSIM ---------------------------------------------------------------------------


def test_ssim_identical():
    x = rand_unit((24, 24), 4)
    assert ssim(x, x, "global") == pytest.approx(1.0, abs=1e-12)
    assert ssim(x, x, "windowed") == pytest.approx(1.0, abs=1e-12)


def test_ssim_global_constant_pair():
    val = ssim(unit(np.zeros((8, 8))), unit(np.ones((8, 8))), "global")
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    assert abs(val - c1 * c2 / ((1 + c1) * c2)) < 1e-15
    assert abs(val - 1e-4 / 1.0001) < 1e-15


def naive_windowed_ssim(x, y):
    r = 5
    g = np.exp(-0.5 * (np.arange(-r, r + 1) / 1.5) ** 2)
    w = np.outer(g, g)
    w /= w.sum()
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    vals = []
    for i in range(r, x.shape[0] - r):
        for j in range(r, x.shape[1] - r):
            px = x[i - r:i + r + 1, j - r:j + r + 1]
            py = y[i - r:i + r + 1, j - r:j + r + 1]
            ma, mb = (w * px).sum(), (w * py).sum()
            va = (w * (px - ma) ** 2).sum()
            vb = (w * (py - mb) ** 2).sum()
            cv = (w * (px - ma) * (py - mb)).sum()
            vals.append((2 * ma * mb + c1) * (2 * cv + c2) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def test_ssim_windowed_oracle():
    x = rand_unit((20, 23), 5)
    y = unit(np.clip(x.pixels + np.random.default_rng(6).normal(0, 0.1, x.shape), 0, 1))
    assert abs(ssim(x, y) - naive_windowed_ssim(x.pixels, y.pixels)) < 1e-6


def test_ssim_errors():
    with pytest.raises(ValueError):
        ssim(rand_unit((20, 20), 0), rand_unit((20, 20), 1), "bogus")
    with pytest.raises(ValueError):
        ssim(rand_unit((8, 8), 0), rand_unit((8, 8), 1), "windowed")


@given(st.integers(0, 2**16), st.sampled_from(["global", "windowed"]))
@settings(max_examples=25, deadline=None)
def test_reference_metrics_symmetric(seed, mode):
    a, b = rand_unit((16, 16), seed), rand_unit((16, 16), seed + 1)
    assert psnr(a, b) == pytest.approx(psnr(b, a), abs=1e-12)
    s = ssim(a, b, mode)
    assert s == pytest.approx(ssim(b, a, mode), abs=1e-12)
    assert -1 <= s <= 1


# --- MMD family ------------------------------------------------------------------------


def naive_mmd2(A, B, k, biased):
    m, n = len(A), len(B)
    if biased:
        xx = sum(k(A[i], A[j]) for i in range(m) for j in range(m)) / m ** 2
        yy = sum(k(B[i], B[j]) for i in range(n) for j in range(n)) / n ** 2
    else:
        xx = sum(k(A[i], A[j]) for i in range(m) for j in range(m) if i != j) / (m * (m - 1))
        yy = sum(k(B[i], B[j]) for i in range(n) for j in range(n) if i != j) / (n * (n - 1))
    xy = sum(k(A[i], B[j]) for i in range(m) for j in range(n)) / (m * n)
    return xx + yy - 2 * xy


def poly_scalar(a, b):
    return (sum(u * v for u, v in zip(a, b)) / len(a) + 1) ** 3


def gauss_scalar(a, b, sigma=10.0):
    return math.exp(-sum((u - v) ** 2 for u, v in zip(a, b)) / sigma ** 2)


def sets(seed, m=12, n=9, d=5):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(m, d)), rng.normal(0.3, 1.2, size=(n, d))


def test_mmd_identical_biased_zero():
    A, _ = sets(0)
    for k in (linear_kernel, polynomial_kernel, gaussian_kernel(3.0)):
        assert abs(mmd2(A, A, k, "biased")) < 1e-9


def test_mmd_single_points_linear():
    x, y = np.array([[1.0, 2.0, -1.0]]), np.array([[0.5, -1.0, 2.0]])
    assert abs(mmd2(x, y, linear_kernel, "biased") - np.sum((x - y) ** 2)) < 1e-12
    with pytest.raises(ValueError):
        mmd2(x, y, linear_kernel, "unbiased")
    with pytest.raises(ValueError):
        mmd2(x, np.ones((1, 2)), linear_kernel, "biased")


@pytest.mark.parametrize("biased", [True, False])
def test_kid_and_cmmd_oracles(biased):
    A, B = sets(1)
    est = "biased" if biased else "unbiased"
    assert abs(kid(A, B, est) - naive_mmd2(A, B, poly_scalar, biased)) < 1e-9
    assert abs(cmmd(A, B, estimator=est) - naive_mmd2(A, B, gauss_scalar, biased)) < 1e-9


def test_kid_examples():
    z = np.zeros((6, 4))
    assert abs(kid(z, np.zeros((5, 4)))) < 1e-12
    A, _ = sets(2)
    assert abs(kid(A, A, "biased")) < 1e-9
    A, B = sets(3, 40, 40)
    blocked = kid(A, B, block_size=10, seed=1)
    assert np.isfinite(blocked)
    with pytest.raises(ValueError):
        kid(A, B, block_size=100)


def test_cmmd_two_points():
    val = cmmd(np.array([[0.0]]), np.array([[10.0]]))
    assert abs(val - 2 * (1 - math.exp(-1))) < 1e-12
    assert abs(val - 1.2642) < 1e-4
    A, _ = sets(4)
    assert abs(cmmd(A, A)) < 1e-9


@given(st.integers(0, 2**16))
@settings(max_examples=20, deadline=None)
def test_mmd_properties(seed):
    A, B = sets(seed, 8, 6, 4)
    for est in ("biased", "unbiased"):
        assert mmd2(A, B, polynomial_kernel, est) == pytest.approx(mmd2(B, A, polynomial_kernel, est), abs=1e-9)
    assert mmd2(A, B, gaussian_kernel(2.0), "biased") >= -1e-12
    q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(4, 4)))
    assert cmmd(A @ q, B @ q) == pytest.approx(cmmd(A, B), abs=1e-9)


# --- embeddings & reports ---------------------------------------------------------------


def test_builtin_embedder_deterministic():
    imgs = [rand_unit((32, 32), s) for s in range(3)]
    e1 = RandomProjectionEmbedder().embed_all(imgs)
    e2 = RandomProjectionEmbedder().embed_all(imgs)
    assert e1.vectors.shape == (3, 64)
    np.testing.assert_array_equal(e1.vectors, e2.vectors)
    pooled = RandomProjectionEmbedder().pooled(imgs[0])
    assert abs(pooled[0] - imgs[0].pixels[:4, :4].mean()) < 1e-15


def test_stme_roundtrip(tmp_path):
    emb = EmbeddingSet(np.random.default_rng(0).normal(size=(5, 7)), "x")
    path = tmp_path / "e.stme"
    write_embeddings(path, emb)
    raw = path.read_bytes()
    assert raw[:4] == b"STME" and len(raw) == 12 + 5 * 7 * 4
    back = read_embeddings(path)
    np.testing.assert_array_equal(back.vectors, emb.vectors.astype(np.float32))
    assert FileEmbeddings(path).embed_all().n == 5
    with pytest.raises(ValueError):
        EmbeddingSet(np.array([[np.nan]]))


def test_evaluate_pairs(tmp_path):
    a, b = rand_unit((16, 16), 0), rand_unit((16, 16), 1)
    single = evaluate_pairs([(a, b)])
    assert single.summary["psnr_mean"] == psnr(a, b)
    ident = evaluate_pairs([(a, a), (b, b)], ssim_mode="global")
    assert ident.summary["ssim_mean"] == pytest.approx(1.0)
    pairs = [(rand_unit((16, 16), s), rand_unit((16, 16), s + 100)) for s in range(100)]
    rep = evaluate_pairs(pairs)
    assert rep.summary["psnr_mean"] == pytest.approx(np.mean([psnr(g, p) for g, p in pairs]), abs=1e-12)
    assert rep.summary["ssim_mean"] == pytest.approx(np.mean([ssim(g, p) for g, p in pairs]), abs=1e-12)
    rep.write_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "name,psnr,ssim"
    with pytest.raises(ValueError):
        evaluate_pairs([])
