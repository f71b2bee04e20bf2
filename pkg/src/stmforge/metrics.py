"""Reference metrics (PSNR, SSIM) and kernel two-sample distances (MMD^2, KID, CMMD).

PSNR and SSIM are evaluated after mapping both images to [0, 1] (``MAX = 1``).
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imagecore import Image, to_unit

SSIM_K1, SSIM_K2 = 0.01, 0.03
SSIM_WIN, SSIM_SIGMA = 11, 1.5
CMMD_SIGMA = 10.0


def _unit_pair(a, b):
    a, b = to_unit(a).pixels, to_unit(b).pixels
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: Image, b: Image, max_value: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    x, y = _unit_pair(a, b)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_value ** 2 / mse)


def _ssim_formula(mu_a, mu_b, var_a, var_b, cov, c1, c2):
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))


def ssim_window() -> np.ndarray:
    r = SSIM_WIN // 2
    g = np.exp(-0.5 * (np.arange(-r, r + 1) / SSIM_SIGMA) ** 2)
    g /= g.sum()
    return g


def ssim(a: Image, b: Image, mode: str = "windowed", data_range: float = 1.0) -> float:
    """Structural similarity.

    ``global`` evaluates the index once over the whole image; ``windowed`` averages
    it over every fully contained 11x11 Gaussian (sigma 1.5) window.
    """
    x, y = _unit_pair(a, b)
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    if mode == "global":
        mu_a, mu_b = x.mean(), y.mean()
        cov = np.mean((x - mu_a) * (y - mu_b))
        return float(_ssim_formula(mu_a, mu_b, x.var(), y.var(), cov, c1, c2))
    if mode != "windowed":
        raise ValueError(f"unknown SSIM mode {mode!r}")
    if min(x.shape) < SSIM_WIN:
        raise ValueError(f"windowed SSIM needs images at least {SSIM_WIN}px on a side")
    g = ssim_window()
    r = SSIM_WIN // 2

    def smooth(z):
        z = ndimage.correlate1d(z, g, axis=0, mode="nearest")
        z = ndimage.correlate1d(z, g, axis=1, mode="nearest")
        return z[r:-r, r:-r]

    mu_a, mu_b = smooth(x), smooth(y)
    var_a = smooth(x * x) - mu_a ** 2
    var_b = smooth(y * y) - mu_b ** 2
    cov = smooth(x * y) - mu_a * mu_b
    return float(np.mean(_ssim_formula(mu_a, mu_b, var_a, var_b, cov, c1, c2)))


# --- kernel two-sample distances ------------------------------------------------


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    vectors: np.ndarray
    provider_id: str = "unknown"

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vectors, dtype=np.float64))
        if not np.all(np.isfinite(v)):
            raise ValueError("embeddings must be finite")
        object.__setattr__(self, "vectors", v)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]


def _vectors(X):
    return X.vectors if isinstance(X, EmbeddingSet) else np.atleast_2d(np.asarray(X, dtype=np.float64))


def polynomial_kernel(A, B):
    d = A.shape[1]
    return (A @ B.T / d + 1.0) ** 3


def gaussian_kernel(sigma: float = CMMD_SIGMA):
    def k(A, B):
        sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
        return np.exp(-np.maximum(sq, 0.0) / sigma ** 2)

    return k


def linear_kernel(A, B):
    return A @ B.T


def mmd2(X, Y, kernel, estimator: str = "unbiased") -> float:
    """Squared maximum mean discrepancy between two embedding sets."""
    A, B = _vectors(X), _vectors(Y)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"embedding dims differ: {A.shape[1]} vs {B.shape[1]}")
    kxx, kyy, kxy = kernel(A, A), kernel(B, B), kernel(A, B)
    m, n = len(A), len(B)
    if estimator == "biased":
        return float(kxx.mean() + kyy.mean() - 2.0 * kxy.mean())
    if estimator != "unbiased":
        raise ValueError(f"unknown estimator {estimator!r}")
    if m < 2 or n < 2:
        raise ValueError("unbiased MMD^2 needs at least 2 samples per set")
    xx = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    yy = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    return float(xx + yy - 2.0 * kxy.mean())


def kid(X, Y, estimator: str = "unbiased", block_size: int | None = None, seed: int = 0) -> float:
    """MMD^2 under the cubic polynomial kernel ``(a.b / d + 1)^3``.

    With ``block_size`` the unbiased estimate is averaged over disjoint random blocks.
    """
    if block_size is None:
        return mmd2(X, Y, polynomial_kernel, estimator)
    A, B = _vectors(X), _vectors(Y)
    rng = np.random.default_rng(seed)
    pa, pb = rng.permutation(len(A)), rng.permutation(len(B))
    n_blocks = min(len(A), len(B)) // block_size
    if n_blocks < 1:
        raise ValueError(f"block_size {block_size} exceeds set sizes")
    vals = [
        mmd2(A[pa[i * block_size:(i + 1) * block_size]], B[pb[i * block_size:(i + 1) * block_size]],
             polynomial_kernel, estimator)
        for i in range(n_blocks)
    ]
    return float(np.mean(vals))


def cmmd(X, Y, sigma: float = CMMD_SIGMA, estimator: str = "biased") -> float:
    """MMD^2 under the Gaussian kernel ``exp(-|a - b|^2 / sigma^2)``."""
    return mmd2(X, Y, gaussian_kernel(sigma), estimator)


# --- embedding providers --------------------------------------------------------


class RandomProjectionEmbedder:
    """Built-in embedder: 8x8 grid of mean-pooled patches, randomly projected to 64 features.

    For self-contained comparisons only; it carries no semantic meaning.
    """

    grid = 8

    def __init__(self, d: int = 64, seed: int = 20251029):
        self.d = d
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.projection = rng.standard_normal((self.grid * self.grid, d)) / self.grid
        self.id = f"randproj-{d}-{seed}"

    def pooled(self, img: Image) -> np.ndarray:
        px = to_unit(img).pixels
        h, w = px.shape
        g = self.grid
        if h < g or w < g:
            raise ValueError(f"image must be at least {g}x{g}")
        px = px[: h - h % g, : w - w % g]
        return px.reshape(g, px.shape[0] // g, g, px.shape[1] // g).mean(axis=(1, 3)).ravel()

    def embed(self, img: Image) -> np.ndarray:
        return self.pooled(img) @ self.projection

    def embed_all(self, images) -> EmbeddingSet:
        return EmbeddingSet(np.stack([self.embed(im) for im in images]), self.id)


_STME = struct.Struct("<4sII")


def write_embeddings(path, emb: EmbeddingSet) -> None:
    v = emb.vectors.astype("<f4")
    Path(path).write_bytes(_STME.pack(b"STME", v.shape[0], v.shape[1]) + v.tobytes())


def read_embeddings(path) -> EmbeddingSet:
    data = Path(path).read_bytes()
    magic, n, d = _STME.unpack_from(data, 0)
    if magic != b"STME":
        raise ValueError(f"bad STME magic {magic!r}")
    v = np.frombuffer(data, dtype="<f4", count=n * d, offset=_STME.size).reshape(n, d)
    return EmbeddingSet(v.astype(np.float64), f"file:{Path(path).name}")


class FileEmbeddings:
    """Provider backed by precomputed vectors, returned in file order."""

    def __init__(self, path):
        self.set = read_embeddings(path)
        self.id = self.set.provider_id
        self.d = self.set.d

    def embed_all(self, images=None) -> EmbeddingSet:
        if images is not None and len(images) != self.set.n:
            raise ValueError(f"{len(images)} images but {self.set.n} stored embeddings")
        return self.set


# --- aggregation ----------------------------------------------------------------


@dataclass
class PairReport:
    rows: list = field(default_factory=list)

    def values(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.rows], dtype=np.float64)

    @property
    def summary(self) -> dict:
        out = {}
        for key in ("psnr", "ssim"):
            v = self.values(key)
            out[f"{key}_mean"] = float(np.mean(v))
            out[f"{key}_median"] = float(np.median(v))
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.DictWriter(f, fieldnames=["name", "psnr", "ssim"])
            w.writeheader()
            for r in self.rows:
                w.writerow({"name": r["name"], "psnr": repr(r["psnr"]), "ssim": repr(r["ssim"])})


def evaluate_pairs(pairs, names=None, ssim_mode: str = "windowed") -> PairReport:
    """Per-pair PSNR and SSIM plus mean/median summary over ``[(gt, pred)]``."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no image pairs to evaluate")
    names = names or [str(i) for i in range(len(pairs))]
    rows = [
        {"name": n, "psnr": psnr(g, p), "ssim": ssim(g, p, ssim_mode)}
        for n, (g, p) in zip(names, pairs)
    ]
    return PairReport(rows)
