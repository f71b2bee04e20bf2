"""Image container and the pixel-level operations the degradation pipeline is built from.

All filters and shifts pad by edge replication. Images are immutable: every
operation returns a new :class:`Image`.
"""

from __future__ import annotations

import enum
import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO

import numpy as np
from scipy import ndimage


class NormState(str, enum.Enum):
    RAW = "raw"
    UNIT = "unit"
    SYM = "sym"


_NORM_CODES = {NormState.RAW: 0, NormState.UNIT: 1, NormState.SYM: 2}
_NORM_FROM_CODE = {v: k for k, v in _NORM_CODES.items()}


@dataclass(frozen=True, eq=False)
class Image:
    pixels: np.ndarray
    norm_state: NormState = NormState.RAW

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.float64)
        if px.ndim != 2:
            raise ValueError(f"image must be 2D, got shape {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValueError("image contains non-finite values")
        state = NormState(self.norm_state)
        if px.size:
            lo, hi = px.min(), px.max()
            if state is NormState.UNIT and (lo < 0.0 or hi > 1.0):
                raise ValueError(f"unit-norm image out of range [{lo}, {hi}]")
            if state is NormState.SYM and (lo < -1.0 or hi > 1.0):
                raise ValueError(f"symmetric-norm image out of range [{lo}, {hi}]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "norm_state", state)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def with_pixels(self, pixels: np.ndarray, norm_state: NormState | None = None) -> "Image":
        return Image(pixels, self.norm_state if norm_state is None else norm_state)

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.norm_state == other.norm_state and np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f"Image({self.height}x{self.width}, {self.norm_state.value})"


@dataclass(frozen=True, eq=False)
class Kernel:
    weights: np.ndarray
    anchor: tuple[int, int] | None = field(default=None)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 1:
            raise ValueError(f"kernel must be square and non-empty, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("kernel weights must be finite")
        n = w.shape[0]
        anchor = self.anchor
        if anchor is None:
            c = n // 2 if n % 2 else n // 2 - 1
            anchor = (c, c)
        anchor = (int(anchor[0]), int(anchor[1]))
        if not (0 <= anchor[0] < n and 0 <= anchor[1] < n):
            raise ValueError(f"anchor {anchor} outside {n}x{n} kernel")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "anchor", anchor)

    @property
    def size(self) -> int:
        return self.weights.shape[0]


def _as_image(img) -> Image:
    return img if isinstance(img, Image) else Image(img)


def _range(px: np.ndarray) -> tuple[float, float]:
    lo, hi = float(px.min()), float(px.max())
    if not hi > lo:
        raise ValueError("degenerate dynamic range: image is constant")
    return lo, hi


def normalize_unit(img: Image) -> Image:
    px = _as_image(img).pixels
    lo, hi = _range(px)
    out = (px - lo) / (hi - lo)
    return Image(np.clip(out, 0.0, 1.0), NormState.UNIT)


def normalize_sym(img: Image) -> Image:
    unit = normalize_unit(img).pixels
    return Image(np.clip(2.0 * unit - 1.0, -1.0, 1.0), NormState.SYM)


def to_unit(img: Image) -> Image:
    """Map to [0, 1] for reference metrics: fixed affine for normalised images, min-max for raw."""
    img = _as_image(img)
    if img.norm_state is NormState.UNIT:
        return img
    if img.norm_state is NormState.SYM:
        return Image(np.clip((img.pixels + 1.0) / 2.0, 0.0, 1.0), NormState.UNIT)
    return normalize_unit(img)


def rotate_quarter(img: Image, turns: int) -> Image:
    """Rotate by ``turns`` quarter turns, counter-clockwise with the y axis pointing up.

    In array (row, col) terms pixel (0, 0) of a 2x3 image lands at (0, 1) of the 3x2 result.
    """
    img = _as_image(img)
    return img.with_pixels(np.rot90(img.pixels, k=-(int(turns) % 4)))


def crop(img: Image, top: int, left: int, h: int, w: int) -> Image:
    img = _as_image(img)
    if h < 1 or w < 1 or top < 0 or left < 0 or top + h > img.height or left + w > img.width:
        raise ValueError(
            f"crop window ({top}, {left}, {h}, {w}) outside {img.height}x{img.width} image"
        )
    return img.with_pixels(img.pixels[top:top + h, left:left + w])


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _blur_array(px: np.ndarray, sigma: float) -> np.ndarray:
    k = gaussian_kernel1d(sigma)
    out = ndimage.correlate1d(px, k, axis=0, mode="nearest")
    return ndimage.correlate1d(out, k, axis=1, mode="nearest")


def gaussian_blur(img: Image, sigma: float) -> Image:
    img = _as_image(img)
    return img.with_pixels(_blur_array(img.pixels, sigma))


def median_filter(img: Image, k: int) -> Image:
    img = _as_image(img)
    if k < 1 or k % 2 == 0:
        raise ValueError(f"median kernel size must be odd and >= 1, got {k}")
    if k == 1:
        return img
    return img.with_pixels(ndimage.median_filter(img.pixels, size=k, mode="nearest"))


def convolve(img: Image, kernel: Kernel) -> Image:
    """Correlate with ``kernel`` placed at its anchor; output state is raw."""
    img = _as_image(img)
    n = kernel.size
    origin = (kernel.anchor[0] - n // 2, kernel.anchor[1] - n // 2)
    out = ndimage.correlate(img.pixels, kernel.weights, mode="nearest", origin=origin)
    return Image(out, NormState.RAW)


def _shift_array(px: np.ndarray, dx: int, dy: int) -> np.ndarray:
    h, w = px.shape
    rows = np.clip(np.arange(h) - dy, 0, h - 1)
    cols = np.clip(np.arange(w) - dx, 0, w - 1)
    return px[np.ix_(rows, cols)]


def shift(img: Image, dx: int, dy: int) -> Image:
    """Translate content by (+dx, +dy): ``out[y, x] = in[y - dy, x - dx]``."""
    img = _as_image(img)
    if abs(dx) >= img.width or abs(dy) >= img.height:
        raise ValueError(f"shift ({dx}, {dy}) too large for {img.height}x{img.width} image")
    return img.with_pixels(_shift_array(img.pixels, int(dx), int(dy)))


def shift_rows(img: Image, shifts) -> Image:
    """Shift each row horizontally by its own integer amount (edge-replicate fill)."""
    img = _as_image(img)
    shifts = np.asarray(shifts, dtype=np.int64)
    if shifts.shape != (img.height,):
        raise ValueError(f"need one shift per row ({img.height}), got {shifts.shape}")
    cols = np.clip(np.arange(img.width)[None, :] - shifts[:, None], 0, img.width - 1)
    return img.with_pixels(np.take_along_axis(img.pixels, cols, axis=1))


def resample_y(img: Image, factor: int, direction: str) -> Image:
    img = _as_image(img)
    if factor not in (2, 4):
        raise ValueError(f"factor must be 2 or 4, got {factor}")
    if direction == "down":
        if img.height % factor:
            raise ValueError(f"height {img.height} not divisible by {factor}")
        return img.with_pixels(img.pixels[::factor])
    if direction == "up_nearest":
        return img.with_pixels(np.repeat(img.pixels, factor, axis=0))
    raise ValueError(f"unknown direction {direction!r}")


def fft2_mag_phase(img: Image) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalised 2D DFT as (magnitude, phase) with phase in (-pi, pi]."""
    spec = np.fft.fft2(_as_image(img).pixels)
    phase = np.angle(spec)
    phase[phase <= -np.pi] = np.pi
    return np.abs(spec), phase


def synth_lattice(
    h: int,
    w: int,
    period: float = 8.0,
    orientation: str = "horizontal",
    defect_density: float = 0.0,
    seed: int = 0,
    return_sites: bool = False,
):
    """Toy dimer-row surface: bright rows every ``period`` px with a half-period
    dimer modulation along them, plus randomly placed bright/dark point defects.

    With ``return_sites`` the boolean defect-site mask is returned alongside the image.
    """
    if period < 2:
        raise ValueError(f"period must be >= 2, got {period}")
    if orientation not in ("horizontal", "vertical"):
        raise ValueError(f"orientation must be horizontal or vertical, got {orientation!r}")
    rng = np.random.default_rng(seed)
    y = np.arange(h, dtype=np.float64)[:, None]
    x = np.arange(w, dtype=np.float64)[None, :]
    across, along = (y, x) if orientation == "horizontal" else (x, y)
    rows = np.cos(np.pi * across / period) ** 2
    dimers = 0.7 + 0.3 * np.cos(2.0 * np.pi * along / (period / 2.0)) ** 2
    surface = rows * dimers

    sites = rng.random((h, w)) < defect_density
    if sites.any():
        signs = np.where(rng.random((h, w)) < 0.5, 1.0, -1.0)
        impulses = np.where(sites, signs, 0.0)
        blob_sigma = max(period / 4.0, 0.5)
        peak = gaussian_kernel1d(blob_sigma).max() ** 2
        surface = surface + 0.8 * _blur_array(impulses, blob_sigma) / peak
    img = normalize_unit(Image(surface))
    return (img, sites) if return_sites else img


# --- binary formats -------------------------------------------------------------

_STMI_MAGIC = b"STMI"
_STMI_HEADER = struct.Struct("<4sBIIB")


def encode_stmi(img: Image) -> bytes:
    img = _as_image(img)
    head = _STMI_HEADER.pack(_STMI_MAGIC, 1, img.height, img.width, _NORM_CODES[img.norm_state])
    return head + img.pixels.astype("<f4").tobytes()


def read_stmi_stream(f: BinaryIO) -> Image:
    head = f.read(_STMI_HEADER.size)
    if len(head) != _STMI_HEADER.size:
        raise ValueError("truncated STMI header")
    magic, version, h, w, code = _STMI_HEADER.unpack(head)
    if magic != _STMI_MAGIC:
        raise ValueError(f"bad STMI magic {magic!r}")
    if version != 1:
        raise ValueError(f"unsupported STMI version {version}")
    body = f.read(4 * h * w)
    if len(body) != 4 * h * w:
        raise ValueError("truncated STMI pixel data")
    px = np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float64)
    return Image(px, _NORM_FROM_CODE[code])


def decode_stmi(data: bytes, count: int = 1) -> list[Image]:
    f = io.BytesIO(data)
    return [read_stmi_stream(f) for _ in range(count)]


def write_stmi(path, *images: Image) -> None:
    Path(path).write_bytes(b"".join(encode_stmi(im) for im in images))


def read_stmi(path, count: int = 1):
    imgs = decode_stmi(Path(path).read_bytes(), count)
    return imgs[0] if count == 1 else imgs


def write_pgm16(path, img: Image) -> None:
    unit = to_unit(img).pixels
    data = np.round(unit * 65535.0).astype(">u2")
    header = f"P5\n{img.width} {img.height}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + data.tobytes())


def read_pgm16(path) -> Image:
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos].decode("ascii"))
    pos += 1
    if tokens[0] != "P5":
        raise ValueError(f"not a binary PGM (magic {tokens[0]!r})")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = ">u2" if maxval > 255 else "u1"
    px = np.frombuffer(raw, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return Image(px.astype(np.float64) / maxval, NormState.UNIT)


def load_image(path) -> Image:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm16(path)
    return read_stmi(path)
