from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

COSINE_OFFSET = 0.008
DEFAULT_T = 1000
MAX_BETA = 0.999


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    T: int
    alpha_bar: np.ndarray

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if ab.shape != (self.T + 1,):
            raise ValueError(f"alpha_bar needs T+1={self.T + 1} entries, got {ab.shape}")
        if ab[0] != 1.0 or not np.all(np.diff(ab) < 0):
            raise ValueError("alpha_bar must start at 1 and strictly decrease")
        ab.setflags(write=False)
        object.__setattr__(self, "alpha_bar", ab)

    def signal(self, t: int) -> float:
        return math.sqrt(self.alpha_bar[t])

    def noise(self, t: int) -> float:
        return math.sqrt(1.0 - self.alpha_bar[t])


def cosine_schedule(T: int = DEFAULT_T, s: float = COSINE_OFFSET, max_beta: float = MAX_BETA) -> NoiseSchedule:
    """Cumulative signal retention ``f(t)/f(0)`` with ``f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2)``.

    Per-step betas ``1 - abar_t / abar_{t-1}`` are capped at ``max_beta``. Without
    the cap ``abar_T`` is ~1e-33 and the last step destroys the signal beyond what
    float64 can invert; with it only the final step or two change.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    t = np.arange(T + 1, dtype=np.float64)
    f = np.cos(((t / T + s) / (1.0 + s)) * np.pi / 2.0) ** 2
    ratio = np.minimum(f[1:] / f[:-1], 1.0)
    ratio = np.maximum(ratio, 1.0 - max_beta)
    ab = np.concatenate([[1.0], np.cumprod(ratio)])
    return NoiseSchedule(T, ab)


def step_indices(T: int, steps: int) -> list[int]:
    """Evenly spaced descending step indices from T to 0 (``steps`` transitions)."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if steps > T:
        raise ValueError(f"cannot take {steps} steps over a {T}-step schedule")
    return [int(v) for v in np.round(np.linspace(T, 0, steps + 1)).astype(np.int64)]
