"""Two-apex tunnelling model and its mapping onto the empirical multi-tip sigmoid.

Interference between the two apexes is neglected. Heights ``b`` must be in
the same length units as ``1 / (2 * kappa)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imagecore import _shift_array


@dataclass(frozen=True)
class PhysicalTipParams:
    I_T: float
    gamma: float
    kappa: float
    a: float
    s: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not self.I_T > 0:
            raise ValueError("I_T must be positive")
        if self.s < 0:
            raise ValueError("tip separation s must be non-negative")


@dataclass(frozen=True)
class Eq1Params:
    amplitude: float
    c: float
    d: float
    dx: int
    dy: int


def resolve_offset(s: float, offset=None, pixel_size: float = 1.0, tol: float = 1e-9):
    """Integer grid displacement (dx, dy) whose length equals ``s / pixel_size``."""
    target = s / pixel_size
    if offset is None:
        dx = round(target)
        if abs(dx - target) > tol:
            raise ValueError(f"separation {target} px is not an integer grid offset")
        return int(dx), 0
    dx, dy = int(offset[0]), int(offset[1])
    if abs(math.hypot(dx, dy) - target) > tol:
        raise ValueError(f"offset ({dx}, {dy}) has length {math.hypot(dx, dy)}, need {target}")
    return dx, dy


def double_tip_height(b, p: PhysicalTipParams, offset=None, pixel_size: float = 1.0) -> np.ndarray:
    """Height recorded under a double tip for surface profile ``b`` (1D or 2D)."""
    b = np.asarray(b, dtype=np.float64)
    dx, dy = resolve_offset(p.s, offset, pixel_size)
    grid = b[None, :] if b.ndim == 1 else b
    if b.ndim == 1 and dy:
        raise ValueError("1D profile cannot take a y offset")
    displaced = _shift_array(grid, dx, dy)
    if b.ndim == 1:
        displaced = displaced[0]
    expo = -2.0 * p.kappa * (displaced - p.gamma / (2.0 * p.kappa) - p.a)
    return p.I_T * math.exp(p.gamma) / (1.0 + np.exp(expo)) + b


def map_physical_to_eq1(p: PhysicalTipParams, offset=None, pixel_size: float = 1.0) -> Eq1Params:
    dx, dy = resolve_offset(p.s, offset, pixel_size)
    return Eq1Params(
        amplitude=p.I_T * math.exp(p.gamma),
        c=p.gamma + 2.0 * p.kappa * p.a,
        d=2.0 * p.kappa,
        dx=dx,
        dy=dy,
    )


def equivalence_sweep(draws: int = 1000, size: int = 32, seed: int = 0) -> float:
    """Max |single-copy multi-tip - double_tip_height| over random parameters and grids."""
    from .degrade import TipCopy, MultiTipParams, apply_multi_tip

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        dx, dy = (int(v) for v in rng.integers(0, 8, size=2))
        p = PhysicalTipParams(
            I_T=float(rng.uniform(0.1, 3.0)),
            gamma=float(rng.uniform(-1.0, 1.0)),
            kappa=float(rng.uniform(1.0, 6.0)),
            a=float(rng.uniform(-0.3, 0.8)),
            s=math.hypot(dx, dy),
        )
        b = rng.random((size, size))
        physical = double_tip_height(b, p, offset=(dx, dy))
        m = map_physical_to_eq1(p, offset=(dx, dy))
        copy = TipCopy(m.amplitude, m.c, m.d, m.dx, m.dy, {"kind": "identity"})
        empirical = apply_multi_tip(b, MultiTipParams(n_tips=2, copies=[copy]))
        worst = max(worst, float(np.max(np.abs(empirical.pixels - physical))))
    return worst
