"""Forward noising and deterministic reverse sampling for DDIM and flow matching.

Functions work elementwise on numpy arrays or torch tensors of any shape.

A denoiser is any callable ``model(x, time, condition)`` returning an array of
``x``'s shape: the predicted noise for DDIM, the velocity for flow matching.
``time`` is always a float in [0, 1]: ``t / T`` for DDIM, the interpolation
coordinate ``s`` for flow matching.

Flow-matching convention: ``x(0) = eps`` (noise), ``x(1) = x0`` (data),
velocity ``v = x0 - eps``.
"""

from __future__ import annotations

import numpy as np

from .schedule import NoiseSchedule, step_indices


def _check_shapes(a, b):
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def ddim_forward(x0, eps, t: int, sched: NoiseSchedule):
    _check_shapes(x0, eps)
    return sched.signal(t) * x0 + sched.noise(t) * eps


def predict_x0(x_t, eps_pred, t: int, sched: NoiseSchedule):
    """Clean-image estimate implied by a noise prediction at step ``t``."""
    return (x_t - sched.noise(t) * eps_pred) / sched.signal(t)


def ddim_reverse_step(x_t, eps_pred, t: int, t_prev: int, sched: NoiseSchedule):
    if t_prev >= t:
        raise ValueError(f"t_prev ({t_prev}) must be < t ({t})")
    _check_shapes(x_t, eps_pred)
    x0_hat = predict_x0(x_t, eps_pred, t, sched)
    return sched.signal(t_prev) * x0_hat + sched.noise(t_prev) * eps_pred


def fm_forward(x0, eps, s: float):
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s must lie in [0, 1], got {s}")
    _check_shapes(x0, eps)
    return s * x0 + (1.0 - s) * eps


def fm_target_velocity(x0, eps):
    _check_shapes(x0, eps)
    return x0 - eps


def initial_noise(shape, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(shape)


def ddim_sample(model, condition, steps: int, sched: NoiseSchedule, seed: int = 0, noise=None):
    """Run ``steps`` deterministic (eta = 0) reverse updates from ``t = T`` down to ``t = 0``."""
    ts = step_indices(sched.T, steps)
    x = initial_noise(np.shape(condition), seed) if noise is None else noise
    for t, t_prev in zip(ts[:-1], ts[1:]):
        eps_pred = model(x, t / sched.T, condition)
        x = ddim_reverse_step(x, eps_pred, t, t_prev, sched)
    return x


def fm_sample_rk2(model, condition, steps: int, seed: int = 0, noise=None):
    """Integrate the learnt velocity field from s = 0 to s = 1 with the RK2 midpoint rule."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    x = initial_noise(np.shape(condition), seed) if noise is None else noise
    ds = 1.0 / steps
    for i in range(steps):
        s = i * ds
        k1 = model(x, s, condition)
        k2 = model(x + 0.5 * ds * k1, s + 0.5 * ds, condition)
        x = x + ds * k2
    return x


def direct_predict(model, condition):
    """Single forward pass (autoencoder-style restorer); time is fixed at 0."""
    return model(condition, 0.0, condition)


SAMPLERS = ("ddim", "fm", "direct")


def run_sampler(sampler: str, model, condition, steps: int, sched: NoiseSchedule | None = None,
                seed: int = 0, noise=None):
    if sampler == "fm":
        return fm_sample_rk2(model, condition, steps, seed, noise)
    if sampler == "ddim":
        if sched is None:
            raise ValueError("ddim sampling needs a noise schedule")
        return ddim_sample(model, condition, steps, sched, seed, noise)
    if sampler == "direct":
        return direct_predict(model, condition)
    raise ValueError(f"unknown sampler {sampler!r}")
