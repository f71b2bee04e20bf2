"""Training objectives. Inputs may be numpy arrays (a float is returned) or
torch tensors (a differentiable scalar tensor is returned).

The unqualified norm in the objectives is taken as mean absolute error;
``norm="l2"`` switches to mean squared error.
"""

from __future__ import annotations

import math

import torch


def _prep(*xs):
    is_np = not any(isinstance(x, torch.Tensor) for x in xs)
    ts = [torch.as_tensor(x, dtype=torch.float64) if not isinstance(x, torch.Tensor) else x for x in xs]
    for t in ts[1:]:
        if t.shape != ts[0].shape:
            raise ValueError(f"shape mismatch: {tuple(ts[0].shape)} vs {tuple(t.shape)}")
    return is_np, ts


def _out(value: torch.Tensor, is_np: bool):
    return float(value) if is_np else value


def _dist(a, b, norm: str):
    diff = a - b
    if norm == "l1":
        return diff.abs().mean()
    if norm == "l2":
        return (diff * diff).mean()
    raise ValueError(f"norm must be 'l1' or 'l2', got {norm!r}")


def loss_dm(eps, eps_pred, norm: str = "l1"):
    is_np, (a, b) = _prep(eps, eps_pred)
    return _out(_dist(a, b, norm), is_np)


def loss_fm(v_target, v_pred, norm: str = "l1"):
    is_np, (a, b) = _prep(v_target, v_pred)
    return _out(_dist(a, b, norm), is_np)


def loss_mae(y, y_pred):
    is_np, (a, b) = _prep(y, y_pred)
    return _out(_dist(a, b, "l1"), is_np)


def wrap_phase(d):
    """Wrap angle differences into (-pi, pi]."""
    w = torch.remainder(d + math.pi, 2.0 * math.pi) - math.pi
    return torch.where(w <= -math.pi, w + 2.0 * math.pi, w)


def spectral_terms(x0, x0_hat):
    """(magnitude term, phase term): mean absolute spectral differences over the last two axes.

    The DFT is orthonormally scaled so magnitudes are commensurate with pixel values.
    """
    is_np, (a, b) = _prep(x0, x0_hat)
    fa = torch.fft.fft2(a, norm="ortho")
    fb = torch.fft.fft2(b, norm="ortho")
    mag = (fa.abs() - fb.abs()).abs().mean()
    phase = wrap_phase(torch.angle(fa) - torch.angle(fb)).abs().mean()
    return _out(mag, is_np), _out(phase, is_np)


def loss_fft_dm(x0, x0_hat, eps, eps_pred, norm: str = "l1"):
    """Half the noise loss plus a quarter each of spectral magnitude and wrapped-phase error.

    ``x0_hat`` is the clean image reconstructed from the noise prediction at the sampled step.
    """
    is_np, (a, b, e, e_hat) = _prep(x0, x0_hat, eps, eps_pred)
    mag, phase = spectral_terms(a, b)
    total = 0.5 * _dist(e, e_hat, norm) + 0.25 * mag + 0.25 * phase
    return _out(total, is_np)

