"""Small conditioned U-Net used as a desk-scale stand-in for the full models."""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


def timestep_embedding(time: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of a continuous time in [0, 1]."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=time.dtype, device=time.device) / half)
    args = 1000.0 * time[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


class ConvBlock(nn.Module):
    def __init__(self, in_ch, out_ch, emb_dim):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.time = nn.Linear(emb_dim, 2 * out_ch)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x, emb):
        h = F.silu(self.conv1(x))
        scale, shift = self.time(emb)[:, :, None, None].chunk(2, dim=1)
        h = h * (1.0 + scale) + shift
        h = self.conv2(h)
        return F.silu(h + self.skip(x))


class TinyDenoiser(nn.Module):
    """Three-level encoder-decoder. Input is ``concat(x_t, condition)``; output has one
    channel, plus a time-conditioned linear skip from each input channel.

    With ``velocity_from_clean`` the trunk estimates the clean image ``D`` and the
    module returns the flow-matching velocity ``(D - x) / (1 - time)`` (gap floored at
    ``min_gap``); the training loss is still taken on that velocity.

    Spatial sizes must be divisible by ``2 ** (len(channels) - 1)``.
    """

    def __init__(self, channels=(8, 16, 32), emb_dim: int = 32, velocity_from_clean: bool = False,
                 min_gap: float = 0.05):
        super().__init__()
        self.channels = tuple(int(c) for c in channels)
        self.emb_dim = emb_dim
        self.velocity_from_clean = bool(velocity_from_clean)
        self.min_gap = float(min_gap)
        self.time_mlp = nn.Sequential(nn.Linear(emb_dim, emb_dim), nn.SiLU())
        ins = (2,) + self.channels[:-1]
        self.down = nn.ModuleList(ConvBlock(i, o, emb_dim) for i, o in zip(ins, self.channels))
        self.up = nn.ModuleList(
            ConvBlock(self.channels[k + 1] + self.channels[k], self.channels[k], emb_dim)
            for k in reversed(range(len(self.channels) - 1))
        )
        # image-wide context: the restoration target depends on global intensity
        # statistics (normalisation shifts) that a small receptive field cannot see
        self.context = nn.Linear(self.channels[-1], self.channels[-1])
        self.out = nn.Conv2d(self.channels[0], 1, 1)
        # time-dependent gains on the raw inputs, so identity-like maps (noise in
        # the velocity target, the condition in restoration) need no conv capacity
        self.input_gain = nn.Linear(emb_dim, 2)
        # multiplicative gate on x_t before the trunk: near pure noise the trunk
        # should see mostly the condition
        self.x_gate = nn.Linear(emb_dim, 1)

    def forward(self, x, time, condition):
        emb = self.time_mlp(timestep_embedding(time, self.emb_dim))
        h = torch.cat([x * self.x_gate(emb)[:, :, None, None], condition], dim=1)
        skips = []
        for level, block in enumerate(self.down):
            if level:
                h = F.avg_pool2d(h, 2)
            h = block(h, emb)
            skips.append(h)
        h = h + self.context(h.mean(dim=(2, 3)))[:, :, None, None]
        skips.pop()
        for block in self.up:
            h = F.interpolate(h, scale_factor=2, mode="nearest")
            h = block(torch.cat([h, skips.pop()], dim=1), emb)
        gain = self.input_gain(emb)[:, :, None, None]
        out = self.out(h) + gain[:, :1] * x + gain[:, 1:] * condition
        if self.velocity_from_clean:
            # out estimates the clean image; velocity of the straight path through x
            gap = (1.0 - time).clamp(min=self.min_gap)[:, None, None, None]
            out = (out - x) / gap
        return out

    def n_params(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def config(self) -> dict:
        return {
            "channels": list(self.channels),
            "emb_dim": self.emb_dim,
            "velocity_from_clean": self.velocity_from_clean,
            "min_gap": self.min_gap,
        }


class TorchDenoiser:
    """Adapter giving a torch module the numpy ``model(x, time, condition)`` interface.

    Accepts ``(H, W)`` or ``(B, H, W)`` arrays.
    """

    def __init__(self, net: nn.Module, batch_size: int = 16):
        self.net = net
        self.batch_size = batch_size

    @torch.no_grad()
    def __call__(self, x, time, condition):
        x = np.asarray(x)
        single = x.ndim == 2
        xb = x[None] if single else x
        cb = np.asarray(condition)
        cb = cb[None] if cb.ndim == 2 else cb
        dtype = next(self.net.parameters()).dtype
        self.net.eval()
        out = []
        for i in range(0, len(xb), self.batch_size):
            xs = torch.as_tensor(xb[i:i + self.batch_size], dtype=dtype)[:, None]
            cs = torch.as_tensor(cb[i:i + self.batch_size], dtype=dtype)[:, None]
            ts = torch.full((len(xs),), float(time), dtype=dtype)
            out.append(self.net(xs, ts, cs)[:, 0].double().numpy())
        res = np.concatenate(out)
        return res[0] if single else res
