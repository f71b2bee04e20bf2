"""Desk-scale training of the TinyDenoiser under each objective."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import torch

from ..imagecore import Image
from .denoiser import TinyDenoiser
from .losses import loss_dm, loss_fft_dm, loss_fm, loss_mae
from .schedule import DEFAULT_T, cosine_schedule

OBJECTIVES = ("fm", "ddim", "ddim_fft", "mae")
OBJECTIVE_SAMPLER = {"fm": "fm", "ddim": "ddim", "ddim_fft": "ddim", "mae": "direct"}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3
    batch: int = 16
    lr: float = 1e-3
    seed: int = 0
    T: int = DEFAULT_T
    channels: tuple = (8, 16, 32)
    norm: str = "l1"
    fm_clean: bool = True
    probe_size: int = 32
    max_seconds: float | None = None
    lr_schedule: str = "constant"
    ema: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"lr_schedule must be 'constant' or 'cosine', got {self.lr_schedule!r}")


@dataclass
class TrainResult:
    curve: list
    batch_losses: list = field(default_factory=list)
    seconds: float = 0.0
    epochs_run: int = 0


def _to_tensors(dataset):
    gts, conds = [], []
    for item in dataset:
        if hasattr(item, "ground_truth"):
            g, c = item.ground_truth, item.degraded
        else:
            g, c = item
        gts.append(g.pixels if isinstance(g, Image) else np.asarray(g))
        conds.append(c.pixels if isinstance(c, Image) else np.asarray(c))
    x0 = torch.as_tensor(np.stack(gts), dtype=torch.float32)[:, None]
    cond = torch.as_tensor(np.stack(conds), dtype=torch.float32)[:, None]
    return x0, cond


def objective_loss(net, x0, cond, objective: str, gen: torch.Generator, alpha_bar: torch.Tensor,
                   norm: str = "l1"):
    b = x0.shape[0]
    dtype = x0.dtype
    if objective == "mae":
        return loss_mae(x0, net(cond, torch.zeros(b, dtype=dtype), cond))
    eps = torch.randn(x0.shape, generator=gen, dtype=dtype)
    if objective == "fm":
        s = torch.rand(b, generator=gen, dtype=dtype)
        sv = s[:, None, None, None]
        xs = sv * x0 + (1.0 - sv) * eps
        return loss_fm(x0 - eps, net(xs, s, cond), norm)
    if objective in ("ddim", "ddim_fft"):
        T = alpha_bar.shape[0] - 1
        t = torch.randint(1, T + 1, (b,), generator=gen)
        ab = alpha_bar[t].to(dtype)[:, None, None, None]
        x_t = ab.sqrt() * x0 + (1.0 - ab).sqrt() * eps
        eps_pred = net(x_t, t.to(dtype) / T, cond)
        if objective == "ddim":
            return loss_dm(eps, eps_pred, norm)
        x0_hat = (x_t - (1.0 - ab).sqrt() * eps_pred) / ab.sqrt()
        return loss_fft_dm(x0, x0_hat, eps, eps_pred, norm)
    raise ValueError(f"unknown objective {objective!r}")


def _probe_loss(net, x0, cond, objective, seed, alpha_bar, norm):
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        return float(objective_loss(net, x0, cond, objective, gen, alpha_bar, norm))


def train_toy(dataset, objective: str = "fm", config: TrainConfig | None = None,
              net: TinyDenoiser | None = None):
    """Train with Adam; returns ``(net, TrainResult)``.

    ``TrainResult.curve`` holds the objective on a fixed probe subset with frozen
    noise draws, before training and after every epoch, so it moves only when the
    weights do.
    """
    cfg = config or TrainConfig()
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    x0, cond = _to_tensors(dataset)
    torch.manual_seed(cfg.seed)
    net = net or TinyDenoiser(cfg.channels, velocity_from_clean=(objective == "fm" and cfg.fm_clean))
    alpha_bar = torch.from_numpy(np.array(cosine_schedule(cfg.T).alpha_bar))
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    total_steps = cfg.epochs * -(-len(x0) // cfg.batch)
    sched = None
    if cfg.lr_schedule == "cosine":
        sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(total_steps, 1))
    gen = torch.Generator().manual_seed(cfg.seed)
    probe = slice(0, min(cfg.probe_size, len(x0)))
    probe_seed = cfg.seed + 1

    # averaged weights are what gets probed and returned; the optimiser updates `net`
    avg = torch.optim.swa_utils.AveragedModel(
        net, multi_avg_fn=torch.optim.swa_utils.get_ema_multi_avg_fn(cfg.ema)) if cfg.ema else None
    model = avg.module if avg is not None else net

    result = TrainResult(curve=[_probe_loss(model, x0[probe], cond[probe], objective, probe_seed,
                                            alpha_bar, cfg.norm)])
    start = time.perf_counter()
    out_of_time = False
    for _ in range(cfg.epochs):
        net.train()
        order = torch.randperm(len(x0), generator=gen)
        for i in range(0, len(order), cfg.batch):
            idx = order[i:i + cfg.batch]
            loss = objective_loss(net, x0[idx], cond[idx], objective, gen, alpha_bar, cfg.norm)
            opt.zero_grad()
            loss.backward()
            opt.step()
            if sched is not None:
                sched.step()
            if avg is not None:
                avg.update_parameters(net)
            result.batch_losses.append(loss.item())
            if cfg.max_seconds is not None and time.perf_counter() - start > cfg.max_seconds:
                out_of_time = True
                break
        result.epochs_run += 1
        net.eval()
        result.curve.append(_probe_loss(model, x0[probe], cond[probe], objective, probe_seed,
                                        alpha_bar, cfg.norm))
        if out_of_time:
            break
    result.seconds = time.perf_counter() - start
    return model, result
