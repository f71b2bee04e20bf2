"""Run configuration files and reproducibility stamps.

Config files are TOML with one section per module::

    [run]
    task = "restore"
    seed = 7

    [degrade]
    multitip_p = 0.5

Unknown sections or keys are rejected. Command-line flags override file values.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import tomli
import tomli_w

from . import __version__
from .degrade import DegradeConfig


@dataclass(frozen=True)
class PatchConfig:
    patch: int = 128
    overlap: int = 32


@dataclass(frozen=True)
class RunSection:
    task: str = "restore"
    seed: int = 0


def _train_config_cls():
    from .genmodel.train import TrainConfig

    return TrainConfig


@dataclass(frozen=True)
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    degrade: DegradeConfig = field(default_factory=DegradeConfig)
    train: dict = field(default_factory=dict)
    patchwork: PatchConfig = field(default_factory=PatchConfig)

    def train_config(self, **overrides):
        cls = _train_config_cls()
        return cls(**{**self.train, **{k: v for k, v in overrides.items() if v is not None}})

    def to_dict(self) -> dict:
        out = {
            "run": asdict(self.run),
            "degrade": self.degrade.to_dict(),
            "train": {k: list(v) if isinstance(v, tuple) else v for k, v in self.train.items()},
            "patchwork": asdict(self.patchwork),
        }
        return out

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def _check_keys(section: str, values: dict, allowed) -> None:
    unknown = set(values) - set(allowed)
    if unknown:
        raise ValueError(f"unknown keys in [{section}]: {sorted(unknown)}")


def config_from_dict(data: dict) -> RunConfig:
    _check_keys("<root>", data, ("run", "degrade", "train", "patchwork"))
    run = data.get("run", {})
    _check_keys("run", run, [f.name for f in fields(RunSection)])
    patch = data.get("patchwork", {})
    _check_keys("patchwork", patch, [f.name for f in fields(PatchConfig)])
    train = data.get("train", {})
    _check_keys("train", train, [f.name for f in fields(_train_config_cls())])
    return RunConfig(
        run=RunSection(**run),
        degrade=DegradeConfig.from_dict(data.get("degrade", {})),
        train=dict(train),
        patchwork=PatchConfig(**patch),
    )


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path, "rb") as f:
        return config_from_dict(tomli.load(f))


def with_run(cfg: RunConfig, **overrides) -> RunConfig:
    vals = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, run=replace(cfg.run, **vals)) if vals else cfg


def _toml_safe(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            out[k] = _toml_safe(v)
        elif v is not None:
            out[k] = v
    return out


def stamp(command: str, args: list, cfg: RunConfig, seed: int | None) -> dict:
    return {
        "tool": "stmforge",
        "version": __version__,
        "command": command,
        "args": list(args),
        "seed": seed,
        "config_hash": cfg.hash(),
    }


def write_stamp(target, command: str, args: list, cfg: RunConfig, seed: int | None) -> None:
    """Echo the effective config and a replay stamp next to an output.

    Directory outputs get ``config.toml`` and ``stamp.json`` inside; file outputs
    get ``<file>.stamp.json`` with the config embedded.
    """
    target = Path(target)
    st = stamp(command, args, cfg, seed)
    if target.is_dir():
        (target / "config.toml").write_text(tomli_w.dumps(_toml_safe(cfg.to_dict())), encoding="utf-8")
        (target / "stamp.json").write_text(json.dumps(st, indent=1, sort_keys=True), encoding="utf-8")
    else:
        st["config"] = cfg.to_dict()
        path = target.with_name(target.name + ".stamp.json")
        path.write_text(json.dumps(st, indent=1, sort_keys=True), encoding="utf-8")
