"""STMW weight checkpoints.

Layout (little-endian): ``b"STMW"``, version u8, meta length u32, UTF-8 JSON
meta, parameter count u32, then per parameter: name length u16, name bytes,
rank u8, dims u32[rank], binary32 data.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .denoiser import TinyDenoiser

MAGIC = b"STMW"
VERSION = 1


def encode_checkpoint(net: TinyDenoiser, meta: dict | None = None) -> bytes:
    meta = dict(meta or {})
    meta["model"] = net.config()
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<BI", VERSION, len(meta_bytes)), meta_bytes]
    state = net.state_dict()
    parts.append(struct.pack("<I", len(state)))
    for name, tensor in state.items():
        arr = tensor.detach().cpu().numpy().astype("<f4")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode_checkpoint(data: bytes) -> tuple[TinyDenoiser, dict]:
    if data[:4] != MAGIC:
        raise ValueError(f"bad STMW magic {data[:4]!r}")
    version, meta_len = struct.unpack_from("<BI", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported STMW version {version}")
    pos = 9
    meta = json.loads(data[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    state = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<B", data, pos)
        pos += 1
        dims = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=pos).reshape(dims)
        pos += 4 * n
        state[name] = torch.from_numpy(arr.copy())
    net = TinyDenoiser(**meta["model"])
    net.load_state_dict(state)
    net.eval()
    return net, meta


def save_checkpoint(path, net: TinyDenoiser, meta: dict | None = None) -> None:
    Path(path).write_bytes(encode_checkpoint(net, meta))


def load_checkpoint(path) -> tuple[TinyDenoiser, dict]:
    return decode_checkpoint(Path(path).read_bytes())
