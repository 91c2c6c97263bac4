"""Single-file checkpoint archive.

Layout (little-endian): magic "TGCK", u32 format version, u32 config JSON
length, the config JSON (UTF-8), u32 tensor count, then per tensor in sorted
state-dict order: u32 name length, name bytes, u32 ndim, u32 dims...,
float32 data row-major.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig
from .net import TGSalNet

CHECKPOINT_MAGIC = b"TGCK"
CHECKPOINT_VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(path: str | Path, net: TGSalNet) -> None:
    config_blob = json.dumps(net.cfg.to_json(), sort_keys=True).encode("utf-8")
    state = net.state_dict()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(config_blob)))
        fh.write(config_blob)
        fh.write(struct.pack("<I", len(state)))
        for name in sorted(state):
            tensor = state[name].detach().to(torch.float32).cpu().numpy()
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<I", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> TGSalNet:
    blob = Path(path).read_bytes()
    if len(blob) < 12 or blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint archive")
    version, config_len = struct.unpack("<II", blob[4:12])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    offset = 12
    cfg = ModelConfig.from_json(json.loads(blob[offset:offset + config_len].decode("utf-8")))
    offset += config_len
    (n_tensors,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    state: dict[str, torch.Tensor] = {}
    for _ in range(n_tensors):
        (name_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        dims = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        count = int(np.prod(dims)) if ndim else 1
        data = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        offset += 4 * count
        state[name] = torch.from_numpy(data.reshape(dims).copy())
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes")
    net = TGSalNet(cfg)
    net.load_state_dict(state)
    return net
