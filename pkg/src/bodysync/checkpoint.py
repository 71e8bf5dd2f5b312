"""Versioned binary checkpoint format.

Layout: magic ``BSYN``, u32 version, u64 header length, UTF-8 JSON header
(config, curriculum phase, best val loss, epoch, parameter manifest), then
the raw little-endian float32 buffers in manifest order.  Writing the same
checkpoint twice produces byte-identical files; a version mismatch on load
is an error, never a silent migration.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
import torch

from .config import SyncConfig, validate_config

MAGIC = b"BSYN"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    version: int
    config: SyncConfig
    parameters: dict[str, np.ndarray]   # name -> float32 array
    curriculum_phase: str               # "mean" or "max"
    best_val_loss: float
    epoch: int


def checkpoint_from_model(model, curriculum_phase: str, best_val_loss: float,
                          epoch: int) -> Checkpoint:
    params = {
        name: tensor.detach().cpu().numpy().astype(np.float32)
        for name, tensor in model.state_dict().items()
    }
    return Checkpoint(VERSION, model.cfg, params, curriculum_phase, best_val_loss, epoch)


def load_model_from_checkpoint(ckpt: Checkpoint):
    from .models import build_model

    model = build_model(ckpt.config)
    state = {name: torch.from_numpy(arr.copy()) for name, arr in ckpt.parameters.items()}
    model.load_state_dict(state)
    model.eval()
    return model


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    if ckpt.curriculum_phase not in ("mean", "max"):
        raise CheckpointError(f"bad curriculum phase {ckpt.curriculum_phase!r}")
    names = sorted(ckpt.parameters)
    header = {
        "config": ckpt.config.to_dict(),
        "curriculum_phase": ckpt.curriculum_phase,
        "best_val_loss": ckpt.best_val_loss,
        "epoch": ckpt.epoch,
        "parameters": [
            {"name": n, "shape": list(ckpt.parameters[n].shape)} for n in names
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", ckpt.version))
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for n in names:
            arr = np.ascontiguousarray(ckpt.parameters[n], dtype="<f4")
            f.write(arr.tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        (version,) = struct.unpack("<I", f.read(4))
        if version != VERSION:
            raise CheckpointError(
                f"{path}: checkpoint version {version} unsupported (expected {VERSION})"
            )
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode("utf-8"))
        params = {}
        for entry in header["parameters"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            buf = f.read(4 * count)
            if len(buf) != 4 * count:
                raise CheckpointError(f"{path}: truncated tensor {entry['name']}")
            params[entry["name"]] = np.frombuffer(buf, dtype="<f4").reshape(shape).copy()
    cfg = validate_config(SyncConfig.from_dict(header["config"]))
    return Checkpoint(version, cfg, params, header["curriculum_phase"],
                      header["best_val_loss"], header["epoch"])
