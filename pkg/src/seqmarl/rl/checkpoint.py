"""Versioned binary checkpoint container.

Layout: 8 magic bytes, uint32 format version, uint32 header length, a JSON
header (model config, counters, rng state, optimizer step count, tensor
index), then raw little-endian float64 tensor payloads in index order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..model import ModelConfig, SeqModel

MAGIC = b"SEQMARL\x01"
FORMAT_VERSION = 1

_PARAM = "param/"
_ADAM_M = "adam_m/"
_ADAM_V = "adam_v/"


class CheckpointError(Exception):
    """Unreadable or inconsistent checkpoint file."""


class CheckpointVersionError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    version: int
    model_config: ModelConfig
    params: dict
    optimizer_state: dict | None = None
    rng_state: dict | None = None
    counters: dict = field(default_factory=dict)


def save_checkpoint(path, model: SeqModel, optimizer=None, rng_state=None,
                    counters=None):
    tensors = {}
    for name, p in model.named_parameters():
        tensors[_PARAM + name] = p.data
    opt_meta = None
    if optimizer is not None:
        state = optimizer.state_dict()
        opt_meta = {"t": state["t"]}
        for name, arr in state["m"].items():
            tensors[_ADAM_M + name] = arr
        for name, arr in state["v"].items():
            tensors[_ADAM_V + name] = arr

    index = [
        {"name": name, "dtype": "<f8", "shape": list(arr.shape)}
        for name, arr in tensors.items()
    ]
    header = {
        "model_config": model.config.to_dict(),
        "counters": dict(counters or {}),
        "rng_state": rng_state,
        "optimizer": opt_meta,
        "tensors": index,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for name, arr in tensors.items():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if len(blob) < len(MAGIC) + 8 or blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file (bad magic)")
    version, header_len = struct.unpack_from("<II", blob, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format version {version} unsupported (expected {FORMAT_VERSION})"
        )
    start = len(MAGIC) + 8
    try:
        header = json.loads(blob[start : start + header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint header in {path}: {e}") from e

    offset = start + header_len
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(int(s) for s in entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8 if shape else 8
        chunk = blob[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(
                f"truncated checkpoint {path}: tensor {entry['name']} needs "
                f"{nbytes} bytes, {len(chunk)} available"
            )
        tensors[entry["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"trailing bytes in checkpoint {path}")

    params = {n[len(_PARAM):]: a for n, a in tensors.items() if n.startswith(_PARAM)}
    opt_state = None
    if header.get("optimizer") is not None:
        opt_state = {
            "t": int(header["optimizer"]["t"]),
            "m": {n[len(_ADAM_M):]: a for n, a in tensors.items() if n.startswith(_ADAM_M)},
            "v": {n[len(_ADAM_V):]: a for n, a in tensors.items() if n.startswith(_ADAM_V)},
        }
    try:
        config = ModelConfig.from_dict(header["model_config"])
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"invalid model config in checkpoint: {e}") from e
    return Checkpoint(
        version=version,
        model_config=config,
        params=params,
        optimizer_state=opt_state,
        rng_state=header.get("rng_state"),
        counters=header.get("counters", {}),
    )


def model_from_checkpoint(ckpt: Checkpoint) -> SeqModel:
    model = SeqModel(ckpt.model_config, seed=0)
    model.load_state_dict(ckpt.params)
    return model
