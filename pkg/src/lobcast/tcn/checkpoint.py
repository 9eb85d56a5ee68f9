"""Versioned binary parameter checkpoints.

Layout (little-endian):

    magic      8 bytes  b"LOBTCN\\x00\\x01"
    version    uint32
    cfg_len    uint32   byte length of the UTF-8 JSON config block
    config     cfg_len bytes (TcnConfig fields, sorted keys)
    arrays     float64 values of every parameter array, concatenated in
               ``TcnParams.named_arrays`` order (shapes follow from config)

A ``<path>.json`` sidecar repeats the config and the array names/shapes.
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from lobcast.errors import InputError
from lobcast.tcn.model import TcnConfig, TcnParams, param_shapes, params_from_arrays

MAGIC = b"LOBTCN\x00\x01"
VERSION = 1
_HEADER = struct.Struct("<8sII")


class CheckpointError(InputError):
    pass


def _config_bytes(config: TcnConfig) -> bytes:
    return json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode_checkpoint(params: TcnParams, config: TcnConfig) -> bytes:
    shapes = param_shapes(config)
    if params.shapes() != shapes:
        raise CheckpointError("parameters do not match the config")
    cfg = _config_bytes(config)
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.arrays())
    return _HEADER.pack(MAGIC, VERSION, len(cfg)) + cfg + body


def decode_checkpoint(blob: bytes) -> tuple[TcnParams, TcnConfig]:
    if len(blob) < _HEADER.size:
        raise CheckpointError("checkpoint truncated")
    magic, version, cfg_len = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError("not a parameter checkpoint (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = _HEADER.size
    try:
        config = TcnConfig.from_dict(json.loads(blob[start:start + cfg_len].decode("utf-8")))
    except (ValueError, TypeError) as exc:
        raise CheckpointError(f"bad config block: {exc}") from None
    offset = start + cfg_len
    arrays = []
    for shape in param_shapes(config):
        n = int(np.prod(shape))
        end = offset + 8 * n
        if end > len(blob):
            raise CheckpointError("checkpoint truncated")
        arrays.append(np.frombuffer(blob, dtype="<f8", count=n, offset=offset)
                      .reshape(shape).astype(np.float64))
        offset = end
    if offset != len(blob):
        raise CheckpointError(f"{len(blob) - offset} trailing bytes in checkpoint")
    return params_from_arrays(config, arrays), config


def save_checkpoint(path, params: TcnParams, config: TcnConfig) -> None:
    path = os.fspath(path)
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(params, config))
    sidecar = {
        "format_version": VERSION,
        "config": config.to_dict(),
        "arrays": [{"name": name, "shape": list(a.shape)} for name, a in params.named_arrays()],
    }
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> tuple[TcnParams, TcnConfig]:
    with open(os.fspath(path), "rb") as fh:
        return decode_checkpoint(fh.read())
