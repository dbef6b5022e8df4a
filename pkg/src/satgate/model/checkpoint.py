"""Self-describing predictor checkpoints with a deterministic byte layout.

Layout: 8-byte magic, u32 format version, u64 header length, JSON header
(config, vocabulary, tensor manifest with offsets), then the raw little-endian
float64 tensor bytes in manifest order. Identical contents serialize to
identical bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .config import PredictorConfig
from .vocab import Vocabulary

__all__ = ["save_checkpoint", "load_checkpoint", "CheckpointError"]

_MAGIC = b"SATGCKPT"
_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, config: PredictorConfig, vocab: Vocabulary, params: dict) -> None:
    names = sorted(params)
    manifest = []
    offset = 0
    blobs = []
    for name in names:
        arr = np.asarray(params[name], dtype=np.float64)
        blob = arr.tobytes()  # C-order bytes; preserves 0-d shapes
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(
        {
            "config": config.to_dict(),
            "vocab": vocab.to_dict(),
            "tensors": manifest,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQ", _VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[PredictorConfig, Vocabulary, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise CheckpointError(f"not a predictor checkpoint: bad magic {magic!r}")
        version, header_len = struct.unpack("<IQ", fh.read(12))
        if version != _VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        payload = fh.read()
    config = PredictorConfig.from_dict(header["config"])
    vocab = Vocabulary.from_dict(header["vocab"])
    params = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
        params[entry["name"]] = arr.reshape(shape).copy()
    return config, vocab, params
