"""Versioned single-file checkpoints.

Layout::

    MOEPRUNE1\\n
    <8-byte little-endian header length>
    <UTF-8 JSON header: config, extra metadata, manifest of (name, shape, offset, dtype)>
    <raw little-endian float32 parameter data, concatenated in manifest order>

Offsets are byte offsets into the data section.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig
from .model import MoEModel

MAGIC = b"MOEPRUNE1\n"


def save_checkpoint(model: MoEModel, path: str | Path, extra: dict | None = None) -> None:
    manifest, blobs, offset = [], [], 0
    for name, tensor in model.state_dict().items():
        arr = tensor.detach().cpu().numpy().astype("<f4", copy=False)
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset, "dtype": "float32"})
        blobs.append(arr.tobytes(order="C"))
        offset += arr.nbytes
    header = json.dumps(
        {"format": MAGIC.decode().strip(), "config": model.config.to_dict(), "extra": extra or {},
         "manifest": manifest},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)


def read_checkpoint(path: str | Path) -> tuple[ModelConfig, dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValueError(f"{path}: not a MOEPRUNE1 checkpoint")
    pos = len(MAGIC)
    (hlen,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    header = json.loads(data[pos : pos + hlen].decode("utf-8"))
    body = memoryview(data)[pos + hlen :]
    params = {}
    for entry in header["manifest"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(body, dtype="<f4", count=count, offset=entry["offset"])
        params[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return ModelConfig.from_dict(header["config"]), params, header.get("extra", {})


def load_checkpoint(path: str | Path) -> tuple[MoEModel, dict]:
    """Returns (model in eval mode, extra metadata)."""
    config, params, extra = read_checkpoint(path)
    model = MoEModel(config)
    state = {k: torch.from_numpy(v) for k, v in params.items()}
    model.load_state_dict(state, strict=True)
    model.eval()
    return model, extra
