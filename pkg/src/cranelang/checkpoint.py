"""Versioned binary parameter container.

Layout: 4-byte magic, u32 version, u64 manifest length, UTF-8 JSON manifest, then the raw
little-endian tensors at the byte offsets listed in the manifest (relative to the data start).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

MAGIC = b"CRNL"
VERSION = 1
_HEADER = struct.Struct("<4sIQ")


class CheckpointError(ValueError):
    pass


def _flatten(modules: dict) -> dict[str, np.ndarray]:
    out = {}
    for prefix, mod in modules.items():
        state = mod.state_dict() if hasattr(mod, "state_dict") else {"": mod}
        for name, t in state.items():
            key = f"{prefix}.{name}" if name else prefix
            arr = t.detach().cpu().numpy() if torch.is_tensor(t) else np.asarray(t)
            out[key] = arr
    return out


def save_checkpoint(path, modules: dict, meta: dict | None = None) -> None:
    arrays = _flatten(modules)
    entries, blobs, offset = [], [], 0
    for name, arr in arrays.items():
        le = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))
        raw = le.tobytes()
        entries.append({"name": name, "dtype": le.dtype.str, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    manifest = json.dumps({"version": VERSION, "endianness": "little", "tensors": entries,
                           "meta": meta or {}}, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, len(manifest)))
        f.write(manifest)
        for raw in blobs:
            f.write(raw)


def read_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CheckpointError("truncated header")
    magic, version, mlen = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    manifest = json.loads(data[_HEADER.size:_HEADER.size + mlen])
    base = _HEADER.size + mlen
    arrays = {}
    for e in manifest["tensors"]:
        start = base + e["offset"]
        if start + e["nbytes"] > len(data):
            raise CheckpointError(f"tensor {e['name']} runs past end of file")
        arr = np.frombuffer(data, dtype=np.dtype(e["dtype"]), count=int(np.prod(e["shape"], dtype=np.int64)),
                            offset=start)
        arrays[e["name"]] = arr.reshape(e["shape"]).astype(arr.dtype.newbyteorder("="))
    return arrays, manifest["meta"]


def load_checkpoint(path, modules: dict) -> dict:
    """Fill ``modules`` (name -> nn.Module) in place; returns the stored metadata."""
    arrays, meta = read_checkpoint(path)
    for prefix, mod in modules.items():
        state = {k[len(prefix) + 1:]: torch.from_numpy(v.copy()) for k, v in arrays.items()
                 if k.startswith(prefix + ".")}
        mod.load_state_dict(state)
    return meta
