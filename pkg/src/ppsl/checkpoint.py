"""Versioned binary checkpoints.

Layout: 8-byte magic, uint32 format version, uint32 header length, JSON
header (sorted keys; carries hyperparameters, seed and the parameter
name/shape manifest), then all parameters concatenated as little-endian
float32. Loading rejects any magic or version mismatch.
"""

import json
import struct

import numpy as np
import torch

from .nnops import DTYPE

FORMAT_VERSION = 1

MAGIC = {
    "encoder": b"PPSLENC\x00",
    "agent": b"PPSLAGT\x00",
    "prompt": b"PPSLPRO\x00",
    "embeddings": b"PPSLEMB\x00",
}


def save_checkpoint(path, kind: str, meta: dict, named_arrays: list) -> None:
    """Write ``named_arrays`` ((name, tensor-or-array) pairs) under a header.

    ``meta`` must be JSON-serializable; parameter order is preserved and
    recorded in the header.
    """
    magic = MAGIC[kind]
    manifest = []
    blobs = []
    for name, value in named_arrays:
        arr = value.detach().cpu().numpy() if isinstance(value, torch.Tensor) else np.asarray(value)
        arr = np.ascontiguousarray(arr, dtype="<f4")
        manifest.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = dict(meta)
    header["params"] = manifest
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path, kind: str):
    """Read a checkpoint, returning (meta, ordered {name: float32 ndarray})."""
    magic = MAGIC[kind]
    with open(path, "rb") as fh:
        got = fh.read(len(magic))
        if got != magic:
            raise ValueError(f"{path}: not a {kind} checkpoint (bad magic {got!r})")
        version, header_len = struct.unpack("<II", fh.read(8))
        if version != FORMAT_VERSION:
            raise ValueError(
                f"{path}: format version {version} unsupported (expected {FORMAT_VERSION})"
            )
        header = json.loads(fh.read(header_len).decode("utf-8"))
        manifest = header.pop("params")
        arrays = {}
        for entry in manifest:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(4 * count)
            if len(buf) != 4 * count:
                raise ValueError(f"{path}: truncated payload for {entry['name']}")
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f4").reshape(shape)
        trailing = fh.read(1)
        if trailing:
            raise ValueError(f"{path}: trailing bytes after parameter payload")
    return header, arrays


def tensors_from_arrays(arrays: dict) -> dict:
    """Promote loaded float32 arrays to float64 leaf tensors."""
    return {
        name: torch.as_tensor(arr.astype(np.float64), dtype=DTYPE).requires_grad_(True)
        for name, arr in arrays.items()
    }
