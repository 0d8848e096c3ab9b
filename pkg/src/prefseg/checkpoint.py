"""Checkpoint container: a JSON header manifest followed by concatenated PFT1
tensor blobs. Header carries names, dims, and arbitrary meta (step counters,
hyperparameters); blob order matches the header's tensor list.

Layout: u32 LE header byte length | UTF-8 JSON header | PFT1 blobs.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .tensor_io import FormatError, tensor_from_bytes, tensor_to_bytes


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    blobs = []
    entries = []
    for name in sorted(arrays):
        blob = tensor_to_bytes(np.asarray(arrays[name]))
        entries.append({"name": name, "dims": list(np.asarray(arrays[name]).shape),
                        "bytes": len(blob)})
        blobs.append(blob)
    header = json.dumps({"meta": meta, "tensors": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    buf = Path(path).read_bytes()
    if len(buf) < 4:
        raise FormatError(f"{path}: truncated checkpoint")
    (header_len,) = struct.unpack_from("<I", buf, 0)
    if len(buf) < 4 + header_len:
        raise FormatError(f"{path}: truncated checkpoint header")
    header = json.loads(buf[4 : 4 + header_len].decode("utf-8"))
    arrays = {}
    offset = 4 + header_len
    for entry in header["tensors"]:
        blob = buf[offset : offset + entry["bytes"]]
        arr = tensor_from_bytes(blob)
        if list(arr.shape) != entry["dims"]:
            raise FormatError(f"{path}: tensor {entry['name']} dims mismatch")
        arrays[entry["name"]] = arr
        offset += entry["bytes"]
    if offset != len(buf):
        raise FormatError(f"{path}: trailing bytes after last tensor")
    return arrays, header["meta"]
