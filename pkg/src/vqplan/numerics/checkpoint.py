"""Deterministic binary checkpoint container.

Layout: an 8-byte magic, a big-endian uint64 header length, a canonical
JSON header (sorted keys), then the raw array bytes concatenated in
header order (C order, little-endian). No timestamps anywhere, so
identical inputs produce byte-identical files and round trips are
bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from ..errors import ArtifactMismatchError

MAGIC = b"VQPLANC1"
_DTYPES = {"float64": "<f8", "int64": "<i8"}


def save_arrays(path, arrays: Dict[str, np.ndarray], meta: dict) -> None:
    entries = []
    blobs = []
    for name, arr in arrays.items():
        kind = str(arr.dtype)
        if kind not in _DTYPES:
            raise ArtifactMismatchError(f"unsupported dtype {kind} for '{name}'")
        data = np.ascontiguousarray(arr, dtype=_DTYPES[kind]).tobytes()
        entries.append({"name": name, "dtype": kind, "shape": list(arr.shape),
                        "nbytes": len(data)})
        blobs.append(data)
    header = json.dumps(
        {"format_version": 1, "meta": meta, "entries": entries},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack(">Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_arrays(path) -> Tuple[Dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ArtifactMismatchError(f"{path} is not a checkpoint file")
        (hlen,) = struct.unpack(">Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        arrays: Dict[str, np.ndarray] = {}
        for entry in header["entries"]:
            raw = fh.read(entry["nbytes"])
            if len(raw) != entry["nbytes"]:
                raise ArtifactMismatchError(f"{path} is truncated at '{entry['name']}'")
            arr = np.frombuffer(raw, dtype=_DTYPES[entry["dtype"]])
            arrays[entry["name"]] = arr.reshape(entry["shape"]).astype(
                entry["dtype"], copy=True
            )
    return arrays, header["meta"]
