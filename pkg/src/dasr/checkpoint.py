"""Versioned binary checkpoint container for named float32 tensors.

Layout (all integers little-endian):
    magic "DASR" | u16 version=1 | u8 kind | u32 metadata length | metadata
    (UTF-8 JSON, sorted keys) | u32 tensor count | per tensor: u16 name
    length, name UTF-8, u8 rank, rank x u64 dims, float32 payload.

Metadata round-trips through ``json.dumps(..., sort_keys=True)`` and tensors
keep insertion order, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ConfigError

MAGIC = b"DASR"
VERSION = 1
KIND_DIM = 1
KIND_CB = 2


def _dump_meta(metadata: dict) -> bytes:
    return json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(path, kind: int, metadata: dict, tensors: dict[str, np.ndarray]) -> None:
    if kind not in (KIND_DIM, KIND_CB):
        raise ConfigError(f"unknown checkpoint kind {kind}")
    meta = _dump_meta(metadata)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HB", VERSION, kind))
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        fh.write(struct.pack("<I", len(tensors)))
        for name, array in tensors.items():
            encoded = name.encode("utf-8")
            # asarray keeps rank 0 (ascontiguousarray would promote to rank 1)
            arr = np.asarray(array, dtype="<f4")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path):
    """Returns (kind, metadata, tensors) with tensors in file order."""
    with open(path, "rb") as fh:
        blob = fh.read()
    view = memoryview(blob)
    if blob[:4] != MAGIC:
        raise ConfigError(f"{path}: not a checkpoint file (bad magic {blob[:4]!r})")
    version, kind = struct.unpack_from("<HB", view, 4)
    if version != VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version}")
    if kind not in (KIND_DIM, KIND_CB):
        raise ConfigError(f"{path}: unknown checkpoint kind {kind}")
    pos = 7
    (meta_len,) = struct.unpack_from("<I", view, pos)
    pos += 4
    metadata = json.loads(bytes(view[pos : pos + meta_len]).decode("utf-8"))
    pos += meta_len
    (count,) = struct.unpack_from("<I", view, pos)
    pos += 4
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", view, pos)
        pos += 2
        name = bytes(view[pos : pos + name_len]).decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<B", view, pos)
        pos += 1
        dims = struct.unpack_from(f"<{rank}Q", view, pos)
        pos += 8 * rank
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        arr = np.frombuffer(view, dtype="<f4", count=n, offset=pos).reshape(dims)
        pos += 4 * n
        tensors[name] = np.array(arr, dtype=np.float32)
    if pos != len(blob):
        raise ConfigError(f"{path}: {len(blob) - pos} trailing bytes after tensor table")
    return kind, metadata, tensors
