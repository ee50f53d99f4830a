"""Binary checkpoint format and best-validation checkpointing.

File layout (all integers little-endian):

    magic    8 bytes  b"PSEQCKPT"
    version  u32      currently 1
    meta     u32 length + UTF-8 JSON (epoch, score, model metadata)
    count    u32      number of named parameters, then per parameter:
        name   u16 length + UTF-8 bytes
        width  u8     4 (float32) or 8 (float64)
        ndim   u8
        dims   u32 per dimension
        data   raw little-endian scalars, row-major
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PSEQCKPT"
VERSION = 1
_WIDTH_DTYPE = {4: "<f4", 8: "<f8"}


class CheckpointIOError(IOError):
    """Raised when a checkpoint cannot be read or written."""


def save_checkpoint(path, params: dict, meta: dict | None = None):
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", VERSION))
            meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
            fh.write(struct.pack("<I", len(meta_bytes)))
            fh.write(meta_bytes)
            fh.write(struct.pack("<I", len(params)))
            for name in sorted(params):
                arr = np.ascontiguousarray(params[name])
                width = arr.dtype.itemsize
                if width not in _WIDTH_DTYPE:
                    raise ValueError(f"unsupported parameter dtype {arr.dtype}")
                nb = name.encode("utf-8")
                fh.write(struct.pack("<H", len(nb)))
                fh.write(nb)
                fh.write(struct.pack("<BB", width, arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
                fh.write(arr.astype(_WIDTH_DTYPE[width]).tobytes(order="C"))
    except OSError as exc:
        raise CheckpointIOError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path):
    """Returns (params dict, meta dict)."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointIOError(f"cannot read checkpoint {path}: {exc}") from exc
    if blob[:8] != MAGIC:
        raise CheckpointIOError(f"{path}: bad magic bytes")
    off = 8
    (version,) = struct.unpack_from("<I", blob, off); off += 4
    if version != VERSION:
        raise CheckpointIOError(f"{path}: unsupported version {version}")
    (mlen,) = struct.unpack_from("<I", blob, off); off += 4
    meta = json.loads(blob[off : off + mlen].decode("utf-8")); off += mlen
    (count,) = struct.unpack_from("<I", blob, off); off += 4
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, off); off += 2
        name = blob[off : off + nlen].decode("utf-8"); off += nlen
        width, ndim = struct.unpack_from("<BB", blob, off); off += 2
        shape = struct.unpack_from(f"<{ndim}I", blob, off); off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype=_WIDTH_DTYPE[width], count=size, offset=off)
        off += size * width
        params[name] = arr.reshape(shape).copy()
    return params, meta


class BestCheckpointKeeper:
    """Persists a snapshot only on strict validation-metric improvement."""

    def __init__(self, path):
        self.path = path
        self.best_score = -math.inf
        self.best_epoch = None

    def update(self, score: float, params: dict, meta: dict | None = None) -> bool:
        if not math.isfinite(score):
            raise ValueError(f"validation metric must be finite, got {score}")
        if score <= self.best_score:
            return False
        meta = dict(meta or {})
        meta["val_macro_f1"] = score
        save_checkpoint(self.path, params, meta)
        self.best_score = score
        self.best_epoch = meta.get("epoch")
        return True
