"""Minimal dense numeric kernel shared by every model in the package.

All arrays are plain numpy ndarrays in row-major (C) order.  Two scalar
widths are supported: float32 for training, float64 for gradient checks
and oracle suites.  Every op here is a pure function; nothing keeps
internal mutable state, so concurrent use is safe.
"""

from __future__ import annotations

import zlib

import numpy as np

FLOAT32 = np.float32
FLOAT64 = np.float64

DEFAULT_DTYPE = FLOAT32


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_array(x, dtype=DEFAULT_DTYPE) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(x, dtype=dtype))


def log_sum_exp(x, axis=-1):
    """log(sum(exp(x))) with max-subtraction stabilization.

    Works on the given axis; a 1-d input with the default axis returns a
    scalar.  Empty inputs are a domain error.
    """
    x = np.asarray(x)
    if x.size == 0:
        raise ValueError("log_sum_exp of empty input")
    m = np.max(x, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def softmax(x, axis=-1):
    """Stable softmax along `axis`; rows sum to 1, argmax preserved."""
    x = np.asarray(x)
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / np.sum(e, axis=axis, keepdims=True)


def matmul(a, b) -> np.ndarray:
    """Matrix product with explicit shape checking.

    Reduction order is numpy's fixed blocked order, which is identical
    across repeated runs with the same inputs and thread count.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions disagree: {a.shape} @ {b.shape}")
    return a @ b


def _consumer_key(name: str) -> int:
    # crc32 is stable across platforms and python versions, unlike hash().
    return zlib.crc32(name.encode("utf-8"))


class RngState:
    """Seeded PRNG with named, independent substreams.

    Each consumer name maps to its own PCG64 stream derived from
    ``SeedSequence(seed, spawn_key=(crc32(name),))``, so adding a new
    consumer never perturbs the streams of existing ones and identical
    (seed, name) pairs produce identical scalars on every platform.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def consumer(self, name: str) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(_consumer_key(name),))
        return np.random.Generator(np.random.PCG64(ss))
