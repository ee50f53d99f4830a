"""Shared test utilities: central finite differences at 64-bit."""

import numpy as np
import pytest


def central_diff(fn, arr, coords, h=1e-5):
    """Numeric partial derivatives of scalar ``fn()`` w.r.t. arr[coords]."""
    out = []
    for idx in coords:
        orig = arr[idx]
        arr[idx] = orig + h
        plus = fn()
        arr[idx] = orig - h
        minus = fn()
        arr[idx] = orig
        out.append((plus - minus) / (2.0 * h))
    return np.array(out)


def sample_coords(rng, shape, count):
    """Up to ``count`` distinct multi-indices of an array shape."""
    size = int(np.prod(shape))
    flat = rng.choice(size, size=min(count, size), replace=False)
    return [np.unravel_index(i, shape) for i in np.atleast_1d(flat)]


def max_rel_err(numeric, analytic):
    denom = np.maximum(1e-8, np.maximum(np.abs(numeric), np.abs(analytic)))
    return float(np.max(np.abs(numeric - analytic) / denom))


def check_grads(fn, arr, analytic, rng, count=60, h=1e-5, tol=1e-4):
    coords = sample_coords(rng, arr.shape, count)
    numeric = central_diff(fn, arr, coords, h=h)
    got = np.array([analytic[idx] for idx in coords])
    err = max_rel_err(numeric, got)
    assert err <= tol, f"max relative error {err} over {len(coords)} coords"
    return len(coords)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
