"""Dense float64 helpers and seeded randomness.

Vectors and matrices are plain ``numpy.ndarray`` objects in float64. Random
matrices come from ``numpy.random.default_rng(seed)`` (PCG64) via
``standard_normal`` scaled by ``std``; given the same seed, shape and numpy
version the draw is bit-identical.
"""

from __future__ import annotations

import numpy as np


def as_vector(v, name: str = "vector") -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def matvec(m, v) -> np.ndarray:
    """Return ``m @ v``, checking shapes and finiteness."""
    m = as_matrix(m)
    v = as_vector(v)
    if m.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: {m.shape} x ({v.shape[0]},)")
    return m @ v


def softmax(scores, scale: float = 1.0) -> np.ndarray:
    """Softmax of ``scale * scores`` with max-subtraction."""
    x = np.asarray(scores, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("softmax needs a non-empty one-dimensional input")
    if not np.isfinite(scale):
        raise ValueError("scale must be finite")
    z = scale * x
    if not np.all(np.isfinite(z)):
        raise ValueError("scores must be finite")
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def log_softmax(scores, scale: float = 1.0) -> np.ndarray:
    z = scale * np.asarray(scores, dtype=np.float64)
    z = z - z.max()
    return z - np.log(np.exp(z).sum())


def seeded_gaussian_matrix(seed: int, rows: int, cols: int, std: float = 1.0) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    if not std > 0:
        raise ValueError("std must be positive")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((rows, cols)) * std


def child_seeds(seed: int, n: int) -> list[int]:
    """Derive ``n`` independent 64-bit seeds from a root seed."""
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in ss.spawn(n)]
