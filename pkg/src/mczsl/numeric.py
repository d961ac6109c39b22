"""Dense-matrix primitives and seeded randomness.

All in-memory computation is float64; matrices are plain 2-D numpy arrays in
C (row-major) order. Randomness comes from numpy's PCG64, a named portable
generator: the same seed produces the same stream on every platform.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError, NumericError, ShapeError


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 stream. Single-owner: do not share across concurrent users."""
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """n independent child streams derived from one seed, in a fixed order."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def check_finite(a: np.ndarray, name: str = "result") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{name} contains non-finite values")
    return a


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit inner-dimension check."""
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul inner dimensions differ: {a.shape} x {b.shape}"
        )
    return check_finite(a @ b, "matmul result")


def softmax(v, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max-subtraction), normalized along `axis`."""
    v = np.asarray(v, dtype=np.float64)
    shifted = v - np.max(v, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def sample_uniform(
    rng: np.random.Generator, rows: int, cols: int, lo: float = 0.0, hi: float = 1.0
) -> np.ndarray:
    """rows x cols matrix of Uniform[lo, hi) draws; deterministic given the stream."""
    if not lo < hi:
        raise ConfigError(f"uniform range requires lo < hi, got [{lo}, {hi})")
    return rng.uniform(lo, hi, size=(rows, cols))
