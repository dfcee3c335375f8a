"""Dense kernels, nonlinearities and seeded random streams.

Everything is float64. Vectors are 1-D numpy arrays and matrices 2-D
row-major (C-ordered) arrays; the functions also accept leading batch
axes where that is natural (nonlinearities, softmax).

Random streams are numpy ``Generator`` objects backed by PCG64. Child
streams for parallel lanes come from ``SeedSequence([seed, lane, ...])``.
"""
from __future__ import annotations

import numpy as np

DTYPE = np.float64
PROB_FLOOR = 1e-30


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_vector(v) -> np.ndarray:
    return np.asarray(v, dtype=DTYPE)


def matvec(m, v) -> np.ndarray:
    m = np.asarray(m, dtype=DTYPE)
    v = np.asarray(v, dtype=DTYPE)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise DimensionError(f"matvec: matrix {m.shape} incompatible with vector {v.shape}")
    return m @ v


def sigmoid(x) -> np.ndarray:
    # piecewise form keeps exp() arguments non-positive
    x = np.asarray(x, dtype=DTYPE)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=DTYPE))


def softmax(x, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(x, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    z = x - np.max(x, axis=axis, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def cross_entropy(probs, label: int) -> float:
    """Negative log-probability of ``label`` under ``probs``."""
    probs = np.asarray(probs, dtype=DTYPE)
    if not 0 <= label < probs.shape[-1]:
        raise IndexError(f"label {label} out of range for {probs.shape[-1]} classes")
    return float(-np.log(max(probs[label], PROB_FLOOR)))


def seeded_rng(seed: int) -> np.random.Generator:
    """Deterministic stream: ``random()`` in [0, 1), ``standard_normal()``,
    ``integers(lo, hi)`` with ``lo`` inclusive and ``hi`` exclusive."""
    return np.random.Generator(np.random.PCG64(seed))


def child_rng(seed: int, *lanes: int) -> np.random.Generator:
    """Independent stream for lane ``lanes`` derived from ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *lanes])))
