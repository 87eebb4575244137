"""Shared dense-math kernels.

All accumulations run in float64 regardless of payload dtype so results are
reproducible across runs and thread counts.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch

DEFAULT_EPS = 1e-7


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two vectors.

    Zero-norm inputs return 0.0: masked-out support rows are all-zero by
    construction and must read as "no correlation", not an error.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


def minmax_normalize(m: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """(m - min) / (max - min + eps), elementwise. Constant input maps to zeros."""
    m = np.asarray(m, dtype=np.float64)
    lo = m.min()
    hi = m.max()
    return (m - lo) / (hi - lo + eps)


def softmax(z: np.ndarray) -> np.ndarray:
    """Numerically stable softmax (max-subtraction)."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def matvec(m: np.ndarray, p: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if m.ndim != 2 or p.ndim != 1 or m.shape[1] != p.shape[0]:
        raise ShapeMismatch(f"matvec shapes {m.shape} x {p.shape}")
    return m @ p


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul shapes {a.shape} x {b.shape}")
    return a @ b


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"hadamard shapes {a.shape} vs {b.shape}")
    return a * b
