"""Deterministic SVD / symmetric eigendecomposition and numerical-rank helpers."""

import numpy as np
from scipy import linalg

EPS = np.finfo(np.float64).eps


def sign_flips(vectors: np.ndarray) -> np.ndarray:
    """Signs making the largest-|entry| of each column positive (ties to the lowest index)."""
    if vectors.size == 0:
        return np.ones(vectors.shape[1] if vectors.ndim == 2 else 0)
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def svd(y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD with the sign convention applied to each singular triplet."""
    u, s, vt = linalg.svd(y, full_matrices=False, lapack_driver="gesdd")
    signs = sign_flips(u)
    return u * signs, s, vt * signs[:, None]


def eigh_desc(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in nonincreasing order with sign-normalized orthonormal eigenvectors."""
    sym = (a + a.T) / 2.0
    values, vectors = linalg.eigh(sym)
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = vectors[:, order]
    return values, vectors * sign_flips(vectors)


def rank_cutoff(top: float, dim: int) -> float:
    """Values at or below dim * eps * top are numerically zero."""
    return max(dim, 1) * EPS * max(top, 0.0)


def numerical_rank(values: np.ndarray, dim: int) -> int:
    """Count of nonincreasing values above the cutoff set by the largest one."""
    if values.size == 0:
        return 0
    cutoff = rank_cutoff(float(values[0]), dim)
    return int(np.count_nonzero(values > cutoff))


def pinv_psd(a: np.ndarray, rank: int | None = None) -> np.ndarray:
    """Pseudoinverse of a symmetric PSD matrix, optionally truncated to its top `rank` eigenpairs."""
    if a.size == 0:
        return a.copy()
    values, vectors = eigh_desc(a)
    keep = numerical_rank(values, a.shape[0])
    if rank is not None:
        keep = min(keep, rank)
    if keep == 0:
        return np.zeros_like(a)
    kept = vectors[:, :keep]
    return (kept / values[:keep]) @ kept.T


def near_ties(values: np.ndarray, gap: float = 1e-6) -> list[int]:
    """Indices i where values[i] - values[i + 1] < gap."""
    if values.size < 2:
        return []
    return [int(i) for i in np.flatnonzero(np.abs(np.diff(values)) < gap)]
