"""Dense matrix helpers and the proximal primitives shared by every solver.

Matrices are plain 2-D ``float64`` numpy arrays. Functions here never modify
their inputs.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg

__all__ = [
    "SolverError",
    "ConvergenceError",
    "SvdResult",
    "as_matrix",
    "svd",
    "svt",
    "clip_entries",
    "mean_center",
    "project_box_mean_zero",
    "norms",
    "numerical_rank",
]

SVD_TOL = 1e-10


class SolverError(RuntimeError):
    """Raised when a numerical routine cannot produce a valid answer."""

    def __init__(self, message, residual=None, last_iterate=None):
        super().__init__(message)
        self.residual = residual
        self.last_iterate = last_iterate


class ConvergenceError(SolverError):
    """An iterative solver hit its iteration cap before its tolerance."""


class SvdResult(NamedTuple):
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray


def as_matrix(x, name="matrix") -> np.ndarray:
    """Validate ``x`` as a finite 2-D float array and return it as float64."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return arr


def _check_same_shape(*arrays):
    shape = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != shape:
            raise ValueError(f"dimension mismatch: {shape} vs {a.shape}")


def svd(M) -> SvdResult:
    """Thin SVD ``M = U diag(s) V^T`` with ``k = min(n1, n2)``.

    Uses LAPACK ``gesdd`` and falls back to the slower but more robust
    ``gesvd`` driver if the divide-and-conquer routine fails to converge.
    """
    M = as_matrix(M)
    try:
        U, s, Vt = scipy.linalg.svd(M, full_matrices=False, lapack_driver="gesdd",
                                    check_finite=False)
    except np.linalg.LinAlgError:
        try:
            U, s, Vt = scipy.linalg.svd(M, full_matrices=False, lapack_driver="gesvd",
                                        check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"SVD did not converge: {exc}",
                              residual=float(np.linalg.norm(M))) from exc
    return SvdResult(U, s, Vt.T)


def svt(M, t: float) -> np.ndarray:
    """Singular value soft-thresholding, the prox of ``t * ||.||_*``."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    M = as_matrix(M)
    if t == 0:
        return M.copy()
    U, s, V = svd(M)
    s = np.maximum(s - t, 0.0)
    k = int(np.count_nonzero(s))
    if k == 0:
        return np.zeros_like(M)
    return (U[:, :k] * s[:k]) @ V[:, :k].T


def clip_entries(M, lo: float, hi: float) -> np.ndarray:
    if lo > hi:
        raise ValueError(f"lo={lo} exceeds hi={hi}")
    return np.clip(as_matrix(M), lo, hi)


def mean_center(Z) -> np.ndarray:
    """Project onto ``{Z : sum(Z) = 0}``."""
    Z = as_matrix(Z)
    return Z - Z.mean()


def project_box_mean_zero(Z, bound: float, tol: float = 1e-13) -> np.ndarray:
    """Euclidean projection onto ``{||X||_inf <= bound, sum(X) = 0}``.

    The projection has the form ``clip(Z - c, -bound, bound)`` where ``c``
    solves a monotone scalar equation; ``c`` is found by bisection.
    """
    Z = as_matrix(Z)
    if bound < 0:
        raise ValueError("bound must be nonnegative")
    if bound == 0:
        return np.zeros_like(Z)

    def excess(c):
        return np.clip(Z - c, -bound, bound).sum()

    lo, hi = Z.min() - bound, Z.max() + bound
    # excess(lo) = n*bound > 0, excess(hi) = -n*bound < 0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
    c = 0.5 * (lo + hi)
    X = np.clip(Z - c, -bound, bound)
    # remove the bisection leftover on the unclipped entries
    free = np.abs(X) < bound
    if np.any(free):
        X[free] -= X.sum() / np.count_nonzero(free)
    return X


def norms(M) -> dict:
    """Frobenius, nuclear, spectral and max-abs norms of ``M``."""
    M = as_matrix(M)
    s = scipy.linalg.svd(M, compute_uv=False, check_finite=False)
    return {
        "frobenius": float(np.linalg.norm(M)),
        "nuclear": float(s.sum()),
        "spectral": float(s[0]) if s.size else 0.0,
        "max_abs": float(np.abs(M).max()),
    }


def nuclear_norm(M) -> float:
    return float(scipy.linalg.svd(as_matrix(M), compute_uv=False, check_finite=False).sum())


def numerical_rank(M, rel_tol: float = 1e-8) -> int:
    """Number of singular values larger than ``rel_tol * sigma_1``."""
    s = scipy.linalg.svd(as_matrix(M), compute_uv=False, check_finite=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > rel_tol * s[0]))
