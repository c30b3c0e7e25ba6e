"""Comparator probability estimators and evaluation metrics."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .linalg import _check_same_shape, as_matrix, numerical_rank
from .link import EPS_P
from .theta import Provenance, ThetaEstimate

__all__ = [
    "HellingerNorm",
    "MetricReport",
    "nw_estimator",
    "uniform_estimator",
    "rmse",
    "hellinger_sq",
    "test_error",
    "rmspe",
    "numerical_rank",
]


class HellingerNorm(enum.Enum):
    MEAN = "mean"
    SQRT_N = "sqrtn"


@dataclass
class MetricReport:
    """Bundle of optional evaluation metrics; present values are finite and >= 0."""

    rmse: Optional[float] = None
    hellinger_sq: Optional[float] = None
    test_error: Optional[float] = None
    rmspe: Optional[float] = None
    rank_M: Optional[int] = None
    rank_A: Optional[int] = None

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v is not None and not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{k} must be finite and nonnegative, got {v}")

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def _clamp(theta):
    return np.clip(theta, EPS_P, 1.0 - EPS_P)


def _mask(W):
    W = as_matrix(W, "W")
    if not np.all((W == 0) | (W == 1)):
        raise ValueError("mask W must be binary")
    return W


def nw_estimator(W, normalized: bool = False) -> ThetaEstimate:
    """Rank-one estimate from row and column observation rates.

    ``theta_ij = g_i * g_j`` with ``g_i`` the row-``i`` mean and ``g_j`` the
    column-``j`` mean of ``W``. With ``normalized=True`` the product is
    divided by the overall mean, the moment estimator of a rank-one
    probability model ``r_i c_j`` (its entries then average to the observed
    fraction).
    """
    W = _mask(W)
    theta = np.outer(W.mean(axis=1), W.mean(axis=0))
    if normalized:
        total = W.mean()
        if total > 0:
            theta = theta / total
    return ThetaEstimate(_clamp(theta), Provenance.NW)


def uniform_estimator(W) -> ThetaEstimate:
    W = _mask(W)
    return ThetaEstimate(np.full(W.shape, _clamp(W.mean())), Provenance.UNIFORM)


def rmse(B, C) -> float:
    B, C = as_matrix(B, "B"), as_matrix(C, "C")
    _check_same_shape(B, C)
    return float(np.linalg.norm(B - C) / math.sqrt(B.size))


def hellinger_sq(S, T, normalization="mean") -> float:
    """Summed entrywise squared Hellinger distance between Bernoulli matrices.

    ``normalization`` divides the sum by ``n1 n2`` (``"mean"``) or by
    ``sqrt(n1 n2)`` (``"sqrtn"``).
    """
    S, T = as_matrix(S, "S"), as_matrix(T, "T")
    _check_same_shape(S, T)
    if S.min() < 0 or S.max() > 1 or T.min() < 0 or T.max() > 1:
        raise ValueError("probability matrices must have entries in [0, 1]")
    norm = HellingerNorm(normalization.value if isinstance(normalization, HellingerNorm)
                         else str(normalization).lower())
    total = float(np.sum((np.sqrt(S) - np.sqrt(T)) ** 2
                         + (np.sqrt(1.0 - S) - np.sqrt(1.0 - T)) ** 2))
    return total / (S.size if norm is HellingerNorm.MEAN else math.sqrt(S.size))


def test_error(A_hat, A_star, W) -> float:
    """Relative squared error on the unobserved entries."""
    A_hat, A_star, W = as_matrix(A_hat, "A_hat"), as_matrix(A_star, "A_star"), as_matrix(W, "W")
    _check_same_shape(A_hat, A_star, W)
    missing = 1.0 - W
    denom = float(np.sum((missing * A_star) ** 2))
    if denom == 0:
        raise ValueError("A_star vanishes on every unobserved entry")
    return float(np.sum((missing * (A_hat - A_star)) ** 2)) / denom


def rmspe(A_hat, Y_test, W_test) -> float:
    A_hat, Y_test, W_test = (as_matrix(A_hat, "A_hat"), as_matrix(Y_test, "Y_test"),
                             as_matrix(W_test, "W_test"))
    _check_same_shape(A_hat, Y_test, W_test)
    count = float(W_test.sum())
    if count <= 0:
        raise ValueError("empty test set")
    return float(np.linalg.norm(W_test * (A_hat - Y_test)) / math.sqrt(count))
