"""Inverse-probability-weighted, nuclear-norm-regularized matrix completion."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linalg import as_matrix, clip_entries, nuclear_norm, numerical_rank, svt
from .solver import DEFAULT_CONFIG, CompositeProblem, SolverConfig, admm_nuclear_box, \
    monotone_apg
from .theta import ThetaEstimate


@dataclass
class CompletionResult:
    A_hat: np.ndarray
    tau: float
    a_bound: float
    numerical_rank: int
    iterations: int
    final_objective: float
    history: list = field(default_factory=list, repr=False)

    def report(self) -> dict:
        return {
            "tau": self.tau,
            "a_bound": self.a_bound,
            "rank": self.numerical_rank,
            "objective": self.final_objective,
            "iterations": self.iterations,
        }


def _theta_array(theta) -> np.ndarray:
    if isinstance(theta, ThetaEstimate):
        return theta.theta
    theta = as_matrix(theta, "theta")
    if theta.min() <= 0:
        raise ValueError("theta entries must be positive")
    return theta


def weighted_risk(A, Y, W, theta) -> float:
    """``(n1 n2)^-1 * sum_ij w_ij / theta_ij * (a_ij - y_ij)^2``."""
    A, Y, W = as_matrix(A, "A"), as_matrix(Y, "Y"), as_matrix(W, "W")
    theta = _theta_array(theta)
    R = W * (A - Y)
    return float(np.sum(R * R / theta) / A.size)


def default_a_bound(Y, W) -> float:
    """``1.2 * max |y_ij|`` over observed entries."""
    observed = np.abs(Y[W != 0])
    if observed.size == 0 or observed.max() == 0:
        return 1.0
    return 1.2 * float(observed.max())


def prox_nuclear_box(T, w, a_bound, cfg: SolverConfig = DEFAULT_CONFIG) -> np.ndarray:
    """``argmin 1/2||X - T||^2 + w||X||_*`` subject to ``||X||_inf <= a_bound``.

    Exact up to the ADMM tolerance; when the box is inactive at ``svt(T, w)``
    that matrix is returned directly.
    """
    X, _ = admm_nuclear_box(as_matrix(T, "T"), w, a_bound, cfg, mean_zero=False)
    return X


class _WeightedLeastSquares(CompositeProblem):
    def __init__(self, Y, D, tau, a_bound, cfg, fast_prox=False):
        self.Y = Y
        self.D = D  # w_ij / theta_ij
        self.scale = 1.0 / Y.size
        self.tau = tau
        self.a_bound = a_bound
        self.cfg = cfg
        self.fast_prox = fast_prox
        self.state = None

    def smooth(self, A):
        R = A - self.Y
        return self.scale * float(np.sum(self.D * R * R))

    def grad(self, A):
        return 2.0 * self.scale * self.D * (A - self.Y)

    def penalty(self, A):
        return self.tau * nuclear_norm(A) if self.tau else 0.0

    def prox_step(self, A, g, L):
        T = A - g / L
        if self.fast_prox:
            # svt followed by clipping: cheap, not the exact composed prox
            return clip_entries(svt(T, self.tau / L), -self.a_bound, self.a_bound)
        X, self.state = admm_nuclear_box(T, self.tau / L, self.a_bound, self.cfg,
                                         state=self.state)
        return X

    def model_excess(self, X, A, g, L):
        d = X - A
        return float(np.vdot(g, d)) + 0.5 * L * float(np.vdot(d, d))

    def extrapolate(self, X, X_prev, coef):
        return X + coef * (X - X_prev)


def fit_completion(Y, W, theta, tau, a_bound=None, cfg: SolverConfig = DEFAULT_CONFIG, *,
                   A0=None, fast_prox=False, L0=None) -> CompletionResult:
    """Minimize ``weighted_risk(A) + tau * ||A||_*`` over ``||A||_inf <= a_bound``.

    Unobserved entries of ``Y`` are ignored. ``a_bound`` defaults to
    :func:`default_a_bound`. The step size starts from the curvature of an
    average observed entry and backtracks upward.
    """
    Y, W = as_matrix(Y, "Y"), as_matrix(W, "W")
    theta = _theta_array(theta)
    if Y.shape != W.shape or Y.shape != theta.shape:
        raise ValueError("Y, W and theta must share a shape")
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if a_bound is None:
        a_bound = default_a_bound(Y, W)
    if not a_bound > 0:
        raise ValueError("a_bound must be positive")
    Y = np.where(W != 0, Y, 0.0)
    D = W / theta
    problem = _WeightedLeastSquares(Y, D, float(tau), float(a_bound), cfg, fast_prox)

    if L0 is None:
        observed = D[W != 0]
        L0 = 2.0 * problem.scale * (float(np.median(observed)) if observed.size else 1.0)
    x0 = np.zeros_like(Y) if A0 is None else clip_entries(A0, -a_bound, a_bound)
    res = monotone_apg(problem, x0, cfg, L0)
    A_hat = res.x
    rank = numerical_rank(A_hat) if np.any(A_hat) else 0
    return CompletionResult(A_hat, float(tau), float(a_bound), rank, res.iterations,
                            res.objective, res.history)


def zero_threshold(Y, W, theta) -> float:
    """Smallest ``tau`` for which ``A = 0`` is optimal (box inactive).

    Equals the spectral norm of the smooth-part gradient at zero,
    ``2/(n1 n2) * sigma_1(W o Theta^-1 o Y)``.
    """
    Y, W = as_matrix(Y, "Y"), as_matrix(W, "W")
    G = W * np.where(W != 0, Y, 0.0) / _theta_array(theta)
    s = np.linalg.svd(G, compute_uv=False)
    return 2.0 * float(s[0]) / Y.size
