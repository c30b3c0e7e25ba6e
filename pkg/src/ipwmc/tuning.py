"""AIC selection of the missingness penalty and weighted k-fold CV for completion."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .completion import _theta_array, default_a_bound, fit_completion, zero_threshold
from .linalg import SolverError, as_matrix, numerical_rank
from .link import log_likelihood
from .solver import DEFAULT_CONFIG, SolverConfig
from .theta import fit_unconstrained

log = logging.getLogger(__name__)


@dataclass
class GridSearchReport:
    grid: list
    scores: list
    chosen: float
    per_fold_scores: Optional[list] = None
    failed: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"grid": list(self.grid), "scores": list(self.scores), "chosen": self.chosen,
               "failed": list(self.failed)}
        if self.per_fold_scores is not None:
            out["per_fold_scores"] = [list(r) for r in self.per_fold_scores]
        out.update(self.extra)
        return out


def _argmin_smallest(grid, scores):
    """Index of the minimum score; ties go to the smallest grid value."""
    scores = np.asarray(scores, dtype=float)
    best = np.min(scores)
    ties = [i for i, s in enumerate(scores) if s == best]
    return min(ties, key=lambda i: (grid[i], i))


def aic(W, M_hat, f="logistic", rel_tol=1e-8) -> tuple:
    """``-2 loglik + 2 r (n1 + n2 - r)`` with ``r`` the numerical rank of ``M_hat``.

    Returns ``(aic, rank, loglik)``.
    """
    n1, n2 = M_hat.shape
    r = numerical_rank(M_hat, rel_tol)
    ll = log_likelihood(W, M_hat, f)
    return -2.0 * ll + 2.0 * r * (n1 + n2 - r), r, ll


def default_lambda_grid(n1, n2, num=10):
    return list(np.logspace(-2, 2, num) * math.sqrt(max(n1, n2)))


def select_lambda_aic(W, f="logistic", alpha1=5.0, alpha2=5.0, grid=None,
                      cfg: SolverConfig = DEFAULT_CONFIG, *, warm_start=False,
                      mu_split=True, return_fits=False):
    """Pick the nuclear-norm weight of the missingness fit by AIC.

    With ``warm_start`` the grid is traversed from the largest value down and
    each fit starts from the previous solution. A fit that raises scores
    ``+inf`` and is listed in ``failed``.
    """
    W = as_matrix(W, "W")
    if grid is None:
        grid = default_lambda_grid(*W.shape)
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("empty grid")
    if any(g <= 0 for g in grid):
        raise ValueError("grid values must be positive")
    scores = [math.inf] * len(grid)
    ranks = [None] * len(grid)
    fits = [None] * len(grid)
    failed = []
    order = sorted(range(len(grid)), key=lambda i: -grid[i]) if warm_start else range(len(grid))
    prev = None
    for i in order:
        try:
            init = (prev.mu, prev.Z) if (warm_start and prev is not None) else None
            fit = fit_unconstrained(W, f, alpha1, alpha2, grid[i], cfg, init=init,
                                    mu_split=mu_split)
        except SolverError as exc:
            log.warning("lambda=%g failed: %s", grid[i], exc)
            failed.append(grid[i])
            continue
        scores[i], ranks[i], _ = aic(W, fit.M, f)
        fits[i] = fit
        prev = fit
        log.info("lambda=%g aic=%.3f rank=%d iters=%d", grid[i], scores[i], ranks[i],
                 fit.iterations)
    if all(math.isinf(s) for s in scores):
        raise SolverError("every grid point failed")
    best = _argmin_smallest(grid, scores)
    report = GridSearchReport(grid, scores, grid[best], failed=failed, extra={"ranks": ranks})
    if return_fits:
        return report, fits
    return report


def make_folds(W, k=5, seed=0) -> np.ndarray:
    """Assign each observed entry to one of ``k`` folds (``-1`` for unobserved)."""
    W = as_matrix(W, "W")
    if k < 2:
        raise ValueError("need at least two folds")
    idx = np.flatnonzero(W.ravel() != 0)
    if idx.size < k:
        raise ValueError(f"only {idx.size} observed entries for {k} folds; use fewer folds")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(99,))))
    perm = rng.permutation(idx.size)
    folds = np.full(W.size, -1, dtype=np.int64)
    folds[idx[perm]] = np.arange(idx.size) % k
    return folds.reshape(W.shape)


def cv_score(A_hat, Y, theta, held_out) -> float:
    """Self-normalized inverse-probability-weighted validation error."""
    wts = held_out / theta
    return float(np.sum(wts * (A_hat - Y) ** 2) / np.sum(wts))


def default_tau_grid(Y, W, theta, num=10):
    return list(np.logspace(-5, 0, num) * zero_threshold(Y, W, theta))


def select_tau_cv(Y, W, theta, grid=None, k=5, seed=0, cfg: SolverConfig = DEFAULT_CONFIG, *,
                  a_bound=None, warm_start=False, fast_prox=False) -> GridSearchReport:
    """Weighted k-fold cross-validation of the completion penalty ``tau``.

    Observed entries are split uniformly at random into ``k`` folds. For each
    fold and ``tau`` the model is fit on the remaining observed entries and
    scored on the held-out ones by :func:`cv_score`. With ``warm_start`` each
    fold walks the grid from the largest ``tau`` down, starting every fit
    from the previous solution.
    """
    Y, W = as_matrix(Y, "Y"), as_matrix(W, "W")
    theta = _theta_array(theta)
    if grid is None:
        grid = default_tau_grid(Y, W, theta)
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("empty grid")
    if a_bound is None:
        a_bound = default_a_bound(Y, W)
    folds = make_folds(W, k, seed)
    per_fold = np.full((k, len(grid)), np.inf)
    failed = []
    order = sorted(range(len(grid)), key=lambda i: -grid[i]) if warm_start else range(len(grid))
    for fold in range(k):
        held_out = (folds == fold).astype(np.float64)
        train = W * (1.0 - held_out)
        prev = None
        for i in order:
            try:
                res = fit_completion(Y, train, theta, grid[i], a_bound, cfg,
                                     A0=prev if warm_start else None, fast_prox=fast_prox)
            except SolverError as exc:
                log.warning("fold %d tau=%g failed: %s", fold, grid[i], exc)
                failed.append((fold, grid[i]))
                continue
            prev = res.A_hat
            per_fold[fold, i] = cv_score(res.A_hat, Y, theta, held_out)
    scores = per_fold.mean(axis=0)
    if not np.any(np.isfinite(scores)):
        raise SolverError("every grid point failed")
    best = _argmin_smallest(grid, scores)
    return GridSearchReport(grid, [float(s) for s in scores], grid[best],
                            per_fold_scores=per_fold.tolist(), failed=failed,
                            extra={"folds": k, "seed": seed})
