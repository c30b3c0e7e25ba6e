"""Solver configuration, the ADMM prox engine and the monotone APG driver.

Both estimation problems in this package have the form

    minimize  smooth(x) + penalty(x)   over a convex set,

where the penalty is a nuclear norm and the set is a box (plus, for the
missingness model, a mean-zero hyperplane). They share one accelerated
proximal gradient loop with backtracking and function-value restart, and one
ADMM routine that evaluates the constrained nuclear-norm prox exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .linalg import ConvergenceError, SolverError, clip_entries, mean_center, \
    project_box_mean_zero, svt


@dataclass(frozen=True)
class SolverConfig:
    L0: float = 0.25
    backtrack_factor: float = 2.0
    max_outer_iters: int = 500
    max_admm_iters: int = 2000
    outer_tol: float = 1e-6
    admm_tol: float = 1e-8
    u: float = 1.0

    def __post_init__(self):
        for name in ("L0", "outer_tol", "admm_tol", "u"):
            if not getattr(self, name) > 0:
                raise ValueError(f"SolverConfig.{name} must be positive")
        if not self.backtrack_factor > 1:
            raise ValueError("SolverConfig.backtrack_factor must exceed 1")
        if self.max_outer_iters < 1 or self.max_admm_iters < 1:
            raise ValueError("iteration caps must be positive")


DEFAULT_CONFIG = SolverConfig()


# ---------------------------------------------------------------------------
# ADMM for  argmin 1/2||X - T||^2 + w||X||_*  s.t. ||X||_inf <= bound
#                                             [and sum(X) = 0]
# ---------------------------------------------------------------------------

@dataclass
class AdmmState:
    """Split variables and duals, kept so a later call can warm start."""
    G2: np.ndarray
    H2: np.ndarray
    G1: Optional[np.ndarray] = None
    H1: Optional[np.ndarray] = None
    iterations: int = 0
    residual: float = 0.0
    u: Optional[float] = None


def project_feasible(X, bound, mean_zero=False):
    """Projection onto the box, intersected with ``sum = 0`` if requested."""
    if mean_zero:
        if math.isinf(bound):
            return mean_center(X)
        return project_box_mean_zero(X, bound)
    return clip_entries(X, -bound, bound)


def admm_nuclear_box(T, w, bound, cfg: SolverConfig = DEFAULT_CONFIG, *,
                     mean_zero=False, state: Optional[AdmmState] = None):
    """Exact constrained nuclear-norm prox by ADMM.

    With ``mean_zero`` the three-block splitting ``Z = G1 = G2`` is used
    (``G1`` carries the hyperplane, ``G2`` the box and the quadratic);
    otherwise the two-block splitting ``Z = G2``. Returns ``(X, state)``
    where ``X`` is the final nuclear block projected onto the feasible set.

    The penalty starts at ``cfg.u`` and is rebalanced by a factor 1.5 when
    the primal and dual residuals differ by more than 2x. The duals are kept
    unscaled, so a change of penalty needs no rescaling.
    """
    u = cfg.u if state is None or state.u is None else state.u
    if w < 0:
        raise ValueError("prox weight must be nonnegative")
    if bound < 0:
        raise ValueError("box bound must be nonnegative")
    if w == 0:
        X = project_feasible(T, bound, mean_zero)
        return X, AdmmState(G2=X, H2=np.zeros_like(X))
    if not mean_zero:
        X = svt(T, w)
        if np.abs(X).max() <= bound:
            return X, AdmmState(G2=X, H2=np.zeros_like(X))

    if state is None or state.G2.shape != T.shape:
        G2 = project_feasible(T, bound, mean_zero)
        H2 = np.zeros_like(T)
        G1 = G2.copy() if mean_zero else None
        H1 = np.zeros_like(T) if mean_zero else None
    else:
        G2, H2 = state.G2, state.H2
        G1 = state.G1 if state.G1 is not None else (G2.copy() if mean_zero else None)
        H1 = state.H1 if state.H1 is not None else (np.zeros_like(T) if mean_zero else None)

    residual = np.inf
    Z = G2
    for k in range(1, cfg.max_admm_iters + 1):
        if mean_zero:
            Z = svt(0.5 * (G1 + G2) + (H1 + H2) / (2.0 * u), w / (2.0 * u))
            G1_new = mean_center(Z - H1 / u)
        else:
            Z = svt(G2 + H2 / u, w / u)
        G2_new = np.clip((T + u * Z - H2) / (1.0 + u), -bound, bound)
        H2 = H2 - u * (Z - G2_new)
        primal = np.linalg.norm(Z - G2_new)
        dual = u * np.linalg.norm(G2_new - G2)
        if mean_zero:
            H1 = H1 - u * (Z - G1_new)
            primal = max(primal, np.linalg.norm(Z - G1_new))
            dual = max(dual, u * np.linalg.norm(G1_new - G1))
            G1 = G1_new
        G2 = G2_new
        residual = max(primal, dual) / max(1.0, np.linalg.norm(Z))
        if residual <= cfg.admm_tol:
            break
        if primal > 2.0 * dual:
            u *= 1.5
        elif dual > 2.0 * primal:
            u /= 1.5
    else:
        raise ConvergenceError(
            f"ADMM did not reach tolerance {cfg.admm_tol:g} in {cfg.max_admm_iters} "
            f"iterations (residual {residual:.3e})",
            residual=residual, last_iterate=project_feasible(Z, bound, mean_zero))
    X = project_feasible(Z, bound, mean_zero)
    return X, AdmmState(G2=G2, H2=H2, G1=G1, H1=H1, iterations=k, residual=residual, u=u)


# ---------------------------------------------------------------------------
# Monotone accelerated proximal gradient
# ---------------------------------------------------------------------------

@dataclass
class ApgResult:
    x: Any
    objective: float
    iterations: int
    L: float
    history: list = field(default_factory=list)
    converged: bool = True


class CompositeProblem:
    """Interface used by :func:`monotone_apg`.

    Points may be any object; subclasses define arithmetic via
    :meth:`extrapolate` and the quadratic model via :meth:`model_excess`.
    """

    def smooth(self, x) -> float:
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def penalty(self, x) -> float:
        raise NotImplementedError

    def prox_step(self, y, g, L):
        """Minimizer of the quadratic model at ``y`` with constant ``L``."""
        raise NotImplementedError

    def model_excess(self, x, y, g, L) -> float:
        """``<g, x - y> + L/2 ||x - y||^2`` in the problem's metric."""
        raise NotImplementedError

    def extrapolate(self, x, x_prev, coef):
        """``x + coef * (x - x_prev)``."""
        raise NotImplementedError


def monotone_apg(problem: CompositeProblem, x0, cfg: SolverConfig, L0: float,
                 strict: bool = True) -> ApgResult:
    """FISTA with backtracking and function-value restart.

    A candidate is accepted only if it does not increase the objective; a
    rejected candidate resets the momentum and the next step is a plain
    proximal gradient step from the last accepted point. The accepted
    objective sequence is therefore nonincreasing.
    """
    x = x0
    fx = problem.smooth(x) + problem.penalty(x)
    history = [fx]
    y, t, L = x, 1.0, float(L0)
    at_anchor = True  # y coincides with x
    rel = np.inf
    # relative change; the floor only matters for objectives that approach zero
    floor = 1e-10 * max(1.0, abs(fx))
    for k in range(1, cfg.max_outer_iters + 1):
        fy = problem.smooth(y)
        gy = problem.grad(y)
        while True:
            z = problem.prox_step(y, gy, L)
            fz = problem.smooth(z)
            bound = fy + problem.model_excess(z, y, gy, L)
            if fz <= bound + 1e-12 * max(1.0, abs(fy)):
                break
            L *= cfg.backtrack_factor
            if not np.isfinite(L) or L > 1e300:
                raise SolverError("backtracking diverged", last_iterate=x)
        Fz = fz + problem.penalty(z)
        if Fz <= fx:
            rel = (fx - Fz) / max(abs(fx), floor)
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = problem.extrapolate(z, x, (t - 1.0) / t_next)
            x, fx, t = z, Fz, t_next
            at_anchor = False
            history.append(fx)
            if rel < cfg.outer_tol:
                return ApgResult(x, fx, k, L, history)
        elif at_anchor:
            # a plain step from the accepted point cannot improve it: the
            # remaining gap is below what the inexact prox resolves
            return ApgResult(x, fx, k, L, history)
        else:
            y, t, at_anchor = x, 1.0, True
    if strict:
        raise ConvergenceError(
            f"APG did not reach tolerance {cfg.outer_tol:g} in {cfg.max_outer_iters} "
            f"iterations (last relative change {rel:.3e})",
            residual=rel, last_iterate=x)
    return ApgResult(x, fx, cfg.max_outer_iters, L, history, converged=False)
