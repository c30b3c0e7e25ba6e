"""Penalized maximum likelihood for the observation probabilities.

The linear predictor is split as ``M = mu * J + Z`` with ``sum(Z) = 0``; only
``Z`` carries the nuclear-norm penalty. The fit is a monotone accelerated
proximal gradient loop whose ``Z`` step is a three-block ADMM prox. A second
fit re-estimates ``Z`` under a tighter entrywise bound with ``mu`` frozen.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linalg import as_matrix, clip_entries, nuclear_norm
from .link import EPS_P, LinkFunction, grad_M, link_inverse, \
    link_value, log_likelihood
from .solver import DEFAULT_CONFIG, AdmmState, CompositeProblem, SolverConfig, \
    admm_nuclear_box, monotone_apg, project_feasible


class Provenance(enum.Enum):
    UNCONSTRAINED = "unconstrained"
    REFIT_BETA = "refit_beta"
    WINSORIZED_BETA = "winsorized_beta"
    NW = "nw"
    UNIFORM = "uniform"
    KNOWN = "known"


@dataclass
class PredictorDecomposition:
    """``M = mu * J + Z`` plus the diagnostics of the fit that produced it."""
    mu: float
    Z: np.ndarray
    lam: Optional[float] = None
    objective: Optional[float] = None
    iterations: Optional[int] = None
    history: list = field(default_factory=list, repr=False)

    @property
    def M(self) -> np.ndarray:
        return self.mu + self.Z


@dataclass
class ThetaEstimate:
    theta: np.ndarray
    provenance: Provenance
    beta: Optional[float] = None
    decomposition: Optional[PredictorDecomposition] = None

    def __post_init__(self):
        self.theta = as_matrix(self.theta, "theta")
        self.provenance = Provenance(self.provenance)
        if self.theta.min() < EPS_P or self.theta.max() > 1.0 - EPS_P:
            raise ValueError("theta entries must lie in [eps, 1 - eps]")
        if self.provenance in (Provenance.REFIT_BETA, Provenance.WINSORIZED_BETA):
            if self.beta is None:
                raise ValueError(f"{self.provenance.value} estimate needs beta")
            if self.decomposition is not None and \
                    np.abs(self.decomposition.Z).max() > self.beta + 1e-9:
                raise ValueError("||Z||_inf exceeds beta")

    @property
    def theta_L(self) -> float:
        return float(self.theta.min())

    @property
    def theta_U(self) -> float:
        return float(self.theta.max())


class _MaskLikelihood(CompositeProblem):
    """``-loglik(W, mu*J + Z) + lam ||Z||_*`` over the configured constraints.

    Points are ``(mu, Z)`` tuples. With ``fixed_mu`` the mean is frozen and
    only ``Z`` moves.
    """

    def __init__(self, W, f, lam, alpha1, bound, cfg, fixed_mu=None, mean_zero=True):
        self.W = W
        self.f = f
        self.lam = lam
        self.alpha1 = alpha1
        self.bound = bound
        self.cfg = cfg
        self.fixed_mu = fixed_mu
        self.mean_zero = mean_zero
        self.size = W.size
        self.admm_state: Optional[AdmmState] = None
        self.admm_iterations = 0

    def smooth(self, x):
        mu, Z = x
        return -log_likelihood(self.W, mu + Z, self.f)

    def grad(self, x):
        mu, Z = x
        gZ = -grad_M(self.W, mu + Z, self.f)
        return float(gZ.sum()), gZ

    def penalty(self, x):
        return self.lam * nuclear_norm(x[1]) if self.lam else 0.0

    def prox_step(self, y, g, L):
        mu_y, Z_y = y
        g_mu, g_Z = g
        if self.fixed_mu is None:
            mu = float(np.clip(mu_y - g_mu / (L * self.size), -self.alpha1, self.alpha1))
        else:
            mu = self.fixed_mu
        Z, self.admm_state = admm_nuclear_box(
            Z_y - g_Z / L, self.lam / L, self.bound, self.cfg,
            mean_zero=self.mean_zero, state=self.admm_state)
        self.admm_iterations += self.admm_state.iterations
        return mu, Z

    def model_excess(self, x, y, g, L):
        d_mu = x[0] - y[0]
        dZ = x[1] - y[1]
        lin = g[0] * d_mu + float(np.vdot(g[1], dZ))
        quad = 0.5 * L * (self.size * d_mu * d_mu + float(np.vdot(dZ, dZ)))
        return lin + quad

    def extrapolate(self, x, x_prev, coef):
        return x[0] + coef * (x[0] - x_prev[0]), x[1] + coef * (x[1] - x_prev[1])


def _validate_mask(W):
    W = as_matrix(W, "W")
    if not np.all((W == 0) | (W == 1)):
        raise ValueError("mask W must be binary")
    return W


def fit_unconstrained(W, f="logistic", alpha1=5.0, alpha2=5.0, lam=1.0,
                      cfg: SolverConfig = DEFAULT_CONFIG, *, init=None,
                      mu_split=True) -> PredictorDecomposition:
    """Fit ``(mu, Z)`` maximizing ``loglik(W, mu*J + Z) - lam * ||Z||_*``.

    Constraints: ``|mu| <= alpha1``, ``||Z||_inf <= alpha2``, ``sum(Z) = 0``.
    With ``mu_split=False`` the mean is pinned at zero and ``Z`` (then the
    whole predictor) is penalized without the mean-zero constraint.

    ``init`` optionally gives a starting ``(mu, Z)``; the default starts from
    the uniform model matching the observed fraction.
    """
    W = _validate_mask(W)
    f = LinkFunction.parse(f)
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if alpha2 <= 0 or (mu_split and alpha1 <= 0):
        raise ValueError("alpha1 and alpha2 must be positive")
    if mu_split:
        problem = _MaskLikelihood(W, f, lam, alpha1, alpha2, cfg)
    else:
        problem = _MaskLikelihood(W, f, lam, 0.0, alpha2, cfg, fixed_mu=0.0, mean_zero=False)

    if init is None:
        if mu_split:
            with np.errstate(divide="ignore"):
                mu0 = float(np.clip(link_inverse(f, W.mean()), -alpha1, alpha1))
        else:
            mu0 = 0.0
        x0 = (mu0, np.zeros_like(W))
    else:
        mu0, Z0 = init
        Z0 = as_matrix(Z0, "Z0")
        if mu_split:
            x0 = (float(np.clip(mu0, -alpha1, alpha1)),
                  project_feasible(Z0, alpha2, mean_zero=True))
        else:
            x0 = (0.0, clip_entries(Z0, -alpha2, alpha2))

    res = monotone_apg(problem, x0, cfg, cfg.L0)
    mu, Z = res.x
    return PredictorDecomposition(mu, Z, lam=lam, objective=res.objective,
                                  iterations=res.iterations, history=res.history)


def admm_prox_Z(T, w, alpha2, cfg: SolverConfig = DEFAULT_CONFIG) -> np.ndarray:
    """``argmin 1/2||Z - T||^2 + w||Z||_*`` over ``||Z||_inf <= alpha2, sum(Z) = 0``."""
    T = as_matrix(T, "T")
    Z, _ = admm_nuclear_box(T, w, alpha2, cfg, mean_zero=True)
    return Z


def refit_constrained(W, f, mu_hat, beta, lam, cfg: SolverConfig = DEFAULT_CONFIG, *,
                      init=None) -> np.ndarray:
    """Re-estimate ``Z`` with ``mu`` frozen under ``||Z||_inf <= beta``.

    Maximizes ``loglik(W, mu_hat*J + Z) - lam * ||Z||_*``; no mean-zero
    constraint. ``init`` is a warm start (typically ``winsorize(Z_hat, beta)``).
    """
    return refit_constrained_full(W, f, mu_hat, beta, lam, cfg, init=init).Z


def refit_constrained_full(W, f, mu_hat, beta, lam, cfg: SolverConfig = DEFAULT_CONFIG, *,
                           init=None) -> PredictorDecomposition:
    W = _validate_mask(W)
    f = LinkFunction.parse(f)
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if beta == 0:
        Z = np.zeros_like(W)
        obj = -log_likelihood(W, mu_hat + Z, f)
        return PredictorDecomposition(float(mu_hat), Z, lam=lam, objective=obj,
                                      iterations=0, history=[obj])
    Z0 = np.zeros_like(W) if init is None else winsorize(init, beta)
    problem = _MaskLikelihood(W, f, lam, abs(mu_hat), beta, cfg,
                              fixed_mu=float(mu_hat), mean_zero=False)
    res = monotone_apg(problem, (float(mu_hat), Z0), cfg, cfg.L0)
    return PredictorDecomposition(float(mu_hat), res.x[1], lam=lam, objective=res.objective,
                                  iterations=res.iterations, history=res.history)


def objective(W, f, mu, Z, lam) -> float:
    """``-loglik(W, mu*J + Z) + lam * ||Z||_*``."""
    return -log_likelihood(W, mu + as_matrix(Z), f) + lam * nuclear_norm(Z)


def winsorize(Z, beta) -> np.ndarray:
    """Entrywise truncation of ``Z`` to ``[-beta, beta]``."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return clip_entries(Z, -beta, beta)


def beta_from_fraction(Z, t) -> float:
    """Level ``beta`` at which a fraction ``t`` of ``|Z|`` entries gets truncated.

    The ``(1 - t)`` quantile of ``|z_ij|`` with linear interpolation.
    """
    if not 0 <= t < 1:
        raise ValueError("fraction must lie in [0, 1)")
    return float(np.quantile(np.abs(as_matrix(Z)), 1.0 - t))


def theta_from(mu, Z, f="logistic", provenance=Provenance.UNCONSTRAINED, beta=None,
               decomposition=None) -> ThetaEstimate:
    theta = np.clip(link_value(f, mu + as_matrix(Z)), EPS_P, 1.0 - EPS_P)
    return ThetaEstimate(theta, Provenance(provenance), beta=beta, decomposition=decomposition)
