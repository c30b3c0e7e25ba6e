"""Inverse link functions and the Bernoulli log-likelihood of a mask."""

from __future__ import annotations

import enum

import numpy as np
from scipy import special

from .linalg import _check_same_shape, as_matrix

EPS_P = 1e-15
_LOG_EPS = np.log(EPS_P)
_LOG_1M_EPS = np.log1p(-EPS_P)
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class LinkFunction(enum.Enum):
    LOGISTIC = "logistic"
    PROBIT = "probit"

    @classmethod
    def parse(cls, value) -> "LinkFunction":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown link {value!r}; expected 'logistic' or 'probit'") from None


def _link(f) -> LinkFunction:
    return LinkFunction.parse(f)


def link_value(f, m):
    """``f(m)``; scalar in, scalar out, arrays elementwise."""
    f = _link(f)
    m = np.asarray(m, dtype=np.float64)
    if f is LinkFunction.LOGISTIC:
        out = special.expit(m)
    else:
        out = special.ndtr(m)
    return out[()] if out.ndim == 0 else out


def link_inverse(f, p):
    f = _link(f)
    p = np.asarray(p, dtype=np.float64)
    out = special.logit(p) if f is LinkFunction.LOGISTIC else special.ndtri(p)
    return out[()] if out.ndim == 0 else out


def link_derivative(f, m):
    f = _link(f)
    m = np.asarray(m, dtype=np.float64)
    if f is LinkFunction.LOGISTIC:
        p = special.expit(m)
        out = p * (1.0 - p)
    else:
        out = np.exp(-0.5 * m * m - _LOG_SQRT_2PI)
    return out[()] if out.ndim == 0 else out


def _log_probs(f: LinkFunction, M):
    """``log f(M)`` and ``log(1 - f(M))``, clamped at ``EPS_P``."""
    if f is LinkFunction.LOGISTIC:
        log_p = -np.logaddexp(0.0, -M)
        log_q = -np.logaddexp(0.0, M)
    else:
        log_p = special.log_ndtr(M)
        log_q = special.log_ndtr(-M)
    log_p = np.clip(log_p, _LOG_EPS, _LOG_1M_EPS)
    log_q = np.clip(log_q, _LOG_EPS, _LOG_1M_EPS)
    return log_p, log_q


def _check_inputs(W, M):
    W = as_matrix(W, "W")
    M = as_matrix(M, "M")
    _check_same_shape(W, M)
    return W, M


def log_likelihood(W, M, f="logistic") -> float:
    """Bernoulli log-likelihood of the mask ``W`` under probabilities ``f(M)``."""
    W, M = _check_inputs(W, M)
    log_p, log_q = _log_probs(_link(f), M)
    return float(np.sum(W * log_p + (1.0 - W) * log_q))


def grad_M(W, M, f="logistic") -> np.ndarray:
    """Entrywise derivative of ``log_likelihood`` with respect to ``M``."""
    W, M = _check_inputs(W, M)
    f = _link(f)
    if f is LinkFunction.LOGISTIC:
        return W - special.expit(M)
    # Mills ratios phi/Phi and phi/(1 - Phi) in log space; stable in both tails
    log_phi = -0.5 * M * M - _LOG_SQRT_2PI
    ratio_p = np.exp(log_phi - special.log_ndtr(M))
    ratio_q = np.exp(log_phi - special.log_ndtr(-M))
    return W * ratio_p - (1.0 - W) * ratio_q


def grad_mu(W, M, f="logistic") -> float:
    """Derivative of ``mu -> log_likelihood(W, mu*J + Z)`` at ``M = mu*J + Z``."""
    return float(grad_M(W, M, f).sum())


def curvature_bound(f) -> float:
    """Upper bound on the entrywise second derivative of ``-log_likelihood``."""
    return 0.25 if _link(f) is LinkFunction.LOGISTIC else 1.0
