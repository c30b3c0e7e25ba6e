"""Seeded generators for the low-rank missingness simulation study.

Randomness comes from numpy's PCG64 generator. Each role draws from its own
stream derived with :class:`numpy.random.SeedSequence`: ``U``, ``V``, ``UA``
and ``VA`` depend only on the setting seed, so the probability and target
matrices stay fixed across replicates, while ``eps`` and ``W`` are salted
with the replicate index.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize

from .link import LinkFunction, link_value

RNG_ALGORITHM = "numpy.PCG64/SeedSequence v1"
ROLES = ("U", "V", "UA", "VA", "eps", "W")
FACTOR_MEAN = -0.4
TARGET_MEAN = 2.5
TARGET_SD = 2.5


@dataclass(frozen=True)
class SimulationSpec:
    n1: int = 600
    n2: int = 600
    rank_m: int = 11
    rank_a: int = 11
    target_rate: float = 0.2
    snr: float = 1.0
    seed: int = 0
    link: str = "logistic"

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("dimensions must be positive")
        if self.rank_m < 2 or self.rank_a < 2:
            raise ValueError("ranks must be at least 2")
        if self.rank_m - 1 > min(self.n1, self.n2) or self.rank_a - 1 > min(self.n1, self.n2):
            raise ValueError("rank exceeds matrix dimensions")
        if not 0 < self.target_rate < 1:
            raise ValueError("target_rate must lie in (0, 1)")
        if not self.snr > 0:
            raise ValueError("snr must be positive")
        object.__setattr__(self, "link", LinkFunction.parse(self.link).value)

    def to_dict(self):
        return asdict(self)


def stream(seed: int, role: str, replicate: int | None = None) -> np.random.Generator:
    """Independent generator for one role of one replicate."""
    key = (ROLES.index(role),) if replicate is None else (ROLES.index(role), int(replicate))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def _solve_shift(P, f, target, tol=1e-10):
    """Find ``c`` with ``mean(f(P - c)) = target``; the map is decreasing in ``c``."""
    def residual(c):
        return float(np.mean(link_value(f, P - c))) - target

    lo, hi = -50.0, 50.0
    for _ in range(60):
        if residual(lo) > 0 > residual(hi):
            break
        lo, hi = 2.0 * lo, 2.0 * hi
    else:
        raise RuntimeError("could not bracket the intercept shift")
    c = optimize.brentq(residual, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(residual(c)) > tol:
        raise RuntimeError(f"intercept shift residual {residual(c):.2e} above {tol:g}")
    return c


def gen_theta(spec: SimulationSpec, return_shift=False):
    """Low-rank predictor ``M*`` and probabilities ``Theta* = f(M*)``.

    ``M* = U V^T - c J`` with ``N(-0.4, 1)`` factors of width ``rank_m - 1``
    and ``c`` chosen so that ``mean(Theta*)`` equals ``target_rate``.
    """
    k = spec.rank_m - 1
    U = stream(spec.seed, "U").normal(FACTOR_MEAN, 1.0, size=(spec.n1, k))
    V = stream(spec.seed, "V").normal(FACTOR_MEAN, 1.0, size=(spec.n2, k))
    P = U @ V.T
    c = _solve_shift(P, spec.link, spec.target_rate)
    M = P - c
    theta = link_value(spec.link, M)
    if return_shift:
        return M, theta, c
    return M, theta


def target_factor_sd(rank_a: int) -> float:
    return (TARGET_SD ** 2 / (rank_a - 1)) ** 0.25


def gen_target(spec: SimulationSpec) -> np.ndarray:
    """``A* = 2.5 J + U_A V_A^T`` with ``N(0, sigma_A^2)`` factors."""
    k = spec.rank_a - 1
    sd = target_factor_sd(spec.rank_a)
    UA = stream(spec.seed, "UA").normal(0.0, sd, size=(spec.n1, k))
    VA = stream(spec.seed, "VA").normal(0.0, sd, size=(spec.n2, k))
    return TARGET_MEAN + UA @ VA.T


def noise_sd(rank_a: int, snr: float) -> float:
    if math.isinf(snr):
        return 0.0
    return 0.5 * math.sqrt(rank_a - 1 + TARGET_MEAN ** 2) / snr


def gen_noise_and_observe(A_star, theta_star, spec: SimulationSpec, replicate: int = 0):
    """Noisy ``Y = A* + eps`` (all entries) and the Bernoulli mask ``W``."""
    A_star = np.asarray(A_star, dtype=np.float64)
    theta_star = np.asarray(theta_star, dtype=np.float64)
    if A_star.shape != theta_star.shape:
        raise ValueError("A_star and theta_star shapes differ")
    sd = noise_sd(spec.rank_a, spec.snr)
    eps = stream(spec.seed, "eps", replicate).standard_normal(A_star.shape)
    Y = A_star + sd * eps
    W = (stream(spec.seed, "W", replicate).random(A_star.shape) < theta_star).astype(np.float64)
    return Y, W
