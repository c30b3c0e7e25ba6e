"""Reference solvers used only by the tests.

Nothing here imports from ``ipwmc``; each routine takes the slow, obvious
route so it can check the package's fast path.
"""

import itertools
import math

import numba
import numpy as np


# ---------------------------------------------------------------------------
# naive summations
# ---------------------------------------------------------------------------

def loglik_naive(W, M, link="logistic"):
    total = 0.0
    for i in range(W.shape[0]):
        for j in range(W.shape[1]):
            m = float(M[i, j])
            if link == "logistic":
                p = 1.0 / (1.0 + math.exp(-m))
            else:
                p = 0.5 * math.erfc(-m / math.sqrt(2.0))
            p = min(max(p, 1e-15), 1.0 - 1e-15)
            total += math.log(p) if W[i, j] == 1 else math.log(1.0 - p)
    return total


def weighted_risk_naive(A, Y, W, theta):
    n1, n2 = A.shape
    total = 0.0
    for i in range(n1):
        for j in range(n2):
            if W[i, j]:
                total += (A[i, j] - Y[i, j]) ** 2 / theta[i, j]
    return total / (n1 * n2)


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def _proj_box_sum0(X, bound):
    # bisection on the shift c in clip(X - c)
    lo = X.min() - bound
    hi = X.max() + bound
    for _ in range(100):
        c = 0.5 * (lo + hi)
        s = 0.0
        for v in X.ravel():
            s += min(max(v - c, -bound), bound)
        if s > 0:
            lo = c
        else:
            hi = c
    c = 0.5 * (lo + hi)
    out = np.empty_like(X)
    for i in range(X.shape[0]):
        for j in range(X.shape[1]):
            out[i, j] = min(max(X[i, j] - c, -bound), bound)
    return out


@numba.njit(cache=True)
def _proj_box(X, bound):
    out = np.empty_like(X)
    for i in range(X.shape[0]):
        for j in range(X.shape[1]):
            out[i, j] = min(max(X[i, j], -bound), bound)
    return out


@numba.njit(cache=True)
def _objective(X, T, D, w):
    # sum D*(X-T)^2 * 0.5 + w * nuclear
    _, s, _ = np.linalg.svd(X, full_matrices=False)
    r = X - T
    return 0.5 * np.sum(D * r * r) + w * s.sum()


@numba.njit(cache=True)
def _subgradient(T, D, w, bound, mode, iters):
    """Projected subgradient on 0.5*sum(D*(X-T)^2) + w*||X||_*.

    mode 0: no constraint, 1: box, 2: box and sum zero. Step 2/(m (k+1))
    with m the smallest positive weight, plus weighted averaging.
    """
    m = np.inf
    for v in D.ravel():
        if v > 0 and v < m:
            m = v
    X = T.copy()
    if mode == 1:
        X = _proj_box(X, bound)
    elif mode == 2:
        X = _proj_box_sum0(X, bound)
    avg = X.copy()
    wsum = 0.0
    best = _objective(X, T, D, w)
    best_X = X.copy()
    for k in range(1, iters + 1):
        U, s, Vt = np.linalg.svd(X, full_matrices=False)
        G = D * (X - T)
        for idx in range(s.size):
            if s[idx] > 1e-14:
                G += w * np.outer(U[:, idx], Vt[idx, :])
        X = X - (2.0 / (m * (k + 1))) * G
        if mode == 1:
            X = _proj_box(X, bound)
        elif mode == 2:
            X = _proj_box_sum0(X, bound)
        wsum += k
        avg += (k / wsum) * (X - avg)
        if k % 1000 == 0:
            f = _objective(X, T, D, w)
            if f < best:
                best = f
                best_X = X.copy()
    f = _objective(avg, T, D, w)
    if f < best:
        best = f
        best_X = avg.copy()
    return best, best_X


def projected_subgradient(T, w, bound=np.inf, mean_zero=False, weights=None, iters=10**6):
    """Objective value and minimizer of ``0.5*||X-T||_D^2 + w||X||_*``."""
    T = np.ascontiguousarray(T, dtype=np.float64)
    D = np.ones_like(T) if weights is None else np.ascontiguousarray(weights, dtype=np.float64)
    mode = 2 if mean_zero else (0 if math.isinf(bound) else 1)
    b = 0.0 if math.isinf(bound) else float(bound)
    best, X = _subgradient(T, D, float(w), b, mode, int(iters))
    return float(best), X


# ---------------------------------------------------------------------------
# 2x2 grid search for the penalized mask likelihood
# ---------------------------------------------------------------------------

def _nuclear_2x2(a, b, c, d):
    fro2 = a * a + b * b + c * c + d * d
    det = np.abs(a * d - b * c)
    return np.sqrt(fro2 + 2.0 * det)


def _negloglik_logistic(W, m):
    # m has shape (..., 2, 2) flattened as (a, b, c, d)
    out = 0.0
    for k, w in enumerate(W.ravel()):
        x = m[k]
        out = out + (np.logaddexp(0.0, -x) if w == 1 else np.logaddexp(0.0, x))
    return out


def grid_search_2x2(W, lam, alpha1, box, mean_zero=True, mu_fixed=None,
                    coarse=0.05, fine=0.01):
    """Minimize ``-loglik + lam*||Z||_*`` for a 2x2 logistic mask model.

    Mean-zero ``Z`` is parameterized by three coordinates on an orthonormal
    basis of the mean-zero subspace. A coarse grid locates the basin, a
    1e-2 grid around it refines, and Nelder-Mead with the box as a penalty
    polishes the result.
    """
    from scipy.optimize import minimize

    W = np.asarray(W, dtype=float)
    if mean_zero:
        basis = np.array([[1, -1, 1, -1], [1, 1, -1, -1], [1, -1, -1, 1]], dtype=float) / 2.0
    else:
        basis = np.eye(4)
    dim = basis.shape[0]

    def unpack(p):
        if mu_fixed is None:
            mu, coords = p[0], p[1:]
        else:
            mu, coords = mu_fixed, p
        z = coords @ basis
        return mu, z

    def obj(p):
        mu, z = unpack(np.asarray(p))
        if abs(mu) > alpha1 + 1e-12 or np.max(np.abs(z)) > box + 1e-12:
            return np.inf
        return float(_negloglik_logistic(W, mu + z) + lam * _nuclear_2x2(*z))

    def vector_obj(points):
        mu = points[:, 0] if mu_fixed is None else np.full(points.shape[0], mu_fixed)
        coords = points[:, 1:] if mu_fixed is None else points
        z = coords @ basis
        val = _negloglik_logistic(W, (mu[:, None] + z).T) + lam * _nuclear_2x2(*z.T)
        infeasible = (np.abs(mu) > alpha1 + 1e-12) | (np.max(np.abs(z), axis=1) > box + 1e-12)
        return np.where(infeasible, np.inf, val)

    span = box * math.sqrt(dim) if mean_zero else box
    ranges = ([np.arange(-alpha1, alpha1 + 1e-12, coarse * 4)] if mu_fixed is None else []) + \
        [np.arange(-span, span + 1e-12, coarse * 4)] * dim
    pts = np.array(list(itertools.product(*ranges)))
    vals = vector_obj(pts)
    best = pts[np.argmin(vals)]
    # 1e-2 grid in a neighborhood of the coarse optimum
    local = [np.arange(b - 4 * coarse, b + 4 * coarse + 1e-12, fine) for b in best]
    pts = np.array(list(itertools.product(*local)))
    vals = vector_obj(pts)
    best = pts[np.argmin(vals)]
    res = minimize(obj, best, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000, "maxfev": 40000})
    p = res.x if res.fun <= obj(best) else best
    for _ in range(3):
        res = minimize(obj, p, method="Nelder-Mead",
                       options={"xatol": 1e-11, "fatol": 1e-13, "maxiter": 20000, "maxfev": 40000})
        if res.fun <= obj(p):
            p = res.x
    mu, z = unpack(p)
    return obj(p), mu, z.reshape(2, 2)
