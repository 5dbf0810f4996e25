"""Deterministic comparison policies.

``maxmin_nominal`` finds the max-min-rate allocation for exactly known gains
by bisection on a common SINR target.  For a target t, the power vector must
satisfy the standard interference fixed point

    x_i = t * (sum_{j != i} G_ij x_j + 1) / G_ii,

whose minimal solution is x = t (D - t F)^-1 1 (D = diag G, F = off-diagonal
part) when the spectral radius of t D^-1 F is below one.  The target is
feasible iff that solution is nonnegative and meets the power constraint:
x <= 1 per link ("box") or sum x <= 1 ("simplex").
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import interference

LN2 = np.log(2.0)


@dataclass
class MaxMinSolution:
    x: np.ndarray
    achieved_common_rate: float  # bits/s
    iterations: int
    converged: bool


def _budget_ok(x, constraint):
    if constraint == "box":
        return x.max() <= 1.0
    return x.sum() <= 1.0


def _solve_target(G, t, constraint):
    """Minimal fixed-point powers for SINR target t, or None if infeasible."""
    D = np.diag(G)
    F = G - np.diag(D)
    A = np.diag(D) - t * F
    try:
        x = np.linalg.solve(A, np.full(len(D), t))
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        return None  # spectral radius >= 1: no nonnegative fixed point
    # guard: the solve must really be a fixed point of the interference map
    if not np.allclose(interference_map(G, x, t), x, rtol=1e-8, atol=0):
        return None
    return x if _budget_ok(x, constraint) else None


def interference_map(G, x, t):
    """One application of x_i <- t (interference_i + 1) / G_ii."""
    D = np.diag(G)
    interf = G @ x - D * x + 1.0
    return t * interf / D


def fixed_point_iteration(G, t, constraint="box", tol=1e-9, max_iter=10_000):
    """Iterate the interference map from zero with the power constraint enforced.

    Box: clamp each power at 1.  Simplex: rescale so the sum is at most 1.
    Returns (x, iterations, converged).  The iterates are monotone
    nondecreasing for a feasible target.
    """
    x = np.zeros(G.shape[-1])
    for it in range(1, max_iter + 1):
        new = interference_map(G, x, t)
        if constraint == "box":
            new = np.minimum(new, 1.0)
        elif new.sum() > 1.0:
            new = new / new.sum()
        if np.max(np.abs(new - x)) <= tol * max(np.max(np.abs(new)), 1e-300):
            return new, it, True
        x = new
    return x, max_iter, False


def maxmin_nominal(G, bandwidth, constraint="box", rtol=1e-4, max_iter=200) -> MaxMinSolution:
    """Max-min-rate allocation for SNR-normalized gains G (one scenario, (n, n)).

    ``rtol`` is the relative bisection width on the common rate.
    """
    G = np.asarray(G, dtype=np.float64)
    n = G.shape[-1]
    if n == 1:
        return MaxMinSolution(np.ones(1), float(bandwidth * np.log1p(G[0, 0]) / LN2), 0, True)
    D = np.diag(G)
    # link i cannot beat SINR G_ii even without interference
    hi = float(D.min())
    lo = 0.0
    best = np.zeros(n)
    rate = lambda t: np.log1p(t)
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        x = _solve_target(G, mid, constraint)
        if x is None:
            hi = mid
        else:
            lo, best = mid, x
        if rate(hi) - rate(lo) <= rtol * rate(hi):
            converged = True
            break
    # the common SINR is fixed by the target; report the rate actually achieved
    common = float(interference.min_rate(G, best, bandwidth)) if lo > 0 else 0.0
    return MaxMinSolution(best, common, it, converged)


def maxmin_batch(G, bandwidth, constraint="box", rtol=1e-4):
    """Allocations for a stack of scenarios, shape (S, n, n) -> (S, n)."""
    return np.stack([maxmin_nominal(g, bandwidth, constraint, rtol).x for g in G])


def uniform_power(K) -> np.ndarray:
    if K < 1:
        raise ValueError("K must be >= 1")
    return np.full(K, 1.0 / K)


def full_power(N) -> np.ndarray:
    if N < 1:
        raise ValueError("N must be >= 1")
    return np.ones(N)


def grid_search_maxmin(G, bandwidth, step=0.01, constraint="box"):
    """Exhaustive grid search over x in {0, step, ..., 1}^n (small n only)."""
    G = np.asarray(G, dtype=np.float64)
    n = G.shape[-1]
    levels = np.round(np.arange(0.0, 1.0 + step / 2, step), 12)
    grids = np.meshgrid(*([levels] * n), indexing="ij")
    X = np.stack([g.ravel() for g in grids], axis=-1)
    if constraint == "simplex":
        X = X[X.sum(axis=-1) <= 1.0 + 1e-12]
    r = interference.min_rate(G, X, bandwidth)
    k = int(np.argmax(r))
    return X[k], float(r[k])
