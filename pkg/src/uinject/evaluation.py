"""Paired evaluation of power-allocation policies on a shared scenario pool."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import interference
from .mlp import predict
from .percentile import empirical_percentile


@dataclass
class PolicyScores:
    nominal: np.ndarray  # (S,) min-rate at p = q, bits/s
    robust: np.ndarray  # (S,) empirical gamma-percentile min-rate, bits/s

    @property
    def mean_nominal(self):
        return float(np.mean(self.nominal))

    @property
    def mean_robust(self):
        return float(np.mean(self.robust))


def evaluate_policies(env, pool, policies: dict, L_eval, gamma, rng, chunk=25) -> dict:
    """Score each policy's allocation (S, n) on identical realization draws.

    Realizations are drawn chunk by chunk so memory stays bounded.
    """
    if L_eval < 100:
        raise ValueError("L_eval must be >= 100")
    S = len(pool)
    allocs = {}
    for name, x in policies.items():
        x = np.asarray(x, dtype=np.float64)
        allocs[name] = np.broadcast_to(x, (S, env.n_links)) if x.ndim == 1 else x
    nominal_G = env.nominal_gains(pool)
    out = {name: PolicyScores(interference.min_rate(nominal_G, x, env.bandwidth), np.empty(S))
           for name, x in allocs.items()}
    for start in range(0, S, chunk):
        sl = slice(start, min(start + chunk, S))
        G = env.sample_gains(pool[sl], rng, L_eval)
        for name, x in allocs.items():
            u = interference.min_rate(G, x[sl, None, :], env.bandwidth)
            out[name].robust[sl] = empirical_percentile(u, gamma).value
    return out


def evaluate(model, env, pool, L_eval, gamma, rng) -> PolicyScores:
    """Score a trained network; the model is only read."""
    x = predict(model, env.features(pool))
    return evaluate_policies(env, pool, {"model": x}, L_eval, gamma, rng)["model"]
