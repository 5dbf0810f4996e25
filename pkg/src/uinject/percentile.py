"""Empirical gamma-percentile with linear interpolation and its gradient routing.

Rank convention: for L samples and gamma in percent the target fractional
rank is t = L * gamma / 100 (1-based), clamped to [1, L].  The estimate is
the floor(t)-th lowest value interpolated toward the ceil(t)-th lowest with
weight t - floor(t).  Ties keep their original order (stable sort).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PercentileSelection:
    gamma: float
    rank_low: int | np.ndarray  # original positions of the bracketing samples
    rank_high: int | np.ndarray
    interp_weight: float
    value: float | np.ndarray


def _ranks(L, gamma):
    if L < 1:
        raise ValueError("empirical percentile of an empty sample set")
    if not 0.0 < gamma < 100.0:
        raise ValueError(f"gamma must lie in (0, 100), got {gamma}")
    t = min(max(L * gamma / 100.0, 1.0), float(L))
    lo = int(np.floor(t))
    hi = int(np.ceil(t))
    return lo - 1, hi - 1, t - lo


def empirical_percentile(samples, gamma) -> PercentileSelection:
    """Percentile along the last axis.

    For a 1-D input the selection holds scalars; for (..., L) input it holds
    arrays of shape (...) indexing into the last axis.
    """
    s = np.asarray(samples, dtype=np.float64)
    if s.ndim == 0:
        s = s[None]
    if s.shape[-1] == 0:
        raise ValueError("empirical percentile of an empty sample set")
    if np.isnan(s).any():
        raise ValueError("NaN in samples (diverged utility evaluation?)")
    k_lo, k_hi, w = _ranks(s.shape[-1], gamma)
    order = np.argsort(s, axis=-1, kind="stable")
    i_lo = order[..., k_lo]
    i_hi = order[..., k_hi]
    v_lo = np.take_along_axis(s, i_lo[..., None], axis=-1)[..., 0]
    v_hi = np.take_along_axis(s, i_hi[..., None], axis=-1)[..., 0]
    # written as a + w(b - a) so equal brackets return a bit-exactly
    value = v_lo + w * (v_hi - v_lo)
    if s.ndim == 1:
        return PercentileSelection(gamma, int(i_lo), int(i_hi), w, float(value))
    return PercentileSelection(gamma, i_lo, i_hi, w, value)


def percentile_gradient(selection: PercentileSelection, L: int) -> np.ndarray:
    """d(percentile)/d(samples): weight 1-w on rank_low, w on rank_high."""
    lo = np.asarray(selection.rank_low)
    hi = np.asarray(selection.rank_high)
    w = selection.interp_weight
    out = np.zeros(lo.shape + (L,))
    np.put_along_axis(out, lo[..., None], 1.0 - w, axis=-1)
    # add, since lo == hi when t is an integer
    hi_w = np.take_along_axis(out, hi[..., None], axis=-1) + w
    np.put_along_axis(out, hi[..., None], hi_w, axis=-1)
    return out


def percentile_convergence_probe(sampler, gamma, L, trials, true_value, rng=None) -> float:
    """Mean over trials of (estimate - true percentile).

    ``sampler(rng, L)`` must return L draws.
    """
    rng = np.random.default_rng(rng)
    errs = [empirical_percentile(sampler(rng, L), gamma).value - true_value
            for _ in range(trials)]
    return float(np.mean(errs))
