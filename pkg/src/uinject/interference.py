"""Rates and min-rate gradients for a generic interference channel.

Both applications reduce to SNR-normalized gain matrices ``G`` with
``G[..., i, j]`` the received power at receiver i from transmitter j when
transmitter j uses its full power budget, divided by the noise power.  Then

    r_i = w * log2(1 + G_ii x_i / (sum_{j != i} G_ij x_j + 1)).

All functions broadcast over leading axes of ``G`` and ``x``.
"""

from __future__ import annotations

import numpy as np

LN2 = np.log(2.0)


def _terms(G, x):
    x = np.asarray(x, dtype=np.float64)
    total = np.matmul(G, x[..., None])[..., 0] + 1.0
    signal = np.diagonal(G, axis1=-2, axis2=-1) * x
    interference = total - signal
    return signal, interference, total


def rates(G, x, bandwidth):
    signal, interference, _ = _terms(G, x)
    return bandwidth * np.log1p(signal / interference) / LN2


def min_rate(G, x, bandwidth):
    signal, interference, _ = _terms(G, x)
    # log is monotone: take the min first
    return bandwidth * np.log1p((signal / interference).min(axis=-1)) / LN2


def min_rate_and_grad(G, x, bandwidth):
    """Min-rate and its gradient w.r.t. x (the gradient of the argmin link's rate).

    Ties go to the lowest link index.
    """
    signal, interference, total = _terms(G, x)
    r = bandwidth * np.log1p(signal / interference) / LN2
    k = np.argmin(r, axis=-1)
    rmin = np.take_along_axis(r, k[..., None], axis=-1)[..., 0]
    Gk = np.take_along_axis(G, k[..., None, None], axis=-2)[..., 0, :]
    Tk = np.take_along_axis(total, k[..., None], axis=-1)
    Ik = np.take_along_axis(interference, k[..., None], axis=-1)
    grad = Gk / Tk - Gk / Ik
    # own power only enters the total, not the interference
    own = np.take_along_axis(Gk, k[..., None], axis=-1) / Tk
    np.put_along_axis(grad, k[..., None], own, axis=-1)
    return rmin, grad * (bandwidth / LN2)


def sinr(G, x):
    signal, interference, _ = _terms(G, x)
    return signal / interference
