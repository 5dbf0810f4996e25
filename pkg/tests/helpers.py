"""Shared helpers for the end-to-end gradient checks."""

import numpy as np

from uinject import interference
from uinject.mlp import backward, forward, predict
from uinject.percentile import empirical_percentile
from uinject.training import selected_gradient


def percentile_objective(model, q, G, gamma, bandwidth, scale=1e-6):
    """Mean over the batch of the empirical percentile min-rate (Mbps), plus a kink signature."""
    x = predict(model, q)
    u = interference.min_rate(G, x[:, None, :], bandwidth)
    sel = empirical_percentile(u, gamma)
    rows = np.arange(len(q))
    argmins = [np.argmin(interference.rates(G[rows, r], x, bandwidth), axis=-1)
               for r in (sel.rank_low, sel.rank_high)]
    signature = (tuple(sel.rank_low), tuple(sel.rank_high), tuple(argmins[0]), tuple(argmins[1]))
    return scale * float(np.mean(sel.value)), signature


def analytic_gradient(model, q, G, gamma, bandwidth, scale=1e-6):
    x = forward(model, q)
    _, g = selected_gradient(G, x, gamma, bandwidth)
    return backward(model, g * (scale / len(q)))


def fd_check(model, q, G, gamma, bandwidth, rng, entries_per_param=6, h=1e-6):
    """Max relative error of sampled parameter-gradient entries vs central differences.

    Entries whose perturbation changes the selected realization or the argmin
    link (a rank crossing) are skipped.  Returns (max_rel_err, n_checked).
    """
    grads = analytic_gradient(model, q, G, gamma, bandwidth)
    _, sig0 = percentile_objective(model, q, G, gamma, bandwidth)
    worst, checked = 0.0, 0
    for p, g in zip(model.params(), grads):
        scale = np.max(np.abs(g)) + 1e-30
        flat = rng.choice(p.size, size=min(entries_per_param, p.size), replace=False)
        for f in flat:
            idx = np.unravel_index(f, p.shape)
            old = p[idx]
            p[idx] = old + h
            up, s_up = percentile_objective(model, q, G, gamma, bandwidth)
            p[idx] = old - h
            dn, s_dn = percentile_objective(model, q, G, gamma, bandwidth)
            p[idx] = old
            if s_up != sig0 or s_dn != sig0:
                continue
            fd = (up - dn) / (2 * h)
            # entries much smaller than the layer's largest gradient are judged on the layer scale
            worst = max(worst, abs(fd - g[idx]) / max(abs(g[idx]), abs(fd), 1e-3 * scale))
            checked += 1
    return worst, checked
