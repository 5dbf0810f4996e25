"""Uncertainty-injection training and its no-injection counterpart.

Per minibatch: forward the network on the measurements q, draw L true-channel
realizations per scenario, score each by its min-rate, pick the empirical
gamma-percentile realization(s) and backpropagate the min-rate gradient of
those realization(s) only.  Per-scenario gradients are averaged over the
minibatch before an ascent step.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import interference
from .mlp import MlpModel, OptimizerConfig, backward, forward, predict, step
from .percentile import empirical_percentile

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    gamma: float = 5.0
    L_inject: int = 200
    minibatch_size: int = 200
    minibatches_per_epoch: int = 20
    max_epochs: int = 100
    early_stop_patience: int = 50
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    mode: str = "inject"  # "inject" or "nominal"
    val_size: int = 500
    val_realizations: int = 200
    max_skip_fraction: float = 0.01
    utility_scale: float = 1e-6  # train on Mbps

    def __post_init__(self):
        if self.mode not in ("inject", "nominal"):
            raise ValueError(f"unknown training mode {self.mode!r}")
        if not 0 < self.gamma < 100:
            raise ValueError("gamma must lie in (0, 100)")
        counts = (self.L_inject, self.minibatch_size, self.minibatches_per_epoch, self.max_epochs,
                  self.early_stop_patience, self.val_size, self.val_realizations)
        if min(counts) < 1:
            raise ValueError("all training counts must be >= 1")


@dataclass
class TrainLog:
    mode: str
    epochs: list = field(default_factory=list)  # dicts: epoch, val_robust, val_nominal, seconds
    best_epoch: int = 0
    skipped: int = 0

    def best(self, key):
        return max(e[key] for e in self.epochs)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "val_robust", "val_nominal", "seconds"])
            for e in self.epochs:
                w.writerow([e["epoch"], f"{e['val_robust']:.6g}", f"{e['val_nominal']:.6g}",
                            f"{e['seconds']:.3f}"])


class TrainingAborted(RuntimeError):
    pass


def streams(seed):
    """Independent generators for scenario data, injected draws and validation."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def selected_gradient(G, x, gamma, bandwidth):
    """Percentile objective and its gradient w.r.t. x for one batch.

    G: (B, L, n, n) realized gains, x: (B, n).  Returns (u_gamma (B,), grad (B, n)).
    """
    u = interference.min_rate(G, x[:, None, :], bandwidth)
    sel = empirical_percentile(u, gamma)
    rows = np.arange(G.shape[0])
    _, g_lo = interference.min_rate_and_grad(G[rows, sel.rank_low], x, bandwidth)
    w = sel.interp_weight
    if w == 0:
        return sel.value, g_lo
    _, g_hi = interference.min_rate_and_grad(G[rows, sel.rank_high], x, bandwidth)
    # equals (1-w) g_lo + w g_hi; exact when both brackets coincide
    return sel.value, g_lo + w * (g_hi - g_lo)


def batch_gradient(model, env, scen, config: TrainConfig, inject_rng):
    """Forward pass and dU/dx for one minibatch; rows with non-finite utility are zeroed.

    Returns (x, utility (B,), dU/dx (B, n), number of skipped rows).
    """
    x = forward(model, env.features(scen))
    if config.mode == "inject":
        G = env.sample_gains(scen, inject_rng, config.L_inject)
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            u_all = interference.min_rate(G, x[:, None, :], env.bandwidth)
        bad = ~np.all(np.isfinite(u_all), axis=1)
        if bad.any():
            G = G.copy()
            G[bad] = 0.0  # placeholder rows, gradient zeroed below
        u, g = selected_gradient(G, x, config.gamma, env.bandwidth)
    else:
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            u, g = interference.min_rate_and_grad(env.nominal_gains(scen), x, env.bandwidth)
        bad = ~(np.isfinite(u) & np.all(np.isfinite(g), axis=1))
    g = np.where(bad[:, None], 0.0, g)
    return x, u, g, int(bad.sum())


def validation_scores(model, env, pool, val_gains, nominal_gains, gamma):
    """Mean robust (gamma-percentile) and mean nominal min-rate, bits/s."""
    x = predict(model, env.features(pool))
    robust = empirical_percentile(interference.min_rate(val_gains, x[:, None, :], env.bandwidth), gamma).value
    nominal = interference.min_rate(nominal_gains, x, env.bandwidth)
    return float(np.mean(robust)), float(np.mean(nominal))


def train(model: MlpModel, env, config: TrainConfig, seed=None):
    """Train in place according to ``config.mode``; returns (best model, TrainLog).

    Early stopping keeps the epoch with the best validation score: the robust
    objective when injecting, the nominal objective otherwise.
    """
    if model.n_in != env.n_in or model.n_out != env.n_links:
        raise ValueError(f"model widths {model.n_in}->{model.n_out} do not fit "
                         f"environment {env.n_in}->{env.n_links}")
    data_rng, inject_rng, val_rng = streams(config.seed if seed is None else seed)
    pool = env.sample(val_rng, config.val_size)
    val_gains = env.sample_gains(pool, val_rng, config.val_realizations)
    val_nominal = env.nominal_gains(pool)
    key = "val_robust" if config.mode == "inject" else "val_nominal"

    tlog = TrainLog(config.mode)
    best_model, best_score = model.copy(), -np.inf
    budget = config.max_skip_fraction * config.minibatch_size
    t0 = time.perf_counter()
    for epoch in range(1, config.max_epochs + 1):
        for _ in range(config.minibatches_per_epoch):
            scen = env.sample(data_rng, config.minibatch_size)
            _, _, g, skipped = batch_gradient(model, env, scen, config, inject_rng)
            if skipped > budget:
                raise TrainingAborted(f"epoch {epoch}: {skipped}/{config.minibatch_size} "
                                      "scenarios had non-finite utility")
            tlog.skipped += skipped
            grads = backward(model, g * (config.utility_scale / config.minibatch_size))
            step(model, grads, config.optimizer)
        robust, nominal = validation_scores(model, env, pool, val_gains, val_nominal, config.gamma)
        tlog.epochs.append(dict(epoch=epoch, val_robust=robust, val_nominal=nominal,
                                seconds=time.perf_counter() - t0))
        score = tlog.epochs[-1][key]
        if score > best_score:
            best_score, best_model, tlog.best_epoch = score, model.copy(), epoch
        log.debug("%s epoch %d: robust %.4g nominal %.4g", config.mode, epoch, robust, nominal)
        if epoch - tlog.best_epoch >= config.early_stop_patience:
            break
    if tlog.skipped:
        log.warning("%d scenarios skipped for non-finite utility", tlog.skipped)
    return best_model, tlog


def _with_mode(config, mode):
    from dataclasses import replace
    return replace(config, mode=mode)


def train_injected(model, env, config: TrainConfig, seed=None):
    return train(model, env, _with_mode(config, "inject"), seed)


def train_nominal(model, env, config: TrainConfig, seed=None):
    return train(model, env, _with_mode(config, "nominal"), seed)
