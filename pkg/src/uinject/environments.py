"""Adapters exposing both applications to the trainer and evaluator.

An environment knows how to draw scenario batches, turn them into network
inputs, and produce SNR-normalized gain tensors: the nominal one (p = q)
and L conditional draws of the true channel (p ~ f(p | q)).
"""

from __future__ import annotations

import numpy as np

from . import baselines
from . import channel_d2d as d2d
from . import channel_mimo as mimo


class MimoEnv:
    name = "mimo"
    output_activation = "softmax"
    constraint = "simplex"

    def __init__(self, config: mimo.MimoConfig | None = None):
        self.config = config or mimo.MimoConfig()

    @property
    def n_links(self):
        return self.config.K

    @property
    def n_in(self):
        return self.config.K ** 2

    @property
    def bandwidth(self):
        return self.config.bandwidth

    def default_hidden(self):
        return (200, 200, 200)

    def sample(self, rng, n):
        return mimo.sample_scenario(rng, self.config, size=n)

    def features(self, scen):
        return mimo.features(scen)

    def nominal_gains(self, scen):
        return mimo.nominal_gains(scen)

    def sample_gains(self, scen, rng, L):
        return mimo.gain_matrix(scen, mimo.sample_realizations(scen, rng, L).H)

    def fixed_policy(self):
        return "uniform", baselines.uniform_power(self.config.K)


class D2dEnv:
    name = "d2d"
    output_activation = "sigmoid"
    constraint = "box"

    def __init__(self, config: d2d.D2dConfig | None = None, normalizer=None):
        self.config = config or d2d.D2dConfig()
        self.normalizer = normalizer or d2d.InputNormalizer()

    def fit_normalizer(self, rng, n_layouts=1000):
        if n_layouts < 1000:
            raise ValueError("normalizer needs at least 1000 training layouts")
        self.normalizer.fit(d2d.sample_layout(rng, self.config, size=n_layouts).G_pl)
        return self.normalizer

    @property
    def n_links(self):
        return self.config.N

    @property
    def n_in(self):
        return self.config.N ** 2

    @property
    def bandwidth(self):
        return self.config.bandwidth

    def default_hidden(self):
        return (6 * self.config.N ** 2,) * 4

    def sample(self, rng, n):
        return d2d.sample_layout(rng, self.config, size=n)

    def features(self, scen):
        return d2d.normalize_inputs(self.normalizer, scen.G_pl)

    def nominal_gains(self, scen):
        return d2d.snr_scale(self.config) * scen.G_pl

    def sample_gains(self, scen, rng, L):
        shape = scen.batch_shape + (L,) + scen.G_pl.shape[-2:]
        G = scen.G_pl[..., None, :, :] * d2d.sample_fading(rng, shape, self.config)
        return d2d.snr_scale(self.config) * G

    def fixed_policy(self):
        return "full", baselines.full_power(self.config.N)


def make_env(name, config=None, **kw):
    if name == "mimo":
        return MimoEnv(config, **kw)
    if name == "d2d":
        return D2dEnv(config, **kw)
    raise ValueError(f"unknown environment {name!r}")
