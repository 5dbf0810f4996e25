"""Multiuser MIMO downlink: estimated channels, RZF beamformers, rates.

A base station with M antennas serves K single-antenna users.  The network
sees only the estimated effective channel Ĥᴴ B; true channels are drawn as
H = Ĥ + E with E i.i.d. CN(0, sigma_e2).

Scenario arrays may carry leading batch axes, e.g. ``H_hat`` of shape
(S, M, K) holds S independent scenarios.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import interference

SCENARIO_FORMAT = "uinject-mimo-scenario/1"


@dataclass
class MimoConfig:
    M: int = 4
    K: int = 4
    P: float = 1.0  # total transmit power, W
    bandwidth: float = 10e6  # Hz
    noise_psd_dbm: float = -75.0  # dBm/Hz
    sigma_e2: float = 0.075
    alpha: float = 0.2
    alpha_grid: tuple = (0.01, 0.05, 0.1, 0.2, 0.5, 1.0)

    def __post_init__(self):
        if self.M < 1 or self.K < 1:
            raise ValueError("M and K must be >= 1")
        if self.P <= 0 or self.bandwidth <= 0 or self.sigma_e2 < 0 or self.alpha < 0:
            raise ValueError("MIMO constants must be positive (sigma_e2, alpha nonnegative)")
        self.alpha_grid = tuple(float(a) for a in self.alpha_grid)

    @property
    def noise_power(self) -> float:
        """Noise power in watts over the whole bandwidth."""
        return 10.0 ** ((self.noise_psd_dbm - 30.0) / 10.0) * self.bandwidth


@dataclass
class MimoScenario:
    H_hat: np.ndarray  # (..., M, K) complex
    B: np.ndarray  # (..., M, K) complex, unit-norm columns
    config: MimoConfig = field(default_factory=MimoConfig)

    @property
    def H_eff_hat(self) -> np.ndarray:
        return effective_channel(self.H_hat, self.B)

    @property
    def batch_shape(self):
        return self.H_hat.shape[:-2]

    def __getitem__(self, idx):
        return MimoScenario(self.H_hat[idx], self.B[idx], self.config)

    def __len__(self):
        return self.H_hat.shape[0]


@dataclass
class MimoRealization:
    H: np.ndarray  # (..., M, K) complex true channel


def complex_normal(rng, shape, var=1.0):
    z = rng.standard_normal(shape + (2,))
    return np.sqrt(var / 2.0) * (z[..., 0] + 1j * z[..., 1])


def effective_channel(H, B):
    """(Hᴴ B)[k, j] = h_kᴴ b_j."""
    return np.matmul(np.conj(np.swapaxes(H, -1, -2)), B)


def rzf_beamformers(H_hat, alpha):
    """Column-normalized Ĥ(ĤᴴĤ + αI)^-1."""
    H_hat = np.asarray(H_hat)
    K = H_hat.shape[-1]
    gram = np.matmul(np.conj(np.swapaxes(H_hat, -1, -2)), H_hat) + alpha * np.eye(K)
    if alpha == 0:
        cond = np.linalg.cond(gram)
        if np.any(~np.isfinite(cond)) or np.any(cond > 1e12):
            raise np.linalg.LinAlgError("ĤᴴĤ is singular; zero-forcing undefined (use alpha > 0)")
    # gram is Hermitian, so B' = Ĥ gram^-1 = (gram^-1 Ĥᴴ)ᴴ
    Bp = np.conj(np.swapaxes(np.linalg.solve(gram, np.conj(np.swapaxes(H_hat, -1, -2))), -1, -2))
    return Bp / np.linalg.norm(Bp, axis=-2, keepdims=True)


def sample_scenario(rng, config: MimoConfig, size=None, alpha=None) -> MimoScenario:
    """Draw Ĥ with i.i.d. CN(0, 1) entries and build RZF beamformers."""
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    H_hat = complex_normal(rng, shape + (config.M, config.K))
    B = rzf_beamformers(H_hat, config.alpha if alpha is None else alpha)
    return MimoScenario(H_hat, B, config)


def sample_realizations(scenario: MimoScenario, rng, L) -> MimoRealization:
    """L true-channel draws per scenario, shape (..., L, M, K)."""
    if L < 1:
        raise ValueError("L must be >= 1")
    H_hat = scenario.H_hat[..., None, :, :]
    shape = scenario.batch_shape + (L,) + scenario.H_hat.shape[-2:]
    if scenario.config.sigma_e2 == 0:
        return MimoRealization(np.broadcast_to(H_hat, shape).copy())
    return MimoRealization(H_hat + complex_normal(rng, shape, scenario.config.sigma_e2))


def gain_matrix(scenario: MimoScenario, H) -> np.ndarray:
    """SNR-normalized gains P |h_kᴴ b_j|^2 / sigma^2 for true channels H.

    H may carry an extra axis (e.g. realizations) right before (M, K).
    """
    B = scenario.B
    if H.ndim == B.ndim + 1:
        B = B[..., None, :, :]
    cfg = scenario.config
    return (cfg.P / cfg.noise_power) * np.abs(effective_channel(H, B)) ** 2


def nominal_gains(scenario: MimoScenario) -> np.ndarray:
    """Gains at H = Ĥ, shaped like a single realization (..., 1, K, K)."""
    return gain_matrix(scenario, scenario.H_hat[..., None, :, :])[..., 0, :, :]


def check_simplex(x, tol=1e-9):
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < -tol) or np.any(x.sum(axis=-1) > 1.0 + tol):
        raise ValueError("power allocation outside the simplex (x >= 0, sum x <= 1)")
    return x


def _gains_and_x(scenario, realization, x):
    x = check_simplex(x)
    G = gain_matrix(scenario, realization.H)
    # per-scenario x against (..., L, K, K) gains: insert the realization axis
    if realization.H.ndim == scenario.H_hat.ndim + 1 and x.ndim == len(scenario.batch_shape) + 1 \
            and scenario.batch_shape:
        x = x[..., None, :]
    return G, x


def mimo_rates(scenario: MimoScenario, realization: MimoRealization, x) -> np.ndarray:
    """Per-user rates in bits/s."""
    G, x = _gains_and_x(scenario, realization, x)
    return interference.rates(G, x, scenario.config.bandwidth)


def mimo_rate_gradient(scenario: MimoScenario, realization: MimoRealization, x) -> np.ndarray:
    """Gradient of min_k r_k w.r.t. x, in bits/s per unit of x."""
    G, x = _gains_and_x(scenario, realization, x)
    return interference.min_rate_and_grad(G, x, scenario.config.bandwidth)[1]


def features(scenario: MimoScenario) -> np.ndarray:
    """Network input: |Ĥᴴ B| flattened row-major to length K*K."""
    H_eff = scenario.H_eff_hat
    return np.abs(H_eff).reshape(H_eff.shape[:-2] + (-1,))


def select_alpha(config: MimoConfig, rng, grid=None, n_scenarios=200, n_realizations=200):
    """Grid alpha with the highest median min-rate under equal power.

    Every candidate sees the same estimated channels and the same error draws.
    Returns (best_alpha, {alpha: median_min_rate}).
    """
    grid = tuple(config.alpha_grid if grid is None else grid)
    if len(grid) == 0:
        raise ValueError("empty alpha grid")
    H_hat = complex_normal(rng, (n_scenarios, config.M, config.K))
    if config.sigma_e2 > 0:
        E = complex_normal(rng, (n_scenarios, n_realizations, config.M, config.K), config.sigma_e2)
    else:
        E = np.zeros((n_scenarios, n_realizations, config.M, config.K), complex)
    H = H_hat[:, None] + E
    x = np.full(config.K, 1.0 / config.K)
    medians = {}
    for a in grid:
        scen = MimoScenario(H_hat, rzf_beamformers(H_hat, a), config)
        r = interference.min_rate(gain_matrix(scen, H), x, config.bandwidth)
        medians[a] = float(np.median(r))
    best = max(grid, key=lambda a: medians[a])  # first on ties
    return best, medians


def save_scenario(scenario: MimoScenario, path) -> None:
    def pairs(A):
        return [[float(z.real), float(z.imag)] for z in np.asarray(A).ravel()]

    cfg = asdict(scenario.config)
    cfg["alpha_grid"] = list(cfg["alpha_grid"])
    doc = {"format_version": SCENARIO_FORMAT, "shape": list(scenario.H_hat.shape),
           "config": cfg, "H_hat": pairs(scenario.H_hat), "B": pairs(scenario.B)}
    Path(path).write_text(json.dumps(doc) + "\n")


def load_scenario(path) -> MimoScenario:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != SCENARIO_FORMAT:
        raise ValueError(f"{path}: unsupported scenario format {doc.get('format_version')!r}")
    shape = tuple(doc["shape"])

    def unpack(v):
        a = np.asarray(v, dtype=np.float64)
        return (a[:, 0] + 1j * a[:, 1]).reshape(shape)

    return MimoScenario(unpack(doc["H_hat"]), unpack(doc["B"]), MimoConfig(**doc["config"]))
