"""D2D mmWave network: layouts, pathloss with beam gains, shadowing and fading.

Gain matrices use ``G[i, j]`` = gain from transmitter j to receiver i, so the
diagonal holds the direct links.  Layout arrays may carry a leading batch
axis.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import interference

SPEED_OF_LIGHT = 299_792_458.0
LAYOUT_FORMAT = "uinject-d2d-layout/1"
NORMALIZER_FORMAT = "uinject-d2d-normalizer/1"

# name: (links, region side in m, min direct distance, max direct distance)
SETTINGS = {
    "A": (10, 150.0, 5.0, 15.0),
    "B": (10, 200.0, 20.0, 30.0),
    "C": (15, 300.0, 10.0, 30.0),
}


class LayoutError(RuntimeError):
    pass


@dataclass
class D2dConfig:
    N: int = 10
    region: float = 150.0  # side of the square region, m
    d_min: float = 5.0
    d_max: float = 15.0
    min_separation: float = 5.0  # between tx and rx of different links, m
    carrier_hz: float = 25e9
    h_tx: float = 1.5
    h_rx: float = 1.5
    bandwidth: float = 5e6
    noise_psd_dbm: float = -169.0
    p_max_dbm: float = 30.0
    sigma_s_db: float = 8.0
    fading: bool = True
    direct_gain_db: float = 9.0
    mainlobe_gain_db: float = 6.0
    sidelobe_gain_db: float = -9.0
    mainlobe_halfwidth_deg: float = 10.0
    max_tries: int = 1000

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not 0 < self.d_min <= self.d_max:
            raise ValueError("need 0 < d_min <= d_max")
        if min(self.region, self.carrier_hz, self.h_tx, self.h_rx, self.bandwidth) <= 0:
            raise ValueError("D2D physical constants must be positive")
        if self.sigma_s_db < 0 or self.min_separation < 0:
            raise ValueError("sigma_s_db and min_separation must be nonnegative")

    @classmethod
    def setting(cls, name, **overrides):
        N, region, d_min, d_max = SETTINGS[name.upper()]
        return cls(N=N, region=region, d_min=d_min, d_max=d_max, **overrides)

    @property
    def noise_power(self) -> float:
        return 10.0 ** ((self.noise_psd_dbm - 30.0) / 10.0) * self.bandwidth

    @property
    def p_max(self) -> float:
        return 10.0 ** ((self.p_max_dbm - 30.0) / 10.0)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def breakpoint(self) -> float:
        return 4.0 * self.h_tx * self.h_rx / self.wavelength

    @property
    def breakpoint_loss_db(self) -> float:
        lam = self.wavelength
        return abs(20.0 * np.log10(lam ** 2 / (8.0 * np.pi * self.h_tx * self.h_rx)))


@dataclass
class D2dScenario:
    tx_pos: np.ndarray  # (..., N, 2)
    rx_pos: np.ndarray  # (..., N, 2)
    G_pl: np.ndarray  # (..., N, N) linear pathloss x beam gains
    config: D2dConfig = field(default_factory=D2dConfig)

    @property
    def batch_shape(self):
        return self.G_pl.shape[:-2]

    def __getitem__(self, idx):
        return D2dScenario(self.tx_pos[idx], self.rx_pos[idx], self.G_pl[idx], self.config)

    def __len__(self):
        return self.G_pl.shape[0]


@dataclass
class D2dRealization:
    G: np.ndarray  # (..., L, N, N) realized linear gains


def pathloss_db(distance, config: D2dConfig):
    """ITU-R P.1411 LoS lower bound, two slopes around the breakpoint."""
    d = np.asarray(distance, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    rbp = config.breakpoint
    ratio = np.log10(d / rbp)
    return config.breakpoint_loss_db + np.where(d <= rbp, 20.0 * ratio, 40.0 * ratio)


def beam_gain(angle_deg, config: D2dConfig | None = None):
    """Piecewise pattern: direct (exactly aligned), main lobe, side lobe, in dB."""
    c = config or D2dConfig()
    a = np.abs(np.asarray(angle_deg, dtype=np.float64))
    out = np.where(a <= c.mainlobe_halfwidth_deg, c.mainlobe_gain_db, c.sidelobe_gain_db)
    out = np.where(a == 0, c.direct_gain_db, out)
    return out if out.ndim else float(out)


def _angle_between(u, v):
    """Unsigned angle in degrees between planar vectors u and v."""
    cross = u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]
    dot = (u * v).sum(axis=-1)
    return np.degrees(np.abs(np.arctan2(cross, dot)))


def pathloss_matrix(tx_pos, rx_pos, config: D2dConfig):
    """Linear G_pl[i, j] from tx j to rx i, beam gains at both ends."""
    N = tx_pos.shape[-2]
    # to_rx[..., i, j] = rx_i - tx_j
    to_rx = rx_pos[..., :, None, :] - tx_pos[..., None, :, :]
    dist = np.linalg.norm(to_rx, axis=-1)
    tx_bore = rx_pos - tx_pos  # boresight of tx j points at rx j
    rx_bore = tx_pos - rx_pos  # boresight of rx i points at tx i
    tx_angle = _angle_between(to_rx, tx_bore[..., None, :, :])
    rx_angle = _angle_between(-to_rx, rx_bore[..., :, None, :])
    gain_db = beam_gain(tx_angle, config) + beam_gain(rx_angle, config)
    eye = np.eye(N, dtype=bool)
    gain_db = np.where(eye, 2.0 * beam_gain(0.0, config), gain_db)
    return 10.0 ** ((gain_db - pathloss_db(dist, config)) / 10.0)


def sample_layout(rng, config: D2dConfig, size=None) -> D2dScenario:
    """Random layouts; link i is redrawn until it keeps min_separation from links < i."""
    S = 1 if size is None else int(size)
    N, R = config.N, config.region
    tx = np.empty((S, N, 2))
    rx = np.empty((S, N, 2))
    for i in range(N):
        todo = np.arange(S)
        for _ in range(config.max_tries):
            n = todo.size
            t = rng.uniform(0.0, R, size=(n, 2))
            d = rng.uniform(config.d_min, config.d_max, size=n)
            th = rng.uniform(0.0, 2.0 * np.pi, size=n)
            r = t + d[:, None] * np.stack([np.cos(th), np.sin(th)], axis=-1)
            ok = np.all((r >= 0.0) & (r <= R), axis=-1)
            if i > 0:
                sep_t = np.linalg.norm(rx[todo, :i] - t[:, None], axis=-1).min(axis=-1)
                sep_r = np.linalg.norm(tx[todo, :i] - r[:, None], axis=-1).min(axis=-1)
                ok &= (sep_t >= config.min_separation) & (sep_r >= config.min_separation)
            tx[todo[ok], i] = t[ok]
            rx[todo[ok], i] = r[ok]
            todo = todo[~ok]
            if todo.size == 0:
                break
        else:
            raise LayoutError(f"could not place link {i} within {config.max_tries} tries")
    if size is None:
        tx, rx = tx[0], rx[0]
    return D2dScenario(tx, rx, pathloss_matrix(tx, rx, config), config)


def direct_distances(scenario: D2dScenario):
    return np.linalg.norm(scenario.rx_pos - scenario.tx_pos, axis=-1)


def cross_separations(scenario: D2dScenario):
    """Distances |tx_j - rx_i| for i != j, as an (..., N, N) array with inf on the diagonal."""
    d = np.linalg.norm(scenario.rx_pos[..., :, None, :] - scenario.tx_pos[..., None, :, :], axis=-1)
    N = d.shape[-1]
    return np.where(np.eye(N, dtype=bool), np.inf, d)


def sample_fading(rng, shape, config: D2dConfig):
    """Multiplicative shadowing x fast-fading factors of the given shape."""
    if config.sigma_s_db > 0:
        # 10^(sigma z / 10), computed in place as exp(c z)
        f = rng.standard_normal(shape)
        f *= config.sigma_s_db * np.log(10.0) / 10.0
        np.exp(f, out=f)
    else:
        f = np.ones(shape)
    if config.fading:
        # |h|^2 for h ~ CN(0, 1): unit-mean exponential
        f *= rng.standard_exponential(shape)
    return f


def sample_d2d_realizations(scenario: D2dScenario, rng, L) -> D2dRealization:
    if L < 1:
        raise ValueError("L must be >= 1")
    G_pl = scenario.G_pl[..., None, :, :]
    shape = scenario.batch_shape + (L,) + scenario.G_pl.shape[-2:]
    return D2dRealization(G_pl * sample_fading(rng, shape, scenario.config))


def snr_scale(config: D2dConfig) -> float:
    return config.p_max / config.noise_power


def check_box(x, tol=1e-9):
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < -tol) or np.any(x > 1.0 + tol):
        raise ValueError("power control outside the box [0, 1]")
    return x


def _gains_and_x(scenario, realization, x):
    x = check_box(x)
    G = snr_scale(scenario.config) * realization.G
    if realization.G.ndim == scenario.G_pl.ndim + 1 and x.ndim == len(scenario.batch_shape) + 1 \
            and scenario.batch_shape:
        x = x[..., None, :]
    return G, x


def d2d_rates(scenario: D2dScenario, realization: D2dRealization, x):
    G, x = _gains_and_x(scenario, realization, x)
    return interference.rates(G, x, scenario.config.bandwidth)


def d2d_rate_gradient(scenario: D2dScenario, realization: D2dRealization, x):
    G, x = _gains_and_x(scenario, realization, x)
    return interference.min_rate_and_grad(G, x, scenario.config.bandwidth)[1]


def log_gains(G_pl):
    """dB-scale pathloss inputs flattened row-major."""
    G_pl = np.asarray(G_pl)
    return (10.0 * np.log10(G_pl)).reshape(G_pl.shape[:-2] + (-1,))


@dataclass
class InputNormalizer:
    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    @property
    def fitted(self):
        return self.mean is not None

    def fit(self, G_pl) -> InputNormalizer:
        v = log_gains(G_pl)
        if v.ndim != 2:
            raise ValueError("fit expects a corpus of layouts, shape (S, N, N)")
        std = v.std(axis=0)
        if np.any(std <= 0):
            raise ValueError(f"{int(np.sum(std <= 0))} input entries have zero spread in the corpus")
        self.mean, self.std = v.mean(axis=0), std
        return self

    def normalize(self, G_pl):
        if not self.fitted:
            raise RuntimeError("normalizer used before fit")
        return (log_gains(G_pl) - self.mean) / self.std

    def denormalize(self, z):
        if not self.fitted:
            raise RuntimeError("normalizer used before fit")
        return np.asarray(z) * self.std + self.mean

    def save(self, path):
        doc = {"format_version": NORMALIZER_FORMAT, "mean": self.mean.tolist(), "std": self.std.tolist()}
        Path(path).write_text(json.dumps(doc) + "\n")

    @classmethod
    def load(cls, path):
        doc = json.loads(Path(path).read_text())
        if doc.get("format_version") != NORMALIZER_FORMAT:
            raise ValueError(f"{path}: unsupported normalizer format {doc.get('format_version')!r}")
        return cls(np.asarray(doc["mean"]), np.asarray(doc["std"]))


def normalize_inputs(normalizer: InputNormalizer, G_pl):
    return normalizer.normalize(G_pl)


def save_layout(scenario: D2dScenario, path) -> None:
    doc = {"format_version": LAYOUT_FORMAT, "N": scenario.config.N,
           "config": asdict(scenario.config),
           "tx_pos": np.asarray(scenario.tx_pos).tolist(),
           "rx_pos": np.asarray(scenario.rx_pos).tolist(),
           "G_pl_db": (10.0 * np.log10(scenario.G_pl)).tolist()}
    Path(path).write_text(json.dumps(doc) + "\n")


def load_layout(path) -> D2dScenario:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != LAYOUT_FORMAT:
        raise ValueError(f"{path}: unsupported layout format {doc.get('format_version')!r}")
    G_pl = 10.0 ** (np.asarray(doc["G_pl_db"]) / 10.0)
    return D2dScenario(np.asarray(doc["tx_pos"]), np.asarray(doc["rx_pos"]), G_pl,
                       D2dConfig(**doc["config"]))
