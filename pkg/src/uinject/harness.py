"""Experiment orchestration: configs, seeded runs, reports, CDF data.

Config files are flat ``key = value`` lines with dotted sections
(``experiment.*``, ``environment.*``, ``train.*``, ``eval.*``).  The syntax is
a subset of TOML, so values are parsed with ``tomli``.  Every experiment
constant has a key, and a run echoes all of them into its report.

Output directory layout::

    report.json  summary.csv  cdf_<method>.csv  trainlog_<method>.csv
    checkpoint_<method>.json  normalizer.json (d2d)  config.toml

A directory being written holds ``PARTIAL`` (and a ``.lock``); a failed run
leaves ``PARTIAL`` behind with the error message in it.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import tomli

from . import __version__, baselines
from . import channel_d2d as d2d
from . import channel_mimo as mimo
from .environments import D2dEnv, MimoEnv
from .evaluation import evaluate_policies
from .mlp import OptimizerConfig, init_mlp, load_checkpoint, predict, save_checkpoint
from .training import TrainConfig, train

log = logging.getLogger(__name__)

REPORT_FORMAT = "uinject-report/1"
LEARNED = ("inject", "nominal")
METHODS = ("inject", "nominal", "maxmin", "uniform", "full")
DEFAULT_METHODS = {"mimo": ("inject", "nominal", "maxmin", "uniform"),
                   "d2d": ("inject", "nominal", "maxmin", "full")}
DEFAULT_GAMMA = {"mimo": 5.0, "d2d": 10.0}
# Adam at 1e-3 kills the wide D2D network's relus within two epochs
DEFAULT_LR = {"mimo": 1e-3, "d2d": 3e-4}
# stream tags for SeedSequence(master, spawn_key=(tag,)); fixed so adding a
# method never shifts another method's randomness
STREAMS = {"normalizer": 0, "init": 1, "train": 2, "pool": 3, "eval": 4, "alpha": 5}

# values used in the original experiments, switched on by --paper-scale
PAPER_SCALE = {
    "train.minibatch_size": 1000,
    "train.minibatches_per_epoch": 50,
    "train.max_epochs": 500,
    "train.L_inject": 1000,
    "eval.L_eval": 1000,
}
PAPER_POOL = {"mimo": 2000, "d2d": 1000}


class ConfigError(ValueError):
    pass


@dataclass
class EvalConfig:
    pool_size: int = 200
    L_eval: int = 500

    def __post_init__(self):
        if self.pool_size < 1:
            raise ConfigError("eval.pool_size must be >= 1")
        if self.L_eval < 100:
            raise ConfigError("eval.L_eval must be >= 100")


@dataclass
class ExperimentConfig:
    environment: str = "mimo"
    setting: str | None = None  # D2D only: "A", "B" or "C"
    env_config: object = None  # MimoConfig or D2dConfig
    train: TrainConfig = field(default_factory=TrainConfig)
    hidden: tuple | None = None  # None: the environment's default widths
    normalizer_layouts: int = 1000
    eval: EvalConfig = field(default_factory=EvalConfig)
    gamma: float | None = None
    methods: tuple | None = None
    seed: int = 0
    out: str = "runs/default"

    def __post_init__(self):
        if self.environment not in ("mimo", "d2d"):
            raise ConfigError(f"unknown environment {self.environment!r}")
        if self.environment == "d2d":
            self.setting = (self.setting or "A").upper()
            if self.setting not in d2d.SETTINGS:
                raise ConfigError(f"unknown D2D setting {self.setting!r}")
            if self.env_config is None:
                self.env_config = d2d.D2dConfig.setting(self.setting)
        else:
            self.setting = None
            if self.env_config is None:
                self.env_config = mimo.MimoConfig()
        if self.gamma is None:
            self.gamma = DEFAULT_GAMMA[self.environment]
        self.gamma = float(self.gamma)
        if not 0 < self.gamma < 100:
            raise ConfigError("experiment.gamma must lie in (0, 100)")
        self.train = replace(self.train, gamma=self.gamma)
        if self.methods is None:
            self.methods = DEFAULT_METHODS[self.environment]
        self.methods = tuple(self.methods)
        if not self.methods:
            raise ConfigError("method list is empty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {list(METHODS)}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("duplicate methods")
        if "full" in self.methods and self.environment == "mimo":
            raise ConfigError("full power violates the MIMO total-power simplex; use uniform")
        if self.hidden is not None:
            self.hidden = tuple(int(h) for h in self.hidden)
            if not self.hidden or min(self.hidden) < 1:
                raise ConfigError("train.hidden needs positive widths")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        self.seed = int(self.seed)


# ---- flat key/value form ---------------------------------------------------

_TRAIN_KEYS = ("L_inject", "minibatch_size", "minibatches_per_epoch", "max_epochs",
               "early_stop_patience", "val_size", "val_realizations", "max_skip_fraction",
               "utility_scale")


def build_env(config: ExperimentConfig):
    if config.environment == "mimo":
        return MimoEnv(config.env_config)
    return D2dEnv(config.env_config)


def hidden_widths(config: ExperimentConfig):
    return config.hidden if config.hidden is not None else build_env(config).default_hidden()


def to_flat(config: ExperimentConfig, include_out=True) -> dict:
    """Every constant under its dotted key; defaults are written out, never implied."""
    flat = {"experiment.environment": config.environment}
    if config.setting is not None:
        flat["experiment.setting"] = config.setting
    flat["experiment.gamma"] = config.gamma
    flat["experiment.methods"] = list(config.methods)
    flat["experiment.seed"] = config.seed
    if include_out:
        flat["experiment.out"] = config.out
    for f in fields(config.env_config):
        v = getattr(config.env_config, f.name)
        flat[f"environment.{f.name}"] = list(v) if isinstance(v, tuple) else v
    for k in _TRAIN_KEYS:
        flat[f"train.{k}"] = getattr(config.train, k)
    for f in fields(OptimizerConfig):
        flat[f"train.optimizer.{f.name}"] = getattr(config.train.optimizer, f.name)
    flat["train.hidden"] = list(hidden_widths(config))
    if config.environment == "d2d":
        flat["train.normalizer_layouts"] = config.normalizer_layouts
    flat["eval.pool_size"] = config.eval.pool_size
    flat["eval.L_eval"] = config.eval.L_eval
    return flat


def _typed(value, like, key):
    if isinstance(like, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(like, int) and not isinstance(value, bool):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(like, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    return value


def from_flat(flat: dict) -> ExperimentConfig:
    """Build a config from dotted keys; unknown keys are an error."""
    flat = dict(flat)
    pop = lambda k, d=None: flat.pop(k, d)
    env_name = pop("experiment.environment", "mimo")
    setting = pop("experiment.setting")
    if env_name == "d2d":
        base_env = d2d.D2dConfig.setting(setting or "A")
    elif env_name == "mimo":
        if setting is not None:
            raise ConfigError("experiment.setting only applies to the d2d environment")
        base_env = mimo.MimoConfig()
    else:
        raise ConfigError(f"unknown environment {env_name!r}")

    try:
        env_over = {}
        for f in fields(base_env):
            k = f"environment.{f.name}"
            if k in flat:
                v = flat.pop(k)
                env_over[f.name] = tuple(v) if isinstance(v, list) else _typed(v, getattr(base_env, f.name), k)
        env_cfg = replace(base_env, **env_over)

        base_train = TrainConfig()
        train_over = {}
        for k in _TRAIN_KEYS:
            if f"train.{k}" in flat:
                train_over[k] = _typed(flat.pop(f"train.{k}"), getattr(base_train, k), f"train.{k}")
        opt_over = {"lr": DEFAULT_LR[env_name]}
        for f in fields(OptimizerConfig):
            k = f"train.optimizer.{f.name}"
            if k in flat:
                opt_over[f.name] = _typed(flat.pop(k), getattr(base_train.optimizer, f.name), k)
        train_cfg = replace(base_train, optimizer=OptimizerConfig(**opt_over), **train_over)

        ev = EvalConfig(**{k: _typed(flat.pop(f"eval.{k}"), getattr(EvalConfig(), k), f"eval.{k}")
                           for k in ("pool_size", "L_eval") if f"eval.{k}" in flat})
        methods = pop("experiment.methods")
        hidden = pop("train.hidden")
        cfg = ExperimentConfig(
            environment=env_name, setting=setting, env_config=env_cfg, train=train_cfg,
            hidden=tuple(hidden) if hidden is not None else None,
            normalizer_layouts=_typed(pop("train.normalizer_layouts", 1000), 1000, "train.normalizer_layouts"),
            eval=ev, gamma=pop("experiment.gamma"),
            methods=tuple(methods) if methods is not None else None,
            seed=_typed(pop("experiment.seed", 0), 0, "experiment.seed"),
            out=pop("experiment.out", "runs/default"))
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    if flat:
        raise ConfigError(f"unknown config keys: {sorted(flat)}")
    return cfg


def _flatten(doc, prefix=""):
    out = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def parse_config_text(text: str) -> dict:
    try:
        return _flatten(tomli.loads(text))
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"config syntax error: {e}") from None


def dump_config_text(flat: dict) -> str:
    """One ``key = value`` line per constant, in a stable order."""
    return "".join(f"{k} = {json.dumps(v)}\n" for k, v in flat.items())


def load_config(path=None, paper_scale=False, **overrides) -> ExperimentConfig:
    """Defaults, then the paper-scale preset, then the file, then ``overrides`` (dotted keys)."""
    flat = parse_config_text(Path(path).read_text()) if path else {}
    flat.update({k: v for k, v in overrides.items() if v is not None})
    if paper_scale:
        env_name = flat.get("experiment.environment", "mimo")
        preset = dict(PAPER_SCALE, **{"eval.pool_size": PAPER_POOL.get(env_name, 2000)})
        flat = {**preset, **flat}
    return from_flat(flat)


def _seq(seed, stream):
    return np.random.SeedSequence(seed, spawn_key=(STREAMS[stream],))


def stream_rng(seed, stream):
    return np.random.default_rng(_seq(seed, stream))


# ---- reports ---------------------------------------------------------------

@dataclass
class MethodResult:
    mean_nominal: float  # bits/s
    mean_robust: float  # bits/s
    robust: np.ndarray  # per-scenario gamma-percentile min-rate, bits/s
    nominal: np.ndarray  # per-scenario nominal min-rate, bits/s


@dataclass
class EvalReport:
    environment: str
    gamma: float
    methods: dict  # name -> MethodResult, in evaluation order
    config: dict = field(default_factory=dict)  # flat echo of every constant
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, r in self.methods.items():
            if len(r.robust) != len(r.nominal):
                raise ValueError(f"{name}: robust and nominal sample counts differ")
        sizes = {len(r.robust) for r in self.methods.values()}
        if len(sizes) > 1:
            raise ValueError("methods were scored on pools of different sizes")
        pool = self.config.get("eval.pool_size")
        if pool is not None and sizes and sizes != {pool}:
            raise ValueError("CDF sample count differs from the evaluation pool size")

    def to_json(self) -> str:
        doc = {
            "format_version": REPORT_FORMAT,
            "environment": self.environment,
            "gamma": self.gamma,
            "metadata": self.metadata,
            "config": self.config,
            "methods": {name: {"mean_nominal": r.mean_nominal, "mean_robust": r.mean_robust,
                               "robust": [float(v) for v in r.robust],
                               "nominal": [float(v) for v in r.nominal]}
                        for name, r in self.methods.items()},
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_json(cls, text) -> EvalReport:
        doc = json.loads(text)
        if doc.get("format_version") != REPORT_FORMAT:
            raise ValueError(f"unsupported report format {doc.get('format_version')!r}")
        methods = {name: MethodResult(m["mean_nominal"], m["mean_robust"],
                                      np.array(m["robust"], dtype=np.float64),
                                      np.array(m["nominal"], dtype=np.float64))
                   for name, m in doc["methods"].items()}
        return cls(doc["environment"], doc["gamma"], methods, doc["config"], doc["metadata"])

    @classmethod
    def load(cls, path) -> EvalReport:
        return cls.from_json(Path(path).read_text())


def _fmt(v):
    return f"{v:.6g}"


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def summary_csv(report: EvalReport) -> str:
    rows = [[name, _fmt(r.mean_nominal / 1e6), _fmt(r.mean_robust / 1e6), len(r.robust)]
            for name, r in report.methods.items()]
    return _csv_text(["method", "mean_nominal_mbps", "mean_robust_mbps", "n_scenarios"], rows)


def emit_cdf(report: EvalReport, method: str) -> str:
    """Sorted robust values (Mbps) with empirical CDF ordinates k/n."""
    if method not in report.methods:
        raise KeyError(f"method {method!r} not in report (has {list(report.methods)})")
    v = np.sort(report.methods[method].robust)
    n = len(v)
    rows = [[_fmt(r / 1e6), _fmt((k + 1) / n)] for k, r in enumerate(v)]
    return _csv_text(["rate_mbps", "cdf"], rows)


@dataclass
class Comparison:
    table: list  # (method, mean_nominal_mbps, mean_robust_mbps)
    robust_ratio: dict  # (a, b) -> robust_a / robust_b
    nominal_ratio: dict
    flags: dict  # ordering name -> bool, only for orderings whose methods are all present


def _strict_chain(values):
    return all(a > b for a, b in zip(values, values[1:]))


def compare_methods(report: EvalReport) -> Comparison:
    """Pairwise ratios and whether the expected orderings hold.

    Robust: inject > nominal-trained > (full power) > max-min oracle.
    Nominal: max-min oracle > nominal-trained >= inject.
    """
    m = report.methods
    if len(m) < 2:
        raise ValueError("need at least two methods to compare")
    table = [(k, r.mean_nominal / 1e6, r.mean_robust / 1e6) for k, r in m.items()]
    robust_ratio, nominal_ratio = {}, {}
    for a in m:
        for b in m:
            if a != b:
                robust_ratio[(a, b)] = m[a].mean_robust / m[b].mean_robust
                nominal_ratio[(a, b)] = m[a].mean_nominal / m[b].mean_nominal
    flags = {}
    chain = [k for k in ("inject", "nominal", "full", "maxmin") if k in m]
    if len(chain) >= 2:
        flags["robust_order"] = _strict_chain([m[k].mean_robust for k in chain])
    if {"maxmin", "nominal", "inject"} <= set(m):
        flags["nominal_order"] = (m["maxmin"].mean_nominal > m["nominal"].mean_nominal
                                  >= m["inject"].mean_nominal)
    return Comparison(table, robust_ratio, nominal_ratio, flags)


def comparison_csv(c: Comparison) -> str:
    rows = [[a, b, _fmt(c.robust_ratio[(a, b)]), _fmt(c.nominal_ratio[(a, b)])]
            for (a, b) in c.robust_ratio]
    return _csv_text(["method", "versus", "robust_ratio", "nominal_ratio"], rows)


# ---- running ---------------------------------------------------------------

@contextmanager
def output_dir(path):
    """Exclusive, marked-partial access to an output directory."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lock = path / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RuntimeError(f"{path} is in use by another run (remove {lock} if stale)") from None
    os.close(fd)
    marker = path / "PARTIAL"
    marker.write_text("run in progress\n")
    try:
        yield path
    except BaseException as e:
        marker.write_text(f"run failed: {type(e).__name__}: {e}\n")
        raise
    else:
        marker.unlink()
    finally:
        lock.unlink(missing_ok=True)


def _prepare_env(config, out, reuse):
    env = build_env(config)
    if config.environment == "d2d":
        path = out / "normalizer.json"
        if reuse and path.exists():
            env.normalizer = d2d.InputNormalizer.load(path)
        else:
            env.fit_normalizer(stream_rng(config.seed, "normalizer"), config.normalizer_layouts)
            env.normalizer.save(path)
    return env


def _learned_model(method, config, env, out, reuse):
    ckpt = out / f"checkpoint_{method}.json"
    dims = [env.n_in, *hidden_widths(config), env.n_links]
    if reuse and ckpt.exists():
        log.info("%s: reusing %s", method, ckpt)
        return load_checkpoint(ckpt, expect_dims=dims)
    # both learned methods start from the same weights and see the same data
    model = init_mlp(dims, env.output_activation, rng=stream_rng(config.seed, "init"))
    tc = replace(config.train, mode="inject" if method == "inject" else "nominal")
    best, tlog = train(model, env, tc, seed=_seq(config.seed, "train"))
    log.info("%s: best epoch %d of %d", method, tlog.best_epoch, len(tlog.epochs))
    save_checkpoint(best, ckpt)
    tlog.write_csv(out / f"trainlog_{method}.csv")
    return best


def train_models(config: ExperimentConfig, out=None, reuse=False) -> dict:
    """Train the learned methods in ``config.methods`` and write checkpoints."""
    with output_dir(out or config.out) as out:
        (out / "config.toml").write_text(dump_config_text(to_flat(config)))
        env = _prepare_env(config, out, reuse)
        return {m: _learned_model(m, config, env, out, reuse) for m in config.methods if m in LEARNED}


def run_experiment(config: ExperimentConfig, out=None, reuse_checkpoints=False) -> EvalReport:
    """Train, evaluate every method on one shared pool with shared draws, write all outputs."""
    with output_dir(out or config.out) as out:
        (out / "config.toml").write_text(dump_config_text(to_flat(config)))
        env = _prepare_env(config, out, reuse_checkpoints)
        models = {m: _learned_model(m, config, env, out, reuse_checkpoints)
                  for m in config.methods if m in LEARNED}
        pool = env.sample(stream_rng(config.seed, "pool"), config.eval.pool_size)
        policies = {}
        for m in config.methods:
            if m in LEARNED:
                policies[m] = predict(models[m], env.features(pool))
            elif m == "maxmin":
                policies[m] = baselines.maxmin_batch(env.nominal_gains(pool), env.bandwidth, env.constraint)
            elif m == "uniform":
                policies[m] = baselines.uniform_power(env.n_links)
            else:
                policies[m] = baselines.full_power(env.n_links)
        scores = evaluate_policies(env, pool, policies, config.eval.L_eval, config.gamma,
                                   stream_rng(config.seed, "eval"))
        flat = to_flat(config, include_out=False)
        digest = hashlib.sha256(json.dumps(flat).encode()).hexdigest()[:16]
        report = EvalReport(
            config.environment, config.gamma,
            {m: MethodResult(s.mean_nominal, s.mean_robust, s.robust, s.nominal) for m, s in scores.items()},
            flat, {"package_version": __version__, "numpy_version": np.__version__,
                   "run_id": digest, "seed": config.seed})
        write_report(report, out)
        return report


def write_report(report: EvalReport, out):
    out = Path(out)
    (out / "report.json").write_text(report.to_json())
    (out / "summary.csv").write_text(summary_csv(report))
    for m in report.methods:
        (out / f"cdf_{m}.csv").write_text(emit_cdf(report, m))


def alpha_selection(config: ExperimentConfig, n_scenarios=200, n_realizations=200):
    """RZF regularizer with the best median equal-power min-rate; returns (best, medians)."""
    if config.environment != "mimo":
        raise ConfigError("alpha selection applies to the mimo environment")
    return mimo.select_alpha(config.env_config, stream_rng(config.seed, "alpha"),
                             n_scenarios=n_scenarios, n_realizations=n_realizations)
