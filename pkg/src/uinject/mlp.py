"""Dense feed-forward network with hand-written reverse-mode gradients.

The network maps a measurement vector q to an allocation x.  Inputs may be a
single vector of shape (d,) or a batch of shape (B, d); parameter gradients
are summed over the batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = "uinject-mlp/1"

HIDDEN_ACTIVATIONS = ("relu",)
OUTPUT_ACTIVATIONS = ("softmax", "sigmoid")


class CheckpointError(ValueError):
    """Raised when a checkpoint cannot be loaded into the requested shape."""


class NonFiniteGradientError(FloatingPointError):
    """Raised by :func:`step` when a gradient holds NaN or inf."""


@dataclass
class OptimizerConfig:
    kind: str = "adam"  # "adam" or "sgd"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if self.lr < 0:
            raise ValueError("learning rate must be nonnegative")


@dataclass
class GradientTape:
    inputs: list = field(default_factory=list)  # activation entering each layer
    pre: list = field(default_factory=list)  # pre-activation of each layer
    output: np.ndarray | None = None
    batched: bool = False


@dataclass
class MlpModel:
    layer_dims: list[int]
    weights: list[np.ndarray]  # weights[l] has shape (layer_dims[l+1], layer_dims[l])
    biases: list[np.ndarray]
    hidden_activation: str = "relu"
    output_activation: str = "softmax"
    optimizer_state: dict = field(default_factory=dict)
    tape: GradientTape | None = field(default=None, repr=False)

    def __post_init__(self):
        self.layer_dims = [int(d) for d in self.layer_dims]
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise ValueError(f"bad layer_dims {self.layer_dims}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        n = len(self.layer_dims) - 1
        if len(self.weights) != n or len(self.biases) != n:
            raise ValueError("number of weight/bias arrays does not match layer_dims")
        for l in range(n):
            shape = (self.layer_dims[l + 1], self.layer_dims[l])
            if self.weights[l].shape != shape:
                raise ValueError(f"layer {l}: weight shape {self.weights[l].shape}, expected {shape}")
            if self.biases[l].shape != (shape[0],):
                raise ValueError(f"layer {l}: bias shape {self.biases[l].shape}, expected {(shape[0],)}")

    @property
    def n_in(self) -> int:
        return self.layer_dims[0]

    @property
    def n_out(self) -> int:
        return self.layer_dims[-1]

    def params(self) -> list[np.ndarray]:
        """Parameters in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> MlpModel:
        state = {k: [a.copy() for a in v] if isinstance(v, list) else v
                 for k, v in self.optimizer_state.items()}
        return MlpModel(list(self.layer_dims), [W.copy() for W in self.weights],
                        [b.copy() for b in self.biases], self.hidden_activation,
                        self.output_activation, state)

    def __call__(self, q):
        return predict(self, q)


def init_mlp(layer_dims, output_activation="softmax", rng=None) -> MlpModel:
    """He-uniform weights (bound sqrt(6/fan_in)), zero biases."""
    rng = np.random.default_rng(rng)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(list(layer_dims), weights, biases, "relu", output_activation)


def _sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0, e) / (1.0 + e)


def _output(z, kind):
    if kind == "softmax":
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)
    return _sigmoid(z)


def _check_input(model, q):
    q = np.asarray(q, dtype=np.float64)
    if q.ndim not in (1, 2) or q.shape[-1] != model.n_in:
        raise ValueError(f"input shape {q.shape} incompatible with input width {model.n_in}")
    return q


def predict(model: MlpModel, q) -> np.ndarray:
    """Inference only: no tape is recorded, the model is not touched."""
    a = _check_input(model, q)
    last = len(model.weights) - 1
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W.T + b
        a = _output(z, model.output_activation) if l == last else np.maximum(z, 0.0)
    return a


def forward(model: MlpModel, q) -> np.ndarray:
    """Compute x = F(q) and record the tape needed by :func:`backward`."""
    a = _check_input(model, q)
    batched = a.ndim == 2
    a2 = a if batched else a[None, :]
    tape = GradientTape(batched=batched)
    last = len(model.weights) - 1
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        tape.inputs.append(a2)
        z = a2 @ W.T + b
        tape.pre.append(z)
        a2 = _output(z, model.output_activation) if l == last else np.maximum(z, 0.0)
    tape.output = a2
    model.tape = tape
    return a2 if batched else a2[0]


def backward(model: MlpModel, output_gradient, tape: GradientTape | None = None) -> list[np.ndarray]:
    """Contract dx/dTheta with the given dU/dx.

    Returns gradients in the order of :meth:`MlpModel.params`.  For batched
    input the per-row contributions are summed.
    """
    tape = tape if tape is not None else model.tape
    if tape is None or tape.output is None:
        raise RuntimeError("backward called before forward")
    g = np.asarray(output_gradient, dtype=np.float64)
    g = g if g.ndim == 2 else g[None, :]
    y = tape.output
    if g.shape != y.shape:
        raise ValueError(f"output gradient shape {g.shape} does not match output {y.shape}")

    if model.output_activation == "softmax":
        dz = y * (g - np.sum(g * y, axis=-1, keepdims=True))
    else:
        # 1 - y evaluated as sigmoid(-z): stays nonzero deep in saturation
        dz = g * y * _sigmoid(-tape.pre[-1])

    grads = [None] * (2 * len(model.weights))
    for l in range(len(model.weights) - 1, -1, -1):
        grads[2 * l] = dz.T @ tape.inputs[l]
        grads[2 * l + 1] = dz.sum(axis=0)
        if l > 0:
            da = dz @ model.weights[l]
            dz = da * (tape.pre[l - 1] > 0)  # relu'(0) = 0
    return grads


def step(model: MlpModel, gradients, config: OptimizerConfig) -> MlpModel:
    """One ascent step (the objective is maximized).  Updates in place."""
    params = model.params()
    if len(gradients) != len(params):
        raise ValueError("gradient list does not match parameter list")
    for i, (p, g) in enumerate(zip(params, gradients)):
        if g.shape != p.shape:
            raise ValueError(f"gradient {i} has shape {g.shape}, parameter has {p.shape}")
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise NonFiniteGradientError(f"gradient {i} (shape {g.shape}) has {bad} non-finite entries; step aborted")

    if config.kind == "sgd":
        for p, g in zip(params, gradients):
            p += config.lr * g
        return model

    st = model.optimizer_state
    if st.get("kind") != "adam" or len(st.get("m", [])) != len(params):
        st.clear()
        st.update(kind="adam", t=0, m=[np.zeros_like(p) for p in params],
                  v=[np.zeros_like(p) for p in params])
    st["t"] += 1
    t = st["t"]
    c1 = 1.0 - config.beta1 ** t
    c2 = 1.0 - config.beta2 ** t
    for p, g, m, v in zip(params, gradients, st["m"], st["v"]):
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * g * g
        p += config.lr * (m / c1) / (np.sqrt(v / c2) + config.eps)
    return model


def save_checkpoint(model: MlpModel, path) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "layer_dims": model.layer_dims,
        "activations": {"hidden": model.hidden_activation, "output": model.output_activation},
        "weights": [W.ravel().tolist() for W in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_checkpoint(path, expect_dims=None) -> MlpModel:
    """Load a model; ``expect_dims`` guards against loading into the wrong network."""
    try:
        doc = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable checkpoint ({e})") from None
    if not isinstance(doc, dict) or doc.get("format_version") != FORMAT_VERSION:
        got = doc.get("format_version") if isinstance(doc, dict) else None
        raise CheckpointError(f"{path}: format version {got!r}, expected {FORMAT_VERSION!r}")
    try:
        dims = [int(d) for d in doc["layer_dims"]]
        if expect_dims is not None and dims != list(expect_dims):
            raise CheckpointError(f"{path}: layer_dims {dims} do not match expected {list(expect_dims)}")
        weights = [np.array(w, dtype=np.float64).reshape(o, i)
                   for w, i, o in zip(doc["weights"], dims[:-1], dims[1:])]
        biases = [np.array(b, dtype=np.float64) for b in doc["biases"]]
        return MlpModel(dims, weights, biases, doc["activations"]["hidden"],
                        doc["activations"]["output"])
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"{path}: malformed checkpoint ({e})") from None
