"""Feed-forward neural-network baseline trained with hand-written backprop.

The network maps a sensing vector (most recent slot first) to ``t_train``
sigmoid outputs, output ``k`` being the probability that the PU is active
``k + 1`` slots after the last sensed slot. Hidden layers use ReLU; the loss
is the mean squared error against 0/1 labels.
"""

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DivergenceError
from .optim import Adam

FORMAT_TAG = "specmarkov-mlp 1"


@dataclass(frozen=True)
class MlpConfig:
    input_size: int
    output_size: int
    hidden_sizes: tuple = (80, 80, 80)
    learning_rate: float = 0.001
    epochs: int = 200
    batch_size: int = 32
    rng_seed: int = 0
    val_fraction: float = 0.1
    patience: int = 10

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        sizes = (self.input_size, self.output_size, *self.hidden_sizes)
        if any(s < 1 for s in sizes):
            raise ConfigError("all layer sizes must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must lie in [0, 1)")

    @property
    def layer_sizes(self):
        return (self.input_size, *self.hidden_sizes, self.output_size)


@dataclass
class MlpModel:
    weights: list
    biases: list
    config: MlpConfig
    history: dict = field(default_factory=dict)

    def __post_init__(self):
        sizes = self.config.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(self.weights):
            raise DataError("layer count does not match the configuration")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (sizes[k], sizes[k + 1]) or b.shape != (sizes[k + 1],):
                raise DataError(f"layer {k} has shape {W.shape}/{b.shape}, "
                                f"expected ({sizes[k]}, {sizes[k + 1]})")

    @property
    def t_train(self):
        return self.config.output_size

    def params(self):
        out = {}
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            out[f"W{k}"] = W
            out[f"b{k}"] = b
        return out


def build_nn_pairs(trace, sensing, t_train):
    """``(inputs, labels)`` arrays from a sliding window over ``trace``.

    Row ``i`` holds the ``sensing`` states ending at slot ``sensing - 1 + i``
    (most recent first) and the ``t_train`` states that follow.
    """
    states = np.asarray(getattr(trace, "states", trace), dtype=np.uint8)
    if sensing < 1 or t_train < 1:
        raise DataError("sensing and t_train must be positive")
    n = states.shape[0] - sensing - t_train + 1
    if n < 1:
        raise DataError(
            f"trace of {states.shape[0]} slots is too short for sensing {sensing} "
            f"and t_train {t_train}")
    windows = np.lib.stride_tricks.sliding_window_view(states, sensing + t_train)[:n]
    inputs = windows[:, :sensing][:, ::-1].astype(np.float64)
    labels = windows[:, sensing:].astype(np.float64)
    return inputs, labels


def init_model(config):
    """He-initialised weights, zero biases."""
    rng = np.random.default_rng(config.rng_seed)
    sizes = config.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases, config)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def forward(model, X):
    """Return the list of layer activations; the last entry is the sigmoid output."""
    acts = [np.asarray(X, dtype=np.float64)]
    last = len(model.weights) - 1
    for k, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = acts[-1] @ W + b
        acts.append(_sigmoid(z) if k == last else np.maximum(z, 0.0))
    return acts


def loss(model, X, Y):
    out = forward(model, X)[-1]
    return float(np.mean((out - Y) ** 2))


def loss_and_grads(model, X, Y):
    """Mean squared error and its gradient for every weight and bias."""
    acts = forward(model, X)
    out = acts[-1]
    diff = out - Y
    value = float(np.mean(diff * diff))
    # d(mean sq)/d(out), then through the sigmoid
    delta = (2.0 / diff.size) * diff * out * (1.0 - out)
    grads = {}
    for k in range(len(model.weights) - 1, -1, -1):
        grads[f"W{k}"] = acts[k].T @ delta
        grads[f"b{k}"] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ model.weights[k].T) * (acts[k] > 0)
    return value, grads


def train(config, inputs, labels):
    """Mini-batch Adam on mean squared error with early stopping.

    The last ``val_fraction`` of the pairs is held out; training stops once
    the held-out loss has not improved for ``patience`` epochs and the best
    weights are restored.
    """
    X = np.asarray(inputs, dtype=np.float64)
    Y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("no training pairs")
    if X.shape[1] != config.input_size or Y.shape != (X.shape[0], config.output_size):
        raise DataError(f"pairs of shape {X.shape}/{Y.shape} do not match the configuration")
    n_val = int(round(config.val_fraction * X.shape[0]))
    if n_val >= X.shape[0]:
        n_val = 0
    Xtr, Ytr = X[:X.shape[0] - n_val], Y[:X.shape[0] - n_val]
    Xval, Yval = X[X.shape[0] - n_val:], Y[X.shape[0] - n_val:]

    model = init_model(config)
    params = model.params()
    opt = Adam(config.learning_rate)
    rng = np.random.default_rng(config.rng_seed + 1)
    train_hist, val_hist = [], []
    best, best_epoch, best_params = np.inf, 0, None
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(Xtr.shape[0])
        for start in range(0, order.size, config.batch_size):
            idx = order[start:start + config.batch_size]
            _, grads = loss_and_grads(model, Xtr[idx], Ytr[idx])
            opt.step(params, grads)
        train_loss = loss(model, Xtr, Ytr)
        if not np.isfinite(train_loss):
            raise DivergenceError(epoch, train_loss)
        train_hist.append(train_loss)
        monitor = loss(model, Xval, Yval) if n_val else train_loss
        val_hist.append(monitor)
        if monitor < best:
            best, best_epoch = monitor, epoch
            best_params = {k: v.copy() for k, v in params.items()}
        elif epoch - best_epoch >= config.patience:
            break
    for k, v in best_params.items():
        params[k][...] = v
    model.history = {"train_loss": train_hist, "val_loss": val_hist,
                     "best_epoch": best_epoch, "epochs_run": len(train_hist)}
    return model


def predict_proba(model, sensed, t_max):
    """Active probabilities for horizons ``1..t_max``; rows follow ``sensed`` rows."""
    if not 1 <= t_max <= model.t_train:
        raise ConfigError(
            f"the network was trained for horizons 1..{model.t_train} "
            f"and cannot predict horizon {t_max}")
    X = np.atleast_2d(np.asarray(sensed, dtype=np.float64))
    if X.shape[1] != model.config.input_size:
        raise DataError(f"sensed vectors must have length {model.config.input_size}")
    return forward(model, X)[-1][:, :t_max]


def predict_nn(model, sensed, horizon):
    """``(probability, hard decision)`` for one sensing vector and horizon."""
    if not 1 <= horizon <= model.t_train:
        raise ConfigError(
            f"horizon {horizon} is outside the training range 1..{model.t_train}")
    prob = float(predict_proba(model, np.asarray(sensed)[None, :], horizon)[0, horizon - 1])
    return prob, int(prob > 0.5)


def save_model(model, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [FORMAT_TAG, "config " + json.dumps(asdict(model.config), sort_keys=True)]
    for k, (W, b) in enumerate(zip(model.weights, model.biases)):
        lines.append(f"layer {k} {W.shape[0]} {W.shape[1]}")
        lines.extend(" ".join(repr(float(x)) for x in row) for row in W)
        lines.append(" ".join(repr(float(x)) for x in b))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_model(path):
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != FORMAT_TAG:
        raise DataError(f"{path}: not an MLP model file")
    if not lines[1].startswith("config "):
        raise DataError(f"{path}: missing config line")
    config = MlpConfig(**json.loads(lines[1][len("config "):]))
    weights, biases = [], []
    pos = 2
    while pos < len(lines):
        head = lines[pos].split()
        if len(head) != 4 or head[0] != "layer":
            raise DataError(f"{path}:{pos + 1}: expected a layer header")
        rows, cols = int(head[2]), int(head[3])
        W = np.array([[float(x) for x in ln.split()] for ln in lines[pos + 1:pos + 1 + rows]])
        b = np.array([float(x) for x in lines[pos + 1 + rows].split()])
        weights.append(W.reshape(rows, cols))
        biases.append(b)
        pos += rows + 2
    return MlpModel(weights, biases, config)


def write_loss_csv(path, model):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for k, (tl, vl) in enumerate(zip(model.history.get("train_loss", []),
                                         model.history.get("val_loss", [])), start=1):
            writer.writerow([k, repr(tl), repr(vl)])
    return path
