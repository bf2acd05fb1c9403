"""Gradient fine-tuning of a transition matrix through the belief recurrence.

Starting from an empirically estimated matrix ``P``, each training pair feeds
an encoded window ``s_t`` through ``s_{t+k} = s_{t+k-1} P`` for
``k = 1..t_train`` and compares the predictions with the encodings of the
windows that actually followed. Gradients with respect to ``P`` are derived by
hand (reverse accumulation through the recurrence).
"""

import csv
from collections.abc import Sequence
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigError, DataError, DivergenceError
from .markov import TransitionMatrix
from .optim import make_optimizer
from .statespace import encode, code_pattern

LOG_EPS = 1e-12


@dataclass(frozen=True)
class FinetuneConfig:
    t_train: int
    epochs: int = 300
    learning_rate: float = 0.3
    optimizer: str = "adam"
    loss: str = "mse"
    plateau_tol: float = 1e-4
    plateau_patience: int = 5
    parameterization: str = "logits-softmax"
    init_eps: float = 1e-8

    def __post_init__(self):
        if self.t_train < 1:
            raise ConfigError("t_train must be at least 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.loss not in ("mse", "cross-entropy"):
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.parameterization not in ("logits-softmax", "project"):
            raise ConfigError(f"unknown parameterization {self.parameterization!r}")
        if self.plateau_patience < 1:
            raise ConfigError("plateau_patience must be at least 1")
        if not self.plateau_tol > 0:
            raise ConfigError("plateau_tol must be positive")


@dataclass(frozen=True)
class TrainingPair:
    input: np.ndarray
    labels: np.ndarray


class TrainingSet(Sequence):
    """Sliding-window training pairs over one trace.

    Each window is encoded once; pair ``i`` uses window ``i`` as input and
    windows ``i+1 .. i+t_train`` as labels.
    """

    def __init__(self, space, codes, t_train):
        self.space = space
        self.codes = np.asarray(codes, dtype=np.int64)
        self.t_train = int(t_train)
        uniq, inverse = np.unique(self.codes, return_inverse=True)
        self._uniq = uniq
        self._inverse = inverse.ravel()
        self._rows = np.array([_encode_code(space, c) for c in uniq])

    def __len__(self):
        return self.codes.shape[0] - self.t_train

    def window(self, i):
        return self._rows[self._inverse[i]]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        labels = self._rows[self._inverse[i + 1:i + 1 + self.t_train]]
        return TrainingPair(self.window(i).copy(), labels.copy())

    def aggregate(self):
        """Group pairs by input window: ``(inputs, counts, label_sums, label_sq)``."""
        n_pairs = len(self)
        inp = self._inverse[:n_pairs]
        groups, ginv, counts = np.unique(inp, return_inverse=True, return_counts=True)
        ginv = ginv.ravel()
        inputs = self._rows[groups]
        sums = np.zeros((groups.size, self.t_train, self.space.size))
        sq = np.zeros((groups.size, self.t_train))
        row_sq = np.einsum("ij,ij->i", self._rows, self._rows)
        for k in range(self.t_train):
            lab = self._inverse[k + 1:k + 1 + n_pairs]
            np.add.at(sums[:, k, :], ginv, self._rows[lab])
            np.add.at(sq[:, k], ginv, row_sq[lab])
        return inputs, counts.astype(np.float64), sums, sq


def _encode_code(space, code):
    idx = space.index_codes(np.array([code]))[0]
    if idx >= 0:
        row = np.zeros(space.size)
        row[idx] = 1.0
        return row
    return encode(space, code_pattern(int(code), space.order))


def build_pairs(space, trace, t_train):
    """Training pairs from every full window of ``trace`` followed by ``t_train`` more."""
    states = np.asarray(getattr(trace, "states", trace), dtype=np.uint8)
    if t_train < 1:
        raise DataError("t_train must be at least 1")
    if states.shape[0] < space.order + t_train:
        raise DataError(
            f"trace of {states.shape[0]} slots is too short for order {space.order} "
            f"and t_train {t_train}")
    return TrainingSet(space, kernels.window_codes(states, space.order), t_train)


def _dense(P):
    if isinstance(P, TransitionMatrix):
        return P.dense()
    return np.asarray(P, dtype=np.float64)


def _loss_terms(pred, labels, loss):
    if loss == "mse":
        diff = pred - labels
        return float(np.sum(diff * diff)), 2.0 * diff
    return (float(-np.sum(labels * np.log(pred + LOG_EPS))),
            -labels / (pred + LOG_EPS))


def forward(P, pair, loss="mse"):
    """Predicted beliefs for ``k = 1..t_train`` and the pair's loss."""
    P = _dense(P)
    preds = []
    s = np.asarray(pair.input, dtype=np.float64)
    for _ in range(len(pair.labels)):
        s = s @ P
        preds.append(s)
    preds = np.array(preds)
    value, _ = _loss_terms(preds, np.asarray(pair.labels, dtype=np.float64), loss)
    return preds, value


def backward(P, pair, loss="mse"):
    """Gradient of the pair's loss with respect to every entry of ``P``."""
    P = _dense(P)
    steps = len(pair.labels)
    beliefs = [np.asarray(pair.input, dtype=np.float64)]
    for _ in range(steps):
        beliefs.append(beliefs[-1] @ P)
    _, dpred = _loss_terms(np.array(beliefs[1:]), np.asarray(pair.labels, dtype=np.float64), loss)
    grad = np.zeros_like(P)
    adj = np.zeros(P.shape[0])
    for k in range(steps, 0, -1):
        adj = adj + dpred[k - 1]
        grad += np.outer(beliefs[k - 1], adj)
        adj = adj @ P.T
    return grad


def total_loss(P, pairs, loss="mse"):
    return sum(forward(P, p, loss)[1] for p in pairs)


def total_gradient(P, pairs, loss="mse"):
    P = _dense(P)
    grad = np.zeros_like(P)
    for p in pairs:
        grad += backward(P, p, loss)
    return grad


class Objective:
    """Summed loss over a training set, evaluated with pairs grouped by input.

    Pairs sharing an input window share the predicted trajectory, so the
    summed loss only needs the per-group label sums.
    """

    def __init__(self, pairs, loss="mse"):
        self.loss = loss
        if isinstance(pairs, TrainingSet):
            self.inputs, self.counts, self.label_sums, self.label_sq = pairs.aggregate()
        else:
            pairs = list(pairs)
            if not pairs:
                raise DataError("no training pairs")
            self.inputs = np.array([p.input for p in pairs], dtype=np.float64)
            self.counts = np.ones(len(pairs))
            self.label_sums = np.array([p.labels for p in pairs], dtype=np.float64)
            self.label_sq = np.einsum("ukn,ukn->uk", self.label_sums, self.label_sums)
        self.t_train = self.label_sums.shape[1]

    def value_and_grad(self, P):
        beliefs = [self.inputs]
        for _ in range(self.t_train):
            beliefs.append(beliefs[-1] @ P)
        value = 0.0
        local = []
        for k in range(1, self.t_train + 1):
            s = beliefs[k]
            lab = self.label_sums[:, k - 1, :]
            if self.loss == "mse":
                value += float(np.sum(self.counts * np.einsum("un,un->u", s, s))
                               - 2.0 * np.sum(s * lab) + np.sum(self.label_sq[:, k - 1]))
                local.append(2.0 * (self.counts[:, None] * s - lab))
            else:
                value += float(-np.sum(lab * np.log(s + LOG_EPS)))
                local.append(-lab / (s + LOG_EPS))
        grad = np.zeros_like(P)
        adj = np.zeros_like(self.inputs)
        for k in range(self.t_train, 0, -1):
            adj = adj + local[k - 1]
            grad += beliefs[k - 1].T @ adj
            adj = adj @ P.T
        return value, grad


def softmax_rows(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def softmax_backward(P, G):
    """Map a gradient with respect to ``P = softmax_rows(Z)`` onto ``Z``."""
    return P * (G - np.sum(G * P, axis=1, keepdims=True))


def simplex_projection(v):
    """Euclidean projection of each row of ``v`` onto the probability simplex."""
    v = np.atleast_2d(v)
    u = np.sort(v, axis=1)[:, ::-1]
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, v.shape[1] + 1)
    rho = np.count_nonzero(u - css / ind > 0, axis=1)
    theta = css[np.arange(v.shape[0]), rho - 1] / rho
    return np.maximum(v - theta[:, None], 0.0)


def project_rows(W):
    """Clamp negatives to zero and renormalise each row.

    A row with no positive entry left is replaced by its Euclidean simplex
    projection instead.
    """
    out = np.maximum(W, 0.0)
    sums = out.sum(axis=1)
    dead = sums <= 0
    if np.any(dead):
        out[dead] = simplex_projection(W[dead])
        sums[dead] = out[dead].sum(axis=1)
    return out / sums[:, None]


def finetune(model, pairs, config, callback=None):
    """Fine-tune ``model.matrix`` on ``pairs``; returns a new model.

    ``callback(epoch, matrix)`` is called after every optimizer step with the
    effective (row-stochastic) matrix. The returned model's ``meta`` holds
    ``loss_history`` (loss before each epoch's step) and ``final_loss``.
    """
    if isinstance(pairs, TrainingSet) and pairs.space is not model.space:
        if pairs.space.describe() != model.space.describe():
            raise DataError("training pairs were built on a different state space")
    P0 = model.matrix.dense()
    objective = Objective(pairs, config.loss)
    if objective.inputs.shape[1] != P0.shape[0]:
        raise DataError("training pair dimension does not match the model")

    softmax = config.parameterization == "logits-softmax"
    theta0 = np.log(P0 + config.init_eps) if softmax else P0.copy()
    params = {"theta": theta0.copy()}
    opt = make_optimizer(config.optimizer, config.learning_rate)

    def effective():
        return softmax_rows(params["theta"]) if softmax else params["theta"]

    history = []
    flat = 0
    stopped_early = False
    for epoch in range(1, config.epochs + 1):
        P = effective()
        value, grad = objective.value_and_grad(P)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise DivergenceError(epoch, value)
        history.append(value)
        if len(history) > 1:
            prev = history[-2]
            # Adam oscillates early on, so one flat epoch is not a plateau
            flat = flat + 1 if abs(prev - value) <= config.plateau_tol * max(abs(prev), 1e-300) else 0
            if flat >= config.plateau_patience:
                stopped_early = True
                break
        if softmax:
            grad = softmax_backward(P, grad)
        opt.step(params, {"theta": grad})
        if not softmax:
            params["theta"] = project_rows(params["theta"])
        if not np.all(np.isfinite(params["theta"])):
            raise DivergenceError(epoch, float("nan"))
        if callback is not None:
            callback(epoch, effective())

    final = effective().copy()
    # rows whose parameters never moved keep their exact input probabilities
    unmoved = np.all(params["theta"] == theta0, axis=1)
    final[unmoved] = P0[unmoved]
    final_loss, _ = objective.value_and_grad(final)
    if not np.isfinite(final_loss):
        raise DivergenceError(len(history), final_loss)
    return model.with_matrix(
        final,
        estimator="finetuned",
        finetune=asdict(config),
        loss_history=history,
        final_loss=final_loss,
        epochs_run=len(history),
        stopped_early=stopped_early,
    )


def write_loss_csv(path, losses):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        for epoch, value in enumerate(losses, start=1):
            writer.writerow([epoch, repr(float(value))])
    return path
