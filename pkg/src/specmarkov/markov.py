"""Empirical transition estimation and belief propagation over composite states."""

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse

from . import kernels
from .errors import DataError
from .statespace import (
    FullSpace,
    SimpleSpace,
    SmartSpace,
    check_belief,
    code_pattern,
    encode,
    load_table,
    pattern_code,
    save_table,
)

DENSE_LIMIT = 4096
# hard decisions need prob > 0.5 by more than rounding noise; exact ties are idle
HARD_MARGIN = 1e-12
FORMAT_TAG = "specmarkov-markov 1"


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic matrix over the states of ``space``.

    ``values`` is a dense array for spaces of at most ``DENSE_LIMIT`` states
    and a ``scipy.sparse.csr_array`` beyond.
    """

    values: object
    space: object

    def __post_init__(self):
        n = self.space.size
        if self.values.shape != (n, n):
            raise DataError(f"matrix shape {self.values.shape} does not match {n} states")
        if sparse.issparse(self.values):
            vals = sparse.csr_array(self.values, dtype=np.float64)
            vals.sum_duplicates()
            data, rows = vals.data, vals.sum(axis=1)
        else:
            vals = np.array(self.values, dtype=np.float64)
            vals.setflags(write=False)
            data, rows = vals, vals.sum(axis=1)
        if not np.all(np.isfinite(data)) or np.any(data < 0):
            raise DataError("transition matrix entries must be finite and non-negative")
        if np.max(np.abs(rows - 1.0)) > 1e-9:
            raise DataError("transition matrix rows must sum to 1")
        object.__setattr__(self, "values", vals)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def is_sparse(self):
        return sparse.issparse(self.values)

    def dense(self):
        return self.values.toarray() if self.is_sparse else np.array(self.values)

    @cached_property
    def csr(self):
        """``(indptr, indices, data)`` of the non-zero entries, as int64/float64."""
        m = self.values if self.is_sparse else sparse.csr_array(self.values)
        m = sparse.csr_array(m)
        m.eliminate_zeros()
        return (m.indptr.astype(np.int64), m.indices.astype(np.int64),
                m.data.astype(np.float64))

    def row(self, i):
        if self.is_sparse:
            return self.values[[i], :].toarray()[0]
        return np.array(self.values[i])


@dataclass(frozen=True, eq=False)
class MarkovModel:
    space: object
    matrix: TransitionMatrix
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.matrix.n != self.space.size:
            raise DataError("matrix dimension does not match the state space")

    @property
    def size(self):
        return self.space.size

    def with_matrix(self, values, **meta):
        return MarkovModel(self.space, TransitionMatrix(values, self.space),
                           {**self.meta, **meta})


def _window_belief(space, code):
    """Sparse encoding ``(indices, weights)`` of one full window code."""
    idx = space.index_codes(np.array([code]))[0]
    if idx >= 0:
        return np.array([idx]), np.array([1.0])
    belief = encode(space, code_pattern(int(code), space.order))
    nz = np.flatnonzero(belief)
    return nz, belief[nz]


def _fill_row(space, i):
    """Fallback distribution for a state never observed leaving."""
    targets = [j for _, j in space.successors(i) if j is not None]
    if targets:
        return np.array(sorted(set(targets)))
    # smart space: Hamming-nearest entries to either shifted pattern
    bits = space.pattern(i)
    best, pool = None, []
    for b in (0, 1):
        code = pattern_code(np.concatenate([[b], bits[:-1]]))
        ties, dist = kernels.hamming_ties(space.codes, code, 0)
        if best is None or dist < best:
            best, pool = dist, list(ties)
        elif dist == best:
            pool.extend(ties)
    return np.array(sorted(set(int(t) for t in pool)))


def estimate_pairs(space, pairs):
    """Transition matrix from an ``(N, 2)`` array of consecutive window codes.

    The result depends only on the multiset of pairs, never on their order.
    Windows missing from a smart table contribute fractional counts split
    uniformly over their Hamming tie set.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.shape[0] == 0:
        raise DataError("no transitions to estimate from")
    n = space.size
    src = space.index_codes(pairs[:, 0])
    dst = space.index_codes(pairs[:, 1])
    hit = (src >= 0) & (dst >= 0)
    dense = n <= DENSE_LIMIT

    if dense:
        counts = kernels.count_transitions(src[hit], dst[hit], n)
    else:
        ones = np.ones(int(hit.sum()))
        counts = sparse.coo_array((ones, (src[hit], dst[hit])), shape=(n, n)).tocsr()

    if not np.all(hit):
        # canonical order keeps fractional sums independent of pair order
        miss, mult = np.unique(pairs[~hit], axis=0, return_counts=True)
        rows, cols, vals = [], [], []
        for (a, b), c in zip(miss, mult):
            ia, wa = _window_belief(space, a)
            ib, wb = _window_belief(space, b)
            w = c * np.outer(wa, wb)
            rows.append(np.repeat(ia, ib.size))
            cols.append(np.tile(ib, ia.size))
            vals.append(w.ravel())
        extra = sparse.coo_array(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n)).tocsr()
        counts = counts + (extra.toarray() if dense else extra)

    totals = np.asarray(counts.sum(axis=1)).ravel()
    empty = np.flatnonzero(totals == 0)
    if dense:
        probs = np.zeros((n, n))
        seen = totals > 0
        probs[seen] = counts[seen] / totals[seen, None]
        for i in empty:
            targets = _fill_row(space, i)
            probs[i, targets] = 1.0 / targets.size
        return TransitionMatrix(probs, space)

    counts = sparse.csr_array(counts)
    inv = np.zeros(n)
    inv[totals > 0] = 1.0 / totals[totals > 0]
    probs = sparse.diags_array(inv) @ counts
    if empty.size:
        rows, cols, vals = [], [], []
        for i in empty:
            targets = _fill_row(space, i)
            rows.append(np.full(targets.size, i))
            cols.append(targets)
            vals.append(np.full(targets.size, 1.0 / targets.size))
        probs = probs + sparse.coo_array(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n)).tocsr()
    return TransitionMatrix(sparse.csr_array(probs), space)


def transition_pairs(space, trace):
    """Consecutive window-code pairs ``(code_t, code_{t+1})`` of a trace."""
    states = np.asarray(getattr(trace, "states", trace), dtype=np.uint8)
    if states.shape[0] < space.order + 1:
        raise DataError(
            f"trace of {states.shape[0]} slots is too short for order {space.order} "
            f"(need at least {space.order + 1})")
    codes = kernels.window_codes(states, space.order)
    return np.stack([codes[:-1], codes[1:]], axis=1)


def estimate(space, trace):
    """Empirical transition matrix: transition counts over row totals."""
    return estimate_pairs(space, transition_pairs(space, trace))


def fit(space, trace, **meta):
    """Estimate a :class:`MarkovModel` and record its provenance."""
    matrix = estimate(space, trace)
    info = {"trace": getattr(trace, "name", ""), "n_slots": len(trace),
            "estimator": "empirical", **space.describe(), **meta}
    return MarkovModel(space, matrix, info)


def propagate(model, belief, horizon):
    """Belief after ``horizon`` steps, via repeated vector-matrix products."""
    if horizon < 1:
        raise DataError("horizon must be at least 1")
    belief = check_belief(belief, model.size)
    indptr, indices, data = model.matrix.csr
    return kernels.propagate_csr(indptr, indices, data, belief, int(horizon))


def hard_decision(prob):
    return (np.asarray(prob) > 0.5 + HARD_MARGIN).astype(np.uint8)


def active_curves(model, beliefs, t_max):
    """Active probability at horizons ``1..t_max`` for each row of ``beliefs``."""
    beliefs = np.atleast_2d(np.asarray(beliefs, dtype=np.float64))
    indptr, indices, data = model.matrix.csr
    active = model.space.active_mask.astype(np.uint8)
    return kernels.active_curves(indptr, indices, data, beliefs, active, int(t_max))


def predict(model, sensed, horizon):
    """``(probability the PU is active at t + horizon, hard 0/1 decision)``."""
    belief = encode(model.space, sensed)
    prob = float(propagate(model, belief, horizon)[model.space.active_mask].sum())
    return prob, int(hard_decision(prob))


def predict_curve(model, sensed, t_max):
    """Active probabilities for every horizon ``1..t_max`` from one sensing vector."""
    return active_curves(model, encode(model.space, sensed)[None, :], t_max)[0]


def save_model(model, path):
    """Write a model as text; smart tables go to a ``<path>.table`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    space = model.space
    lines = [FORMAT_TAG, f"variant {space.variant}", f"order {space.order}",
             f"size {space.size}"]
    if isinstance(space, SmartSpace):
        sidecar = path.with_name(path.name + ".table")
        save_table(space, sidecar)
        lines.append(f"max_states {space.max_states if space.max_states else 'none'}")
        lines.append(f"table {sidecar.name}")
    lines.append("meta " + json.dumps(model.meta, sort_keys=True, default=str))
    m = model.matrix
    if m.is_sparse:
        indptr, indices, data = m.csr
        lines.append(f"matrix sparse {data.size}")
        for i in range(m.n):
            for p in range(indptr[i], indptr[i + 1]):
                lines.append(f"{i} {indices[p]} {float(data[p])!r}")
    else:
        lines.append("matrix dense")
        for row in m.values:
            lines.append(" ".join(repr(float(x)) for x in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _header(lines, key, path):
    line = lines.pop(0) if lines else ""
    if not line.startswith(key + " "):
        raise DataError(f"{path}: expected '{key}' line, found {line!r}")
    return line[len(key) + 1:]


def load_model(path):
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc.strerror}") from exc
    if not lines or lines.pop(0) != FORMAT_TAG:
        raise DataError(f"{path}: not a Markov model file")
    variant = _header(lines, "variant", path)
    order = int(_header(lines, "order", path))
    size = int(_header(lines, "size", path))
    if variant == "full":
        space = FullSpace(order)
    elif variant == "simple":
        space = SimpleSpace(order)
    elif variant == "smart":
        cap = _header(lines, "max_states", path)
        table = _header(lines, "table", path)
        space = load_table(path.with_name(table), None if cap == "none" else int(cap))
        if space.order != order:
            raise DataError(f"{path}: sidecar table order {space.order} != {order}")
    else:
        raise DataError(f"{path}: unknown variant {variant!r}")
    if space.size != size:
        raise DataError(f"{path}: declared size {size} != state space size {space.size}")
    meta = json.loads(_header(lines, "meta", path))
    kind = _header(lines, "matrix", path).split()
    if kind[0] == "dense":
        values = np.array([[float(x) for x in ln.split()] for ln in lines[:size]])
    elif kind[0] == "sparse":
        trip = np.array([ln.split() for ln in lines[:int(kind[1])]], dtype=object)
        values = sparse.csr_array(
            (trip[:, 2].astype(np.float64),
             (trip[:, 0].astype(np.int64), trip[:, 1].astype(np.int64))),
            shape=(size, size))
    else:
        raise DataError(f"{path}: unknown matrix storage {kind[0]!r}")
    return MarkovModel(space, TransitionMatrix(values, space), meta)
