"""Composite-state spaces for high-order binary Markov chains.

A composite state summarises the last ``order`` slot states. Patterns are
always stored most recent slot first, so ``pattern[0]`` is ``q_t``.

Three variants are provided:

* :class:`FullSpace` -- every binary vector of length ``order``; the index is
  the pattern read as a binary number with ``pattern[0]`` as the MSB.
* :class:`SimpleSpace` -- run-length states ``(level, run)`` with
  ``run`` in ``1..order``; index ``level * order + run - 1``.
* :class:`SmartSpace` -- a dictionary of the distinct windows met in a
  training trace, in order of first appearance, optionally capped.
"""

from pathlib import Path

import numpy as np

from . import kernels
from .errors import DataError

FULL_MAX_ORDER = 24
CODE_MAX_ORDER = 62


def pattern_code(bits):
    """Integer code of a most-recent-first pattern (``bits[0]`` is the MSB)."""
    code = 0
    for b in bits:
        code = (code << 1) | int(b)
    return code


def code_pattern(code, length):
    return np.array([(code >> (length - 1 - k)) & 1 for k in range(length)], dtype=np.uint8)


def _as_bits(sensed):
    bits = np.asarray(sensed)
    if bits.ndim != 1 or bits.size == 0:
        raise DataError("sensed vector must be a non-empty 1-D sequence")
    if not np.all((bits == 0) | (bits == 1)):
        raise DataError("sensed vector must be binary")
    return bits.astype(np.uint8)


def _leading_run(bits):
    change = np.flatnonzero(bits != bits[0])
    return int(change[0]) if change.size else bits.shape[0]


class StateSpace:
    """Common interface of the three state-space variants."""

    variant = None

    def __init__(self, order):
        self.order = int(order)

    @property
    def size(self):
        raise NotImplementedError

    def __len__(self):
        return self.size

    def pattern(self, index):
        """Representative most-recent-first pattern of state ``index``."""
        raise NotImplementedError

    def index_codes(self, codes):
        """State index of each full-window code (see :func:`pattern_code`); -1 where absent."""
        raise NotImplementedError

    def locate(self, states):
        """State index of every full window of ``states``; -1 where absent.

        Entry ``k`` is the window ending at slot ``k + order - 1``.
        """
        return self.index_codes(kernels.window_codes(np.asarray(states, dtype=np.uint8), self.order))

    def candidates(self, sensed):
        """Indices of the states consistent with a sensed vector."""
        raise NotImplementedError

    def successors(self, index):
        """``[(next_bit, next_index or None)]`` for ``next_bit`` in (0, 1)."""
        raise NotImplementedError

    @property
    def active_mask(self):
        """Boolean mask of states whose most recent slot is active."""
        mask = getattr(self, "_active_mask", None)
        if mask is None:
            mask = np.array([self.pattern(i)[0] == 1 for i in range(self.size)], dtype=bool)
            mask.setflags(write=False)
            self._active_mask = mask
        return mask

    def encode(self, sensed):
        return encode(self, sensed)

    def describe(self):
        return {"variant": self.variant, "order": self.order, "size": self.size}

    def __repr__(self):
        return f"{type(self).__name__}(order={self.order}, size={self.size})"


class FullSpace(StateSpace):
    variant = "full"

    @property
    def size(self):
        return 1 << self.order

    def pattern(self, index):
        return code_pattern(int(index), self.order)

    @property
    def active_mask(self):
        mask = getattr(self, "_active_mask", None)
        if mask is None:
            mask = np.arange(self.size) >= (1 << (self.order - 1))
            mask.setflags(write=False)
            self._active_mask = mask
        return mask

    def index_codes(self, codes):
        return np.asarray(codes, dtype=np.int64)

    def candidates(self, sensed):
        bits = _as_bits(sensed)
        free = self.order - bits.shape[0]
        base = pattern_code(bits) << free
        return np.arange(base, base + (1 << free), dtype=np.int64)

    def successors(self, index):
        shifted = int(index) >> 1
        top = 1 << (self.order - 1)
        return [(0, shifted), (1, top | shifted)]


class SimpleSpace(StateSpace):
    variant = "simple"

    @property
    def size(self):
        return 2 * self.order

    def index(self, level, run):
        if level not in (0, 1) or not 1 <= run <= self.order:
            raise DataError(f"no simple state ({level}, {run}) for order {self.order}")
        return level * self.order + run - 1

    def state(self, index):
        """``(level, run)`` of state ``index``."""
        level, rem = divmod(int(index), self.order)
        return level, rem + 1

    def pattern(self, index):
        level, run = self.state(index)
        bits = np.full(self.order, 1 - level, dtype=np.uint8)
        bits[:run] = level
        return bits

    @property
    def active_mask(self):
        mask = np.arange(self.size) >= self.order
        mask.setflags(write=False)
        return mask

    def locate(self, states):
        states = np.asarray(states, dtype=np.uint8)
        runs = kernels.run_lengths(states, self.order)[self.order - 1:]
        levels = states[self.order - 1:].astype(np.int64)
        return levels * self.order + runs - 1

    def index_codes(self, codes):
        codes = np.asarray(codes, dtype=np.int64)
        levels = (codes >> (self.order - 1)) & 1
        # bits equal to the level read as ones, so the run is the count of leading ones
        same = np.where(levels == 1, codes, ~codes)
        runs = np.zeros_like(codes)
        alive = np.ones(codes.shape, dtype=bool)
        for k in range(self.order):
            alive &= ((same >> (self.order - 1 - k)) & 1) == 1
            runs += alive
        return levels * self.order + runs - 1

    def candidates(self, sensed):
        bits = _as_bits(sensed)
        m = bits.shape[0]
        level = int(bits[0])
        run = _leading_run(bits)
        if run < m or m >= self.order:
            return np.array([self.index(level, min(run, self.order))], dtype=np.int64)
        # whole window constant: the true run is anywhere in [m, order]
        return np.array([self.index(level, r) for r in range(m, self.order + 1)], dtype=np.int64)

    def successors(self, index):
        level, run = self.state(index)
        stay = self.index(level, min(run + 1, self.order))
        switch = self.index(1 - level, 1)
        return sorted([(level, stay), (1 - level, switch)])


class SmartSpace(StateSpace):
    """Dictionary of observed windows; unseen patterns fall back to Hamming matching."""

    variant = "smart"

    def __init__(self, order, codes, max_states=None):
        super().__init__(order)
        codes = np.asarray(codes, dtype=np.int64)
        if codes.size == 0:
            raise DataError("a smart state space needs at least one pattern")
        if np.unique(codes).size != codes.size:
            raise DataError("smart state table contains duplicate patterns")
        codes.setflags(write=False)
        self.codes = codes
        self.max_states = max_states
        self._sort = np.argsort(codes, kind="stable")
        self._sorted = codes[self._sort]
        self._lookup = {int(c): i for i, c in enumerate(codes)}

    @property
    def size(self):
        return self.codes.shape[0]

    def pattern(self, index):
        return code_pattern(int(self.codes[index]), self.order)

    @property
    def patterns(self):
        return np.array([self.pattern(i) for i in range(self.size)], dtype=np.uint8)

    @property
    def active_mask(self):
        mask = getattr(self, "_active_mask", None)
        if mask is None:
            mask = (self.codes >> (self.order - 1)) & 1 == 1
            mask.setflags(write=False)
            self._active_mask = mask
        return mask

    def index_of(self, bits):
        return self._lookup.get(pattern_code(bits))

    def index_codes(self, codes):
        codes = np.asarray(codes, dtype=np.int64)
        pos = np.searchsorted(self._sorted, codes)
        pos = np.minimum(pos, self.size - 1)
        hit = self._sorted[pos] == codes
        return np.where(hit, self._sort[pos], -1).astype(np.int64)

    def prefix_matches(self, bits):
        shift = self.order - bits.shape[0]
        return np.flatnonzero((self.codes >> shift) == pattern_code(bits)).astype(np.int64)

    def candidates(self, sensed):
        bits = _as_bits(sensed)
        found = self.prefix_matches(bits)
        if found.size:
            return found
        return match_hamming(self, bits)

    def successors(self, index):
        bits = self.pattern(index)
        out = []
        for b in (0, 1):
            shifted = np.concatenate([[b], bits[:-1]]).astype(np.uint8)
            out.append((b, self.index_of(shifted)))
        return out

    def describe(self):
        d = super().describe()
        d["max_states"] = self.max_states
        return d


def build_full(order):
    """Full binary space of ``2**order`` states."""
    if not 1 <= order <= FULL_MAX_ORDER:
        raise DataError(
            f"full state space of order {order} is intractable "
            f"(limit {FULL_MAX_ORDER}, 2**order states); use the smart space instead")
    return FullSpace(order)


def build_simple(order):
    """Run-length space of ``2 * order`` states."""
    if order < 1:
        raise DataError("order must be at least 1")
    return SimpleSpace(order)


def build_smart(training, order, max_states=None):
    """Dictionary of distinct training windows, first come first added.

    Windows of length ``order`` are visited at every slot in time order and
    each new pattern is appended until ``max_states`` entries exist
    (``None`` means no cap).
    """
    if not 1 <= order <= CODE_MAX_ORDER:
        raise DataError(f"smart space order must lie in [1, {CODE_MAX_ORDER}]")
    if max_states is not None and max_states < 1:
        raise DataError("max_states must be positive or None")
    states = getattr(training, "states", training)
    if len(states) < order:
        raise DataError(f"training trace of {len(states)} slots is shorter than order {order}")
    codes = kernels.window_codes(np.asarray(states, dtype=np.uint8), order)
    uniq, first = np.unique(codes, return_index=True)
    table = uniq[np.argsort(first, kind="stable")]
    if max_states is not None:
        table = table[:max_states]
    return SmartSpace(order, table, max_states=max_states)


def match_hamming(space, pattern):
    """Smart-table entries nearest to ``pattern`` in Hamming distance.

    The distance is computed over the ``len(pattern)`` most recent bits of each
    entry. All entries attaining the minimum are returned.
    """
    bits = _as_bits(pattern)
    k = bits.shape[0]
    if k > space.order:
        raise DataError(f"pattern of length {k} exceeds order {space.order}")
    ties, _ = kernels.hamming_ties(space.codes, pattern_code(bits), space.order - k)
    return ties


def encode(space, sensed):
    """Belief vector for a sensed vector of length ``1 <= M <= order``.

    Mass is spread uniformly over the consistent states (one-hot when the
    sensed vector pins down a single state).
    """
    bits = _as_bits(sensed)
    if bits.shape[0] > space.order:
        raise DataError(
            f"sensing length {bits.shape[0]} exceeds model order {space.order}")
    idx = space.candidates(bits)
    belief = np.zeros(space.size, dtype=np.float64)
    belief[idx] = 1.0 / idx.shape[0]
    return belief


def active_probability(space, belief):
    """Total belief mass on states whose most recent slot is active."""
    return float(np.sum(np.asarray(belief)[space.active_mask]))


def successors(space, index):
    if not 0 <= index < space.size:
        raise IndexError(f"state index {index} outside [0, {space.size})")
    return space.successors(index)


def check_belief(belief, size=None, atol=1e-9):
    belief = np.asarray(belief, dtype=np.float64)
    if belief.ndim != 1 or (size is not None and belief.shape[0] != size):
        raise DataError(f"belief vector must have length {size}")
    if np.any(belief < 0) or abs(belief.sum() - 1.0) > atol:
        raise DataError("belief vector must be non-negative and sum to 1")
    return belief


def save_table(space, path):
    """Write a smart table: one pattern per line, most recent bit first."""
    path = Path(path)
    lines = ["".join(str(b) for b in space.pattern(i)) for i in range(space.size)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_table(path, max_states=None):
    path = Path(path)
    rows = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not rows:
        raise DataError(f"{path}: empty state table")
    order = len(rows[0])
    for lineno, row in enumerate(rows, start=1):
        if len(row) != order or set(row) - {"0", "1"}:
            raise DataError(f"{path}:{lineno}: bad table pattern {row!r}")
    return SmartSpace(order, [int(r, 2) for r in rows], max_states=max_states)
