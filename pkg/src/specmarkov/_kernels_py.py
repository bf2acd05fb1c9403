"""NumPy implementations of the hot kernels.

Used when the compiled extension is unavailable or disabled through the
``SPECMARKOV_PURE_PYTHON`` environment variable. Every function here has the
same signature and semantics as its counterpart in ``_kernels.pyx``.
"""

import numpy as np
from scipy import sparse

BACKEND = "python"


def window_codes(states, order):
    """Integer code of every length-``order`` window, most recent slot as MSB.

    Entry ``k`` describes the window ending at slot ``k + order - 1``.
    """
    states = np.asarray(states, dtype=np.int64)
    if order > 62:
        raise ValueError("window codes support order <= 62")
    if states.shape[0] < order:
        return np.empty(0, dtype=np.int64)
    windows = np.lib.stride_tricks.sliding_window_view(states, order)
    # window[j] is slot t - order + 1 + j; the last column is the most recent
    weights = np.left_shift(np.int64(1), np.arange(order, dtype=np.int64))
    return windows @ weights


def run_lengths(states, cap):
    """Length of the constant run ending at every slot, saturated at ``cap``."""
    states = np.asarray(states, dtype=np.int64)
    n = states.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64)
    idx = np.arange(n, dtype=np.int64)
    change = np.empty(n, dtype=bool)
    change[0] = True
    change[1:] = states[1:] != states[:-1]
    start = np.maximum.accumulate(np.where(change, idx, 0))
    return np.minimum(idx - start + 1, cap)


def count_transitions(src, dst, n):
    """Dense ``n x n`` matrix of integer transition counts."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    flat = np.bincount(src * n + dst, minlength=n * n)
    return flat.reshape(n, n).astype(np.float64)


def hamming_ties(table_codes, pattern, shift):
    """Indices of table entries closest in Hamming distance to ``pattern``.

    Distances are taken over ``code >> shift``, i.e. the most recent bits of
    each stored pattern. Returns ``(indices, distance)``.
    """
    codes = np.asarray(table_codes, dtype=np.int64)
    dist = np.bitwise_count(np.bitwise_xor(codes >> shift, np.int64(pattern)))
    best = int(dist.min())
    return np.flatnonzero(dist == best).astype(np.int64), best


def _as_operator(indptr, indices, data, n):
    return sparse.csr_array((data, indices, indptr), shape=(n, n))


def propagate_csr(indptr, indices, data, belief, steps):
    """Apply ``belief <- belief @ P`` ``steps`` times for CSR-stored ``P``."""
    belief = np.array(belief, dtype=np.float64)
    op = _as_operator(indptr, indices, data, belief.shape[0])
    for _ in range(steps):
        belief = op.T @ belief
    return belief


def active_curves(indptr, indices, data, beliefs, active, t_max):
    """Active-state probability for each belief row at horizons ``1..t_max``."""
    beliefs = np.array(beliefs, dtype=np.float64)
    n = beliefs.shape[1]
    op = _as_operator(indptr, indices, data, n)
    mask = np.asarray(active, dtype=np.float64)
    out = np.empty((beliefs.shape[0], t_max), dtype=np.float64)
    for k in range(t_max):
        beliefs = (op.T @ beliefs.T).T
        out[:, k] = beliefs @ mask
    return out
