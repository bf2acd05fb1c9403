"""Time the compiled kernels against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--quick]

Sizes follow the workloads the library sees: hour-long traces of 0.5 ms
slots, smart tables of a few thousand states and 150-step horizons.
"""

import argparse
import timeit

import numpy as np
from scipy import sparse

from specmarkov.kernels import available_backends


def cases(quick):
    rng = np.random.default_rng(0)
    n_slots = 200_000 if quick else 2_000_000
    states = (rng.random(n_slots) < 0.5).astype(np.uint8)
    n_states = 2000
    src = rng.integers(0, n_states, n_slots).astype(np.int64)
    dst = rng.integers(0, n_states, n_slots).astype(np.int64)
    codes = np.unique(rng.integers(0, 1 << 20, 5000)).astype(np.int64)

    # sparse stochastic matrix with two successors per row, like a shift register
    rows = np.repeat(np.arange(n_states), 2)
    cols = rng.integers(0, n_states, rows.size)
    vals = rng.random(rows.size)
    P = sparse.csr_array((vals, (rows, cols)), shape=(n_states, n_states))
    P = sparse.diags_array(1.0 / P.sum(axis=1)) @ P
    P = sparse.csr_array(P)
    indptr, indices, data = P.indptr.astype(np.int64), P.indices.astype(np.int64), P.data
    beliefs = rng.random((50 if quick else 300, n_states))
    beliefs /= beliefs.sum(axis=1, keepdims=True)
    active = (rng.random(n_states) < 0.5).astype(np.uint8)

    return {
        "window_codes (order 20)": lambda k: k.window_codes(states, 20),
        "run_lengths (cap 20)": lambda k: k.run_lengths(states, 20),
        "count_transitions": lambda k: k.count_transitions(src, dst, n_states),
        "hamming_ties x200": lambda k: [k.hamming_ties(codes, int(c) >> 4, 4) for c in codes[:200]],
        "propagate_csr (150 steps)": lambda k: k.propagate_csr(indptr, indices, data, beliefs[0], 150),
        "active_curves (T=150)": lambda k: k.active_curves(indptr, indices, data, beliefs, active, 150),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--quick", action="store_true", help="smaller inputs")
    args = parser.parse_args()
    backends = available_backends()
    names = sorted(backends)
    print(f"{'kernel':28s}" + "".join(f"{n:>12s}" for n in names) + ("   speedup" if len(names) > 1 else ""))
    for label, fn in cases(args.quick).items():
        times = {}
        for name in names:
            times[name] = min(timeit.repeat(lambda: fn(backends[name]), number=1, repeat=args.repeat))
        line = f"{label:28s}" + "".join(f"{times[n] * 1e3:10.2f}ms" for n in names)
        if "cython" in times:
            line += f"   {times['python'] / times['cython']:6.1f}x"
        print(line)


if __name__ == "__main__":
    main()
