"""Both kernel backends must agree exactly."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import sparse

from specmarkov import _kernels_py, kernels

BACKENDS = kernels.available_backends()
needs_cython = pytest.mark.skipif("cython" not in BACKENDS, reason="extension not built")


def test_selected_backend_is_reported():
    assert kernels.BACKEND in BACKENDS


def test_fallback_is_pure_python_module():
    assert _kernels_py.BACKEND == "python"


bits = st.lists(st.integers(0, 1), min_size=1, max_size=300)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_window_codes_examples(name):
    k = BACKENDS[name]
    states = np.array([1, 0, 1, 1], dtype=np.uint8)
    # most recent slot is the MSB
    assert k.window_codes(states, 2).tolist() == [0b01, 0b10, 0b11]
    assert k.run_lengths(states, 3).tolist() == [1, 1, 1, 2]


@needs_cython
@given(states=bits, order=st.integers(1, 20))
def test_window_codes_agree(states, order):
    arr = np.array(states, dtype=np.uint8)
    if order > arr.size:
        return
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    assert np.array_equal(py.window_codes(arr, order), cy.window_codes(arr, order))
    assert np.array_equal(py.run_lengths(arr, order), cy.run_lengths(arr, order))


@needs_cython
@given(src=st.lists(st.integers(0, 9), max_size=200), seed=st.integers(0, 1000))
def test_count_transitions_agree(src, seed):
    rng = np.random.default_rng(seed)
    src = np.array(src, dtype=np.int64)
    dst = rng.integers(0, 10, src.size).astype(np.int64)
    a = BACKENDS["python"].count_transitions(src, dst, 10)
    b = BACKENDS["cython"].count_transitions(src, dst, 10)
    assert np.array_equal(a, b)


@needs_cython
@given(codes=st.lists(st.integers(0, 2 ** 20 - 1), min_size=1, max_size=100, unique=True),
       pattern=st.integers(0, 2 ** 20 - 1), shift=st.integers(0, 19))
def test_hamming_ties_agree(codes, pattern, shift):
    codes = np.array(codes, dtype=np.int64)
    pattern >>= shift
    ia, da = BACKENDS["python"].hamming_ties(codes, pattern, shift)
    ib, db = BACKENDS["cython"].hamming_ties(codes, pattern, shift)
    assert da == db and np.array_equal(ia, ib)


def _random_csr(rng, n, density=0.3):
    M = rng.random((n, n)) * (rng.random((n, n)) < density)
    M[np.arange(n), rng.integers(0, n, n)] += 0.1
    M /= M.sum(axis=1, keepdims=True)
    csr = sparse.csr_array(M)
    return M, csr.indptr.astype(np.int64), csr.indices.astype(np.int64), csr.data


@pytest.mark.parametrize("name", sorted(BACKENDS))
@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6), n=st.integers(1, 30), steps=st.integers(1, 12))
def test_propagation_against_dense(name, seed, n, steps):
    k = BACKENDS[name]
    rng = np.random.default_rng(seed)
    M, indptr, indices, data = _random_csr(rng, n)
    b = rng.random(n)
    b /= b.sum()
    want = b.copy()
    curve = []
    active = (rng.random(n) < 0.5).astype(np.uint8)
    for _ in range(steps):
        want = want @ M
        curve.append(want[active.astype(bool)].sum())
    assert np.allclose(k.propagate_csr(indptr, indices, data, b, steps), want, atol=1e-13)
    got = k.active_curves(indptr, indices, data, b[None, :], active, steps)[0]
    assert np.allclose(got, curve, atol=1e-13)


def test_env_var_forces_fallback():
    import subprocess
    import sys
    out = subprocess.run(
        [sys.executable, "-c", "from specmarkov import kernels; print(kernels.BACKEND)"],
        env={"SPECMARKOV_PURE_PYTHON": "1", "PATH": ""}, capture_output=True, text=True)
    assert out.stdout.strip() == "python"
