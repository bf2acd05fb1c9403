# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for window coding, counting, Hamming search and propagation."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


cdef inline int _popcount(unsigned long long x) noexcept nogil:
    return __builtin_popcountll(x)


def window_codes(states, Py_ssize_t order):
    cdef const unsigned char[::1] s = np.ascontiguousarray(states, dtype=np.uint8)
    cdef Py_ssize_t n = s.shape[0]
    if order > 62:
        raise ValueError("window codes support order <= 62")
    if n < order:
        return np.empty(0, dtype=np.int64)
    out_arr = np.empty(n - order + 1, dtype=np.int64)
    cdef long long[::1] out = out_arr
    cdef long long mask = (1LL << order) - 1
    cdef long long code = 0
    cdef Py_ssize_t t
    with nogil:
        for t in range(n):
            # new slot enters as the MSB; the oldest falls off the LSB end
            code = (code >> 1) | (<long long>s[t] << (order - 1))
            code &= mask
            if t >= order - 1:
                out[t - order + 1] = code
    return out_arr


def run_lengths(states, long long cap):
    cdef const unsigned char[::1] s = np.ascontiguousarray(states, dtype=np.uint8)
    cdef Py_ssize_t n = s.shape[0]
    out_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] out = out_arr
    cdef long long run = 0
    cdef Py_ssize_t t
    with nogil:
        for t in range(n):
            if t > 0 and s[t] == s[t - 1]:
                run += 1
            else:
                run = 1
            out[t] = run if run < cap else cap
    return out_arr


def count_transitions(src, dst, Py_ssize_t n):
    cdef const long long[::1] a = np.ascontiguousarray(src, dtype=np.int64)
    cdef const long long[::1] b = np.ascontiguousarray(dst, dtype=np.int64)
    out_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t k
    with nogil:
        for k in range(a.shape[0]):
            out[a[k], b[k]] += 1.0
    return out_arr


def hamming_ties(table_codes, long long pattern, int shift):
    cdef const long long[::1] codes = np.ascontiguousarray(table_codes, dtype=np.int64)
    cdef Py_ssize_t n = codes.shape[0]
    cdef Py_ssize_t k
    cdef int d, best = 64
    dist_arr = np.empty(n, dtype=np.int32)
    cdef int[::1] dist = dist_arr
    with nogil:
        for k in range(n):
            d = _popcount(<unsigned long long>((codes[k] >> shift) ^ pattern))
            dist[k] = d
            if d < best:
                best = d
    return np.flatnonzero(dist_arr == best).astype(np.int64), best


def propagate_csr(indptr, indices, data, belief, Py_ssize_t steps):
    cdef const long long[::1] ptr = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const long long[::1] idx = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const double[::1] val = np.ascontiguousarray(data, dtype=np.float64)
    cur_arr = np.array(belief, dtype=np.float64, copy=True)
    nxt_arr = np.empty_like(cur_arr)
    cdef double[::1] cur_v = cur_arr
    cdef double[::1] nxt_v = nxt_arr
    cdef double* cur = &cur_v[0]
    cdef double* nxt = &nxt_v[0]
    cdef double* tmp
    cdef Py_ssize_t n = cur_v.shape[0]
    cdef Py_ssize_t step, i, p
    cdef double w
    with nogil:
        for step in range(steps):
            for i in range(n):
                nxt[i] = 0.0
            for i in range(n):
                w = cur[i]
                if w == 0.0:
                    continue
                for p in range(ptr[i], ptr[i + 1]):
                    nxt[idx[p]] += w * val[p]
            tmp = cur
            cur = nxt
            nxt = tmp
    return (cur_arr if steps % 2 == 0 else nxt_arr).copy()


def active_curves(indptr, indices, data, beliefs, active, Py_ssize_t t_max):
    cdef const long long[::1] ptr = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const long long[::1] idx = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const double[::1] val = np.ascontiguousarray(data, dtype=np.float64)
    cdef const unsigned char[::1] act = np.ascontiguousarray(active, dtype=np.uint8)
    # state-major layout: the inner loop runs over beliefs, contiguous in memory
    cur_arr = np.ascontiguousarray(np.asarray(beliefs, dtype=np.float64).T)
    cdef Py_ssize_t n = cur_arr.shape[0]
    cdef Py_ssize_t m = cur_arr.shape[1]
    nxt_arr = np.empty_like(cur_arr)
    out_arr = np.empty((t_max, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] cur_v = cur_arr
    cdef double[:, ::1] nxt_v = nxt_arr
    cdef double* cur = &cur_v[0, 0] if n * m else NULL
    cdef double* nxt = &nxt_v[0, 0] if n * m else NULL
    cdef double* tmp
    cdef double* src
    cdef double* dst
    cdef Py_ssize_t r, step, i, p
    cdef double w
    if n * m == 0:
        return np.zeros((m, t_max))
    with nogil:
        for step in range(t_max):
            for i in range(n * m):
                nxt[i] = 0.0
            for i in range(n):
                src = cur + i * m
                for p in range(ptr[i], ptr[i + 1]):
                    w = val[p]
                    dst = nxt + idx[p] * m
                    for r in range(m):
                        dst[r] += w * src[r]
            for r in range(m):
                out[step, r] = 0.0
            for i in range(n):
                if act[i]:
                    src = nxt + i * m
                    for r in range(m):
                        out[step, r] += src[r]
            tmp = cur
            cur = nxt
            nxt = tmp
    return np.ascontiguousarray(out_arr.T)
