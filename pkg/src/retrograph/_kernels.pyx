# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: row scatter for message passing and rank refinement
for canonical atom ordering."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def scatter_add_rows(src, index, Py_ssize_t n_out):
    cdef cnp.ndarray out = np.zeros((n_out, src.shape[1]), dtype=src.dtype)
    if src.dtype == np.float64:
        _scatter_f64(np.ascontiguousarray(src), np.ascontiguousarray(index, dtype=np.int64), out)
    else:
        _scatter_f32(np.ascontiguousarray(src, dtype=np.float32), np.ascontiguousarray(index, dtype=np.int64), out)
    return out


cdef void _scatter_f64(double[:, ::1] src, long long[::1] index, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t m = src.shape[0], d = src.shape[1], r, c
    cdef long long t
    for r in range(m):
        t = index[r]
        for c in range(d):
            out[t, c] += src[r, c]


cdef void _scatter_f32(float[:, ::1] src, long long[::1] index, float[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t m = src.shape[0], d = src.shape[1], r, c
    cdef long long t
    for r in range(m):
        t = index[r]
        for c in range(d):
            out[t, c] += src[r, c]


cdef int _cmp_rows(long long[:, ::1] keys, Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    cdef Py_ssize_t c
    for c in range(keys.shape[1]):
        if keys[a, c] < keys[b, c]:
            return -1
        if keys[a, c] > keys[b, c]:
            return 1
    return 0


cdef Py_ssize_t _dense_ranks(long long[:, ::1] keys, long long[::1] order, long long[::1] out) noexcept nogil:
    # insertion sort of row indices; molecules are small
    cdef Py_ssize_t n = keys.shape[0], i, j
    cdef long long cur
    for i in range(n):
        order[i] = i
    for i in range(1, n):
        cur = order[i]
        j = i - 1
        while j >= 0 and _cmp_rows(keys, order[j], cur) > 0:
            order[j + 1] = order[j]
            j -= 1
        order[j + 1] = cur
    cdef Py_ssize_t r = 0
    if n == 0:
        return 0
    out[order[0]] = 0
    for i in range(1, n):
        if _cmp_rows(keys, order[i - 1], order[i]) != 0:
            r += 1
        out[order[i]] = r
    return r + 1


def refine_ranks(init, indptr, indices, codes):
    cdef Py_ssize_t n = len(init)
    cdef long long[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef long long[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef long long[::1] cd = np.ascontiguousarray(codes, dtype=np.int64)
    cdef Py_ssize_t maxdeg = 0, i, k, a, b, deg
    for i in range(n):
        if ip[i + 1] - ip[i] > maxdeg:
            maxdeg = ip[i + 1] - ip[i]
    cdef long long[:, ::1] keys = np.zeros((n, 1), dtype=np.int64)
    cdef long long[::1] order = np.zeros(n, dtype=np.int64)
    cdef long long[::1] ranks = np.zeros(n, dtype=np.int64)
    for i in range(n):
        keys[i, 0] = init[i]
    cdef Py_ssize_t n_cls = _dense_ranks(keys, order, ranks), new_cls
    cdef long long[:, ::1] nk = np.zeros((n, maxdeg + 2), dtype=np.int64)
    cdef long long[::1] new = np.zeros(n, dtype=np.int64)
    cdef long long tmp
    while True:
        for i in range(n):
            nk[i, 0] = ranks[i]
            deg = ip[i + 1] - ip[i]
            # -1 padding sorts shorter neighbour lists first, like tuple comparison
            for k in range(maxdeg + 1):
                nk[i, k + 1] = -1
            for k in range(deg):
                nk[i, k + 1] = ranks[ix[ip[i] + k]] * 8 + cd[ip[i] + k]
            for a in range(1, deg + 1):
                for b in range(a + 1, deg + 1):
                    if nk[i, b] < nk[i, a]:
                        tmp = nk[i, a]
                        nk[i, a] = nk[i, b]
                        nk[i, b] = tmp
        new_cls = _dense_ranks(nk, order, new)
        if new_cls == n_cls:
            return np.asarray(new)
        n_cls = new_cls
        ranks[:] = new
