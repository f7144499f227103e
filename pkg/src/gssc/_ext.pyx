# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: row scatter-add and simple path/cycle enumeration."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t i64


def scatter_add_rows(values, index, Py_ssize_t n_out):
    cdef double[:, ::1] vals = np.ascontiguousarray(values, dtype=np.float64)
    cdef i64[::1] idx = np.ascontiguousarray(index, dtype=np.int64)
    cdef Py_ssize_t rows = vals.shape[0], cols = vals.shape[1]
    out_arr = np.zeros((n_out, cols), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, r
    if idx.shape[0] != rows:
        raise ValueError("index length must match the number of rows")
    for i in range(rows):
        r = idx[i]
        if r < 0 or r >= n_out:
            raise IndexError(f"scatter index {r} outside [0, {n_out})")
        for j in range(cols):
            out[r, j] += vals[i, j]
    return out_arr


cdef bint _adjacent(const i64[::1] indptr, const i64[::1] indices, i64 a, i64 b) nogil:
    cdef i64 lo = indptr[a], hi = indptr[a + 1], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if indices[mid] < b:
            lo = mid + 1
        else:
            hi = mid
    return lo < indptr[a + 1] and indices[lo] == b


cdef void _cycle_dfs(const i64[::1] indptr, const i64[::1] indices, i64[::1] path,
                     signed char[::1] on_path, i64[::1] counts, int depth, int length,
                     i64 start) nogil:
    cdef i64 last = path[depth - 1], w, e
    cdef int t
    if depth == length:
        if path[1] < path[length - 1] and _adjacent(indptr, indices, last, start):
            for t in range(length):
                counts[path[t]] += 1
        return
    for e in range(indptr[last], indptr[last + 1]):
        w = indices[e]
        if w > start and not on_path[w]:
            on_path[w] = 1
            path[depth] = w
            _cycle_dfs(indptr, indices, path, on_path, counts, depth + 1, length, start)
            on_path[w] = 0


def cycle_counts(indptr, indices, Py_ssize_t n, int length):
    cdef i64[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef i64[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    counts_arr = np.zeros(n, dtype=np.int64)
    cdef i64[::1] counts = counts_arr
    path_arr = np.zeros(length, dtype=np.int64)
    cdef i64[::1] path = path_arr
    on_arr = np.zeros(n, dtype=np.int8)
    cdef signed char[::1] on_path = on_arr
    cdef i64 s
    with nogil:
        for s in range(n):
            path[0] = s
            on_path[s] = 1
            _cycle_dfs(ip, ix, path, on_path, counts, 1, length, s)
            on_path[s] = 0
    return counts_arr


cdef i64 _path_dfs(const i64[::1] indptr, const i64[::1] indices, signed char[::1] on_path,
                   i64 last, int remaining) nogil:
    cdef i64 total = 0, w, e
    if remaining == 0:
        return 1
    for e in range(indptr[last], indptr[last + 1]):
        w = indices[e]
        if not on_path[w]:
            on_path[w] = 1
            total += _path_dfs(indptr, indices, on_path, w, remaining - 1)
            on_path[w] = 0
    return total


def path_counts(indptr, indices, Py_ssize_t n, int length):
    cdef i64[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef i64[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    counts_arr = np.zeros(n, dtype=np.int64)
    cdef i64[::1] counts = counts_arr
    on_arr = np.zeros(n, dtype=np.int8)
    cdef signed char[::1] on_path = on_arr
    cdef i64 s
    with nogil:
        for s in range(n):
            on_path[s] = 1
            counts[s] = _path_dfs(ip, ix, on_path, s, length)
            on_path[s] = 0
    return counts_arr
