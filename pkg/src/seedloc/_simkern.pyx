# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled similarity kernels: float32 inputs, float64 accumulation in index order.

Degree counts stream row by row (O(N) memory, the adjacency is never
materialized); each unordered pair's dot product is computed once and feeds
both endpoints, which is exact because the sign rule is symmetric. Mask scores
compute one full dot per seed, then add the dots in ascending seed order.
No -ffast-math: accumulation must stay sequential IEEE double.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline double _dot(const float[:, ::1] a, Py_ssize_t i,
                        const float[:, ::1] b, Py_ssize_t j) nogil:
    cdef Py_ssize_t t
    cdef double acc = 0.0
    for t in range(a.shape[1]):
        acc += <double> a[i, t] * <double> b[j, t]
    return acc


def degree_counts(const float[:, ::1] feats):
    """degrees[p] = #{q : f_p . f_q >= 0}, q over all patches incl. p."""
    cdef Py_ssize_t n = feats.shape[0]
    out = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] deg = out
    cdef Py_ssize_t p, q
    with nogil:
        for p in range(n):
            for q in range(p, n):
                if _dot(feats, p, feats, q) >= 0.0:
                    deg[p] += 1
                    if q != p:
                        deg[q] += 1
    return out


def degree_counts_symqk(const float[:, ::1] queries, const float[:, ::1] keys):
    """Degrees under the symmetrized query/key rule: q_p . k_q + k_p . q_q >= 0."""
    cdef Py_ssize_t n = queries.shape[0]
    out = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] deg = out
    cdef Py_ssize_t p, q
    with nogil:
        for p in range(n):
            for q in range(p, n):
                if _dot(queries, p, keys, q) + _dot(keys, p, queries, q) >= 0.0:
                    deg[p] += 1
                    if q != p:
                        deg[q] += 1
    return out


def seed_dots(const float[:, ::1] feats, Py_ssize_t p_star):
    """f_q . f_{p*} for every patch q, float64."""
    cdef Py_ssize_t n = feats.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    cdef Py_ssize_t q
    with nogil:
        for q in range(n):
            res[q] = _dot(feats, q, feats, p_star)
    return out


def seed_dots_symqk(const float[:, ::1] queries, const float[:, ::1] keys,
                    Py_ssize_t p_star):
    """q_q . k_{p*} + k_q . q_{p*} for every patch q, float64."""
    cdef Py_ssize_t n = queries.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    cdef Py_ssize_t q
    with nogil:
        for q in range(n):
            res[q] = _dot(queries, q, keys, p_star) + _dot(keys, q, queries, p_star)
    return out


def mask_scores(const float[:, ::1] feats, const cnp.int64_t[::1] seeds):
    """score[q] = sum over seeds s (ascending) of f_q . f_s, float64."""
    cdef Py_ssize_t n = feats.shape[0]
    cdef Py_ssize_t ns = seeds.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    cdef Py_ssize_t q, i
    cdef double acc
    with nogil:
        for q in range(n):
            acc = 0.0
            for i in range(ns):
                acc += _dot(feats, q, feats, seeds[i])
            res[q] = acc
    return out


def mask_scores_symqk(const float[:, ::1] queries, const float[:, ::1] keys,
                      const cnp.int64_t[::1] seeds):
    """score[q] = sum over seeds s of (k_q . q_s + q_q . k_s), float64."""
    cdef Py_ssize_t n = queries.shape[0]
    cdef Py_ssize_t ns = seeds.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    cdef Py_ssize_t q, i
    cdef double acc
    with nogil:
        for q in range(n):
            acc = 0.0
            for i in range(ns):
                acc += _dot(keys, q, queries, seeds[i]) + _dot(queries, q, keys, seeds[i])
            res[q] = acc
    return out
