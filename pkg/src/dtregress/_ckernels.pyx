# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for the flat oracle."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def q_backup(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
             const double[::1] data, const double[::1] reward,
             const double[::1] value, double discount):
    cdef Py_ssize_t n = reward.shape[0]
    cdef Py_ssize_t s, j
    cdef double acc
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for s in range(n):
        acc = 0.0
        for j in range(indptr[s], indptr[s + 1]):
            acc += data[j] * value[indices[j]]
        o[s] = reward[s] + discount * acc
    return out


def ci_gap(const double[:, :, ::1] table):
    """Largest |Pr(a,b|e) - Pr(a|e)Pr(b|e)| over evidence rows with Pr(e) > 0."""
    cdef Py_ssize_t n_e = table.shape[0], ra = table.shape[1], rb = table.shape[2]
    cdef Py_ssize_t e, i, j
    cdef double pe, gap = 0.0, d
    pa_arr = np.empty(ra, dtype=np.float64)
    pb_arr = np.empty(rb, dtype=np.float64)
    cdef double[::1] pa = pa_arr
    cdef double[::1] pb = pb_arr
    for e in range(n_e):
        pe = 0.0
        for i in range(ra):
            pa[i] = 0.0
        for j in range(rb):
            pb[j] = 0.0
        for i in range(ra):
            for j in range(rb):
                pa[i] += table[e, i, j]
                pb[j] += table[e, i, j]
                pe += table[e, i, j]
        if pe <= 0.0:
            continue
        for i in range(ra):
            for j in range(rb):
                d = table[e, i, j] / pe - (pa[i] / pe) * (pb[j] / pe)
                if d < 0.0:
                    d = -d
                if d > gap:
                    gap = d
    return gap
