# cython: language_level=3
"""Compiled hot loops. Must stay bit-compatible with ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

DEF MODE_PROPOSED = 0
DEF MODE_KTHRESHOLD = 1
DEF MODE_MEAN = 2
DEF MODE_MEDIAN = 3


def aggregate_rows(const double[:, ::1] scores, int mode, Py_ssize_t k=1):
    """Aggregate every row of a (n_images, n_patches) score matrix."""
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t p = scores.shape[1]
    cdef Py_ssize_t i, j, nonneg
    cdef double lo, hi, acc, v
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    if p == 0:
        raise ValueError("rows must be non-empty")
    if mode == MODE_PROPOSED:
        k = 1
        mode = MODE_KTHRESHOLD
    if mode == MODE_KTHRESHOLD:
        with nogil:
            for i in range(n):
                lo = scores[i, 0]
                hi = lo
                nonneg = 0
                for j in range(p):
                    v = scores[i, j]
                    if v < lo:
                        lo = v
                    if v > hi:
                        hi = v
                    if v >= 0.0:
                        nonneg += 1
                res[i] = hi if nonneg >= k else lo
    elif mode == MODE_MEAN:
        with nogil:
            for i in range(n):
                acc = 0.0
                for j in range(p):
                    acc = acc + scores[i, j]
                res[i] = acc / p
    elif mode == MODE_MEDIAN:
        # numpy's vectorized row sort beats a scalar selection loop here
        ordered = np.sort(scores, axis=1)
        if p % 2 == 1:
            return ordered[:, p // 2].copy()
        return (ordered[:, p // 2 - 1] + ordered[:, p // 2]) / 2.0
    else:
        raise ValueError(f"unknown aggregation mode {mode}")
    return out


def mann_whitney_counts(const double[::1] pos, const double[::1] neg):
    """Return (#pairs pos > neg, #pairs pos == neg); both inputs sorted ascending."""
    cdef Py_ssize_t n_pos = pos.shape[0]
    cdef Py_ssize_t n_neg = neg.shape[0]
    cdef Py_ssize_t i, below = 0, upto = 0
    cdef long long greater = 0, ties = 0
    cdef double v
    with nogil:
        for i in range(n_pos):
            v = pos[i]
            while below < n_neg and neg[below] < v:
                below += 1
            if upto < below:
                upto = below
            while upto < n_neg and neg[upto] <= v:
                upto += 1
            greater += below
            ties += upto - below
    return int(greater), int(ties)
