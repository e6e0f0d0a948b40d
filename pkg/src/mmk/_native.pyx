# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot kernels.

Mirrors the contracts of ``mmk._pykernels``; the dispatch layer in
``mmk.kernels`` selects between the two at import time.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, exp, floor, sqrt

from mmk._pykernels import LBP_UNIFORM_MAP as _LBP_UNIFORM_MAP

cnp.import_array()

cdef double TWO_PI = 6.283185307179586476925286766559
cdef int PATCH = 16
cdef int HOG_BINS = 36
cdef int LBP_BINS = 59

cdef long long[::1] _LBP_MAP = np.ascontiguousarray(_LBP_UNIFORM_MAP, dtype=np.int64)


def rbf_values(double[:, ::1] x, double[:, ::1] z, double gamma):
    """(m, D) matrix of exp(-gamma * ||x_i - z_j||^2)."""
    cdef Py_ssize_t m = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t n = z.shape[0]
    out_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for k in range(d):
                diff = x[i, k] - z[j, k]
                acc += diff * diff
            out[i, j] = exp(-gamma * acc)
    return out_arr


def nearest_center(double[:, ::1] x, double[:, ::1] centers):
    """Index of the euclidean-nearest center per row, ties to the lowest index."""
    cdef Py_ssize_t m = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t n = centers.shape[0]
    idx_arr = np.empty(m, dtype=np.int64)
    dmin_arr = np.empty(m, dtype=np.float64)
    cdef long long[::1] idx = idx_arr
    cdef double[::1] dmin = dmin_arr
    cdef Py_ssize_t i, j, k
    cdef double best, acc, diff
    cdef long long best_j
    for i in range(m):
        best = -1.0
        best_j = 0
        for j in range(n):
            acc = 0.0
            for k in range(d):
                diff = x[i, k] - centers[j, k]
                acc += diff * diff
            if best < 0.0 or acc < best:
                best = acc
                best_j = j
        idx[i] = best_j
        dmin[i] = best
    return idx_arr, dmin_arr


def pool_sums(double[:, ::1] values, long long[::1] ids, Py_ssize_t n_groups):
    """Per-group column sums and sizes; rows accumulate in file order."""
    cdef Py_ssize_t m = values.shape[0]
    cdef Py_ssize_t d = values.shape[1]
    sums_arr = np.zeros((n_groups, d), dtype=np.float64)
    counts_arr = np.zeros(n_groups, dtype=np.int64)
    cdef double[:, ::1] sums = sums_arr
    cdef long long[::1] counts = counts_arr
    cdef Py_ssize_t i, k
    cdef long long g
    for i in range(m):
        g = ids[i]
        counts[g] += 1
        for k in range(d):
            sums[g, k] += values[i, k]
    return sums_arr, counts_arr


def lbp_histogram(double[:, ::1] patch):
    """59-bin uniform-pattern histogram over the 14x14 patch interior."""
    hist_arr = np.zeros(LBP_BINS, dtype=np.int64)
    cdef long long[::1] hist = hist_arr
    cdef int y, x
    cdef int code
    cdef double center
    for y in range(1, PATCH - 1):
        for x in range(1, PATCH - 1):
            center = patch[y, x]
            code = 0
            if patch[y - 1, x - 1] >= center: code |= 128
            if patch[y - 1, x] >= center: code |= 64
            if patch[y - 1, x + 1] >= center: code |= 32
            if patch[y, x + 1] >= center: code |= 16
            if patch[y + 1, x + 1] >= center: code |= 8
            if patch[y + 1, x] >= center: code |= 4
            if patch[y + 1, x - 1] >= center: code |= 2
            if patch[y, x - 1] >= center: code |= 1
            hist[_LBP_MAP[code]] += 1
    return hist_arr


def hog_histogram(double[:, ::1] patch):
    """36-bin soft-binned gradient-orientation histogram of the patch interior."""
    hist_arr = np.zeros(HOG_BINS, dtype=np.float64)
    cdef double[::1] hist = hist_arr
    cdef int y, x
    cdef double gx, gy, mag, theta, pos, frac
    cdef int low
    for y in range(1, PATCH - 1):
        for x in range(1, PATCH - 1):
            gx = 0.5 * (patch[y, x + 1] - patch[y, x - 1])
            gy = 0.5 * (patch[y + 1, x] - patch[y - 1, x])
            mag = sqrt(gx * gx + gy * gy)
            theta = atan2(gy, gx)
            if theta < 0.0:
                theta += TWO_PI
            pos = theta * (HOG_BINS / TWO_PI) - 0.5
            low = <int>floor(pos)
            frac = pos - floor(pos)
            if low < 0:
                low += HOG_BINS
            elif low >= HOG_BINS:
                low -= HOG_BINS
            hist[low] += mag * (1.0 - frac)
            if low + 1 >= HOG_BINS:
                hist[low + 1 - HOG_BINS] += mag * frac
            else:
                hist[low + 1] += mag * frac
    return hist_arr
