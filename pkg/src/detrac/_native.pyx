# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled clustering kernels: the hot inner loop of per-class k-means.

Mirrors ``detrac._kernels_py`` (nearest-centroid assignment, centroid means
and the squared-euclidean objective) without materializing the n x k
distance matrix.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def assign_nearest(double[:, ::1] X, double[:, ::1] centroids):
    """Nearest centroid per row; ties go to the lowest centroid index."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    cdef Py_ssize_t k = centroids.shape[0]
    labels_arr = np.empty(n, dtype=np.int64)
    dists_arr = np.empty(n, dtype=np.float64)
    cdef long long[::1] labels = labels_arr
    cdef double[::1] dists = dists_arr
    cdef Py_ssize_t i, j, t
    cdef double best, acc, delta
    cdef long long best_j
    for i in range(n):
        best = -1.0
        best_j = 0
        for j in range(k):
            acc = 0.0
            for t in range(d):
                delta = X[i, t] - centroids[j, t]
                acc += delta * delta
            if best < 0.0 or acc < best:
                best = acc
                best_j = j
        labels[i] = best_j
        dists[i] = best
    return labels_arr, dists_arr


def update_centroids(double[:, ::1] X, long long[::1] labels, Py_ssize_t k):
    """Cluster means; empty clusters stay at zero and report count 0."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    sums_arr = np.zeros((k, d), dtype=np.float64)
    counts_arr = np.zeros(k, dtype=np.int64)
    cdef double[:, ::1] sums = sums_arr
    cdef long long[::1] counts = counts_arr
    cdef Py_ssize_t i, t
    cdef long long c
    for i in range(n):
        c = labels[i]
        counts[c] += 1
        for t in range(d):
            sums[c, t] += X[i, t]
    for c in range(k):
        if counts[c] > 0:
            for t in range(d):
                sums[c, t] /= counts[c]
    return sums_arr, counts_arr


def sed_total(double[:, ::1] X, double[:, ::1] centroids, long long[::1] labels):
    """Total within-cluster squared euclidean distance."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    cdef double total = 0.0
    cdef double delta
    cdef Py_ssize_t i, t
    cdef long long c
    for i in range(n):
        c = labels[i]
        for t in range(d):
            delta = X[i, t] - centroids[c, t]
            total += delta * delta
    return total
