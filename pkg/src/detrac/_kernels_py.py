"""NumPy implementations of the clustering kernels.

Used when the compiled extension is unavailable or explicitly disabled.
Semantics match ``detrac._native``; both backends break distance ties toward
the lowest centroid index.
"""

from __future__ import annotations

import numpy as np


def assign_nearest(X: np.ndarray, centroids: np.ndarray):
    """Nearest centroid per row under squared euclidean distance.

    Returns (labels int64[n], squared distance to the winner float64[n]).
    """
    diff = X[:, None, :] - centroids[None, :, :]
    dist_sq = np.einsum("nkd,nkd->nk", diff, diff)
    labels = np.argmin(dist_sq, axis=1)
    return labels.astype(np.int64), dist_sq[np.arange(X.shape[0]), labels]


def update_centroids(X: np.ndarray, labels: np.ndarray, k: int):
    """Cluster means. Returns (centroids float64[k, d], counts int64[k]).

    Empty clusters keep a zero row; callers repair them via ``counts``.
    """
    d = X.shape[1]
    sums = np.zeros((k, d), dtype=np.float64)
    np.add.at(sums, labels, X)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    centroids = np.zeros_like(sums)
    nonzero = counts > 0
    centroids[nonzero] = sums[nonzero] / counts[nonzero, None]
    return centroids, counts


def sed_total(X: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    """Total within-cluster squared euclidean distance."""
    diff = X - centroids[labels]
    return float(np.einsum("nd,nd->", diff, diff))
