"""Clustering kernel backend selection.

The compiled extension (``detrac._native``) is preferred; the NumPy fallback
(``detrac._kernels_py``) is used when the extension is missing or when the
``DETRAC_PURE_PYTHON`` environment variable is set to a non-empty value.
Both expose ``assign_nearest``, ``update_centroids`` and ``sed_total`` with
identical contracts; ``benchmarks/bench_kernels.py`` compares their speed.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py


def _pick_backend():
    if os.environ.get("DETRAC_PURE_PYTHON"):
        return _kernels_py, "python"
    try:
        from . import _native
    except ImportError:
        return _kernels_py, "python"
    return _native, "native"


_impl, BACKEND = _pick_backend()


def _as_c_double_2d(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def assign_nearest(X: np.ndarray, centroids: np.ndarray):
    """Nearest centroid per row (ties -> lowest index) and its squared distance."""
    return _impl.assign_nearest(_as_c_double_2d(X), _as_c_double_2d(centroids))


def update_centroids(X: np.ndarray, labels: np.ndarray, k: int):
    """Per-cluster means and member counts (count 0 marks an empty cluster)."""
    return _impl.update_centroids(
        _as_c_double_2d(X), np.ascontiguousarray(labels, dtype=np.int64), k
    )


def sed_total(X: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    """Total within-cluster squared euclidean distance for an assignment."""
    return float(
        _impl.sed_total(
            _as_c_double_2d(X),
            _as_c_double_2d(centroids),
            np.ascontiguousarray(labels, dtype=np.int64),
        )
    )
