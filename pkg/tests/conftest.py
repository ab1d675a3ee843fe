import numpy as np
import pytest

from detrac import kernels


def assert_lloyd_invariants(X, model, labels):
    """Checks run on every clustering fit: monotone inertia + fixed point."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    hist = model.inertia_history
    assert len(hist) >= 1
    for a, b in zip(hist, hist[1:]):
        assert b <= a + 1e-12 * max(1.0, a), "inertia increased across iterations"

    # recomputing assignments and centroids must change nothing (<= 1e-9 drift)
    k = model.centroids.shape[0]
    relabels, _ = kernels.assign_nearest(X, model.centroids)
    assert np.array_equal(relabels, labels)
    recomputed, counts = kernels.update_centroids(X, relabels, k)
    assert counts.min() >= 1
    assert np.max(np.abs(recomputed - model.centroids)) <= 1e-9
    assert abs(kernels.sed_total(X, model.centroids, labels) - model.inertia) <= 1e-9 * max(
        1.0, model.inertia
    )


def brute_force_best_2partition(X):
    """Exhaustive optimum of the 2-cluster SED objective (n <= ~16)."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    best = np.inf
    for mask in range(1, 2 ** (n - 1)):
        members = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
        members = np.concatenate([[False], members[: n - 1]])  # point 0 stays in side A
        sed = 0.0
        for side in (members, ~members):
            pts = X[side]
            centroid = pts.mean(axis=0)
            sed += float(((pts - centroid) ** 2).sum())
        best = min(best, sed)
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
