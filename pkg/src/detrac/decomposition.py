"""Per-class k-means decomposition and composition of sub-class predictions.

Each original class is clustered independently in the projected feature space;
samples are relabeled ``<class>_<j>`` with sub-classes ordered by descending
cluster size. Composition maps sub-class probabilities back onto the parents.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dataset import DecomposedSet, ParentMap, SampleSet
from .errors import DataError
from .projection import PcaModel, project

COMPOSE_SUM = "sum_probs"
COMPOSE_ARGMAX = "argmax_map"


@dataclass(frozen=True, eq=False)
class KMeansModel:
    """Fitted centroids plus the objective value reached.

    ``inertia_history`` records the objective after every Lloyd update; it is
    non-increasing by construction.
    """

    centroids: np.ndarray
    inertia: float
    iterations_run: int
    inertia_history: tuple[float, ...]


@dataclass(frozen=True)
class DecompositionConfig:
    k_per_class: int = 2
    max_iter: int = 300
    tol: float = 1e-6
    seed: int = 0
    restarts: int = 8
    # optional per-class override of k, keyed by class name
    k_overrides: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.k_per_class < 1 or self.max_iter < 1 or self.restarts < 1:
            raise DataError("k_per_class, max_iter and restarts must be positive")
        if self.tol <= 0:
            raise DataError("tol must be positive")

    def k_for(self, class_name: str) -> int:
        return self.k_overrides.get(class_name, self.k_per_class)


def _kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded k-means++ initialization (greedy variant).

    Each new centroid is drawn D^2-weighted several times and the candidate
    that minimizes the resulting potential is kept, as in the canonical
    greedy k-means++.
    """
    n = X.shape[0]
    n_candidates = 2 + int(np.log(k)) if k > 1 else 1
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(n)
    dist_sq = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = dist_sq.sum()
        if total > 0:
            candidates = rng.choice(n, size=n_candidates, p=dist_sq / total)
        else:
            candidates = rng.integers(n, size=n_candidates)  # duplicates left
        best_idx, best_pot, best_dist = -1, np.inf, None
        for cand in candidates:
            cand_dist = np.minimum(dist_sq, ((X - X[cand]) ** 2).sum(axis=1))
            pot = cand_dist.sum()
            if pot < best_pot:
                best_idx, best_pot, best_dist = int(cand), pot, cand_dist
        chosen[i] = best_idx
        dist_sq = best_dist
    return X[chosen].astype(np.float64, copy=True)


def _lloyd(X: np.ndarray, centroids: np.ndarray, max_iter: int, tol: float):
    """Run Lloyd iterations from the given centroids.

    Convergence is declared when assignments stop changing, which leaves an
    exact fixed point (centroids are the means of their members, every point
    sits with its nearest centroid). The relative-improvement threshold
    ``tol`` is a secondary stop for slow tail phases; on that exit the final
    assignment step is still applied so the returned labels match the
    returned centroids. Returns (centroids, labels, inertia, iters, history).
    """
    k = centroids.shape[0]
    labels, _ = kernels.assign_nearest(X, centroids)
    prev_inertia = None
    history: list[float] = []
    it = 0
    for it in range(1, max_iter + 1):
        centroids, counts = kernels.update_centroids(X, labels, k)
        labels, centroids = _repair_empty(X, labels, centroids, counts)
        inertia = kernels.sed_total(X, centroids, labels)
        history.append(inertia)
        new_labels, _ = kernels.assign_nearest(X, centroids)
        if np.array_equal(new_labels, labels):
            return centroids, labels, inertia, it, history
        labels = new_labels
        if prev_inertia is not None and prev_inertia - inertia <= tol * prev_inertia:
            break
        prev_inertia = inertia
    # tol or max_iter exit: labels already reflect the final assignment step
    inertia = kernels.sed_total(X, centroids, labels)
    history.append(inertia)
    return centroids, labels, inertia, it, history


def _repair_empty(X, labels, centroids, counts):
    """Give each empty cluster the point currently farthest from its centroid."""
    empties = np.flatnonzero(counts == 0)
    if empties.size == 0:
        return labels, centroids
    labels = labels.copy()
    counts = counts.copy()
    for c in empties:
        dist_sq = ((X - centroids[labels]) ** 2).sum(axis=1)
        # only points from clusters that can spare one
        dist_sq = np.where(counts[labels] > 1, dist_sq, -np.inf)
        idx = int(np.argmax(dist_sq))
        counts[labels[idx]] -= 1
        labels[idx] = c
        counts[c] = 1
        centroids = centroids.copy()
        centroids[c] = X[idx]
    centroids, _ = kernels.update_centroids(X, labels, centroids.shape[0])
    return labels, centroids


def kmeans_fit(
    X: np.ndarray, k: int, cfg: DecompositionConfig
) -> tuple[KMeansModel, np.ndarray]:
    """Best-of-``cfg.restarts`` seeded k-means++ / Lloyd fit.

    Deterministic given ``cfg.seed``. Every point ends assigned to its nearest
    centroid (ties toward the lowest index); no cluster is left empty.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"expected a 2-D matrix, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise DataError("input contains non-finite values")
    n = X.shape[0]
    if not 1 <= k <= n:
        raise DataError(f"k must lie in [1, {n}], got {k}")

    rng = np.random.default_rng(cfg.seed)
    best = None
    for _ in range(cfg.restarts):
        init = _kmeans_pp_init(X, k, rng)
        centroids, labels, inertia, iters, history = _lloyd(
            X, init, cfg.max_iter, cfg.tol
        )
        if best is None or inertia < best[2]:
            best = (centroids, labels, inertia, iters, history)

    centroids, labels, inertia, iters, history = best
    model = KMeansModel(
        centroids=centroids,
        inertia=inertia,
        iterations_run=iters,
        inertia_history=tuple(history),
    )
    return model, labels


def decompose(
    data: SampleSet, pca: PcaModel, cfg: DecompositionConfig
) -> tuple[DecomposedSet, ParentMap, list[KMeansModel]]:
    """Cluster each class in the PCA space and relabel samples by cluster.

    The returned set keeps the original (unprojected) features. Sub-class j of
    a class is its j-th largest cluster (ties by original cluster index), so
    labels are reproducible across runs with equal seeds. Each class uses seed
    ``cfg.seed + class_index``. Centroid row j of the returned per-class model
    corresponds to sub-class ``<class>_<j+1>``.
    """
    coords = project(pca, data.features.astype(np.float64))
    names = data.label_space.names

    sub_names: list[str] = []
    parent_of: list[int] = []
    sub_labels = np.empty(data.n, dtype=np.int64)
    models: list[KMeansModel] = []

    for ci, cname in enumerate(names):
        members = np.flatnonzero(data.labels == ci)
        k = cfg.k_for(cname)
        if members.size < k:
            raise DataError(
                f"class {cname!r} has {members.size} samples, fewer than k={k}"
            )
        class_cfg = DecompositionConfig(
            k_per_class=k,
            max_iter=cfg.max_iter,
            tol=cfg.tol,
            seed=cfg.seed + ci,
            restarts=cfg.restarts,
        )
        model, assign = kmeans_fit(coords[members], k, class_cfg)

        # order clusters by descending size, ties toward the lower index
        sizes = np.bincount(assign, minlength=k)
        order = np.lexsort((np.arange(k), -sizes))
        rank_of = np.empty(k, dtype=np.int64)
        rank_of[order] = np.arange(k)

        base = len(sub_names)
        sub_labels[members] = base + rank_of[assign]
        sub_names.extend(f"{cname}_{j + 1}" for j in range(k))
        parent_of.extend([ci] * k)
        models.append(
            KMeansModel(
                centroids=model.centroids[order].copy(),
                inertia=model.inertia,
                iterations_run=model.iterations_run,
                inertia_history=model.inertia_history,
            )
        )

    pm = ParentMap(
        sub_names=tuple(sub_names),
        parent_of=np.asarray(parent_of, dtype=np.int64),
        label_space=data.label_space,
    )
    decomposed = DecomposedSet(features=data.features, sub_labels=sub_labels, parent_map=pm)
    if not np.array_equal(decomposed.parent_labels(), data.labels):
        raise AssertionError("decomposition broke parent-label consistency")
    return decomposed, pm, models


def assign_subclasses(
    projected: np.ndarray,
    labels: np.ndarray,
    models: list[KMeansModel],
    pm: ParentMap,
) -> np.ndarray:
    """Sub-label held-out samples by the nearest centroid within their class.

    Used only to report validation loss on decomposed labels; final metrics
    are always computed on composed parent predictions.
    """
    sub_labels = np.empty(labels.shape[0], dtype=np.int64)
    for ci, model in enumerate(models):
        members = np.flatnonzero(labels == ci)
        if members.size == 0:
            continue
        local, _ = kernels.assign_nearest(
            np.ascontiguousarray(projected[members]), model.centroids
        )
        subs = np.flatnonzero(pm.parent_of == ci)
        if subs.size != model.centroids.shape[0]:
            raise DataError("per-class models do not match the parent map")
        sub_labels[members] = subs[local]
    return sub_labels


def compose(
    sub_probs: np.ndarray, pm: ParentMap, mode: str = COMPOSE_SUM
) -> tuple[np.ndarray, np.ndarray]:
    """Fold an n x c' sub-class probability matrix back onto parent classes.

    ``sum_probs``: a parent's probability is the sum over its sub-classes and
    the prediction is its argmax. ``argmax_map``: predict the argmax sub-class
    and map it through the parent relation; reported parent probabilities are
    the per-parent maxima renormalized to sum to one. Ties break toward the
    lowest index in both modes.
    """
    sub_probs = np.asarray(sub_probs, dtype=np.float64)
    if sub_probs.ndim != 2 or sub_probs.shape[1] != pm.n_sub:
        raise DataError(
            f"expected an n x {pm.n_sub} probability matrix, got {sub_probs.shape}"
        )
    row_sums = sub_probs.sum(axis=1)
    if not np.allclose(row_sums, 1.0, atol=1e-6):
        raise DataError("probability rows must sum to 1 within 1e-6")

    c = pm.n_parent
    if mode == COMPOSE_SUM:
        parent_probs = np.zeros((sub_probs.shape[0], c), dtype=np.float64)
        for s in range(pm.n_sub):
            parent_probs[:, pm.parent_of[s]] += sub_probs[:, s]
        parent_pred = np.argmax(parent_probs, axis=1).astype(np.int64)
    elif mode == COMPOSE_ARGMAX:
        sub_pred = np.argmax(sub_probs, axis=1)
        parent_pred = pm.parent_of[sub_pred]
        parent_probs = np.full((sub_probs.shape[0], c), -np.inf)
        for s in range(pm.n_sub):
            p = pm.parent_of[s]
            parent_probs[:, p] = np.maximum(parent_probs[:, p], sub_probs[:, s])
        parent_probs /= parent_probs.sum(axis=1, keepdims=True)
    else:
        raise DataError(f"unknown composition mode: {mode!r}")
    return parent_probs, parent_pred
