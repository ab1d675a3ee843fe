"""PCA projection of the feature space ahead of per-class clustering."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError

PCA_MAGIC = b"DPCA"
PCA_VERSION = 1

# eigenvalues below RANK_TOL * leading eigenvalue are treated as zero
RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Mean vector, orthonormal component basis and per-component variances.

    ``components`` is m x d with orthonormal columns; ``variances`` are the
    matching covariance eigenvalues, sorted non-increasing.
    """

    mean: np.ndarray
    components: np.ndarray
    variances: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.components.shape[0]

    @property
    def output_dim(self) -> int:
        return self.components.shape[1]


def fit_pca(
    X: np.ndarray,
    components: int | None = None,
    variance_fraction: float | None = None,
) -> PcaModel:
    """Fit a PCA model on the rows of X.

    Exactly one of ``components`` (an explicit output dimension) or
    ``variance_fraction`` (keep the smallest count of leading components whose
    eigenvalue sum reaches that fraction of the total) must be given.
    Eigenpairs come from the SVD of the centered data; the covariance divisor
    is n - 1. Sign convention: the largest-magnitude entry of each component
    is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"expected a 2-D matrix, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise DataError("input contains non-finite values")
    n, m = X.shape
    if n < 2:
        raise DataError("PCA needs at least 2 samples")
    if (components is None) == (variance_fraction is None):
        raise DataError("specify exactly one of components / variance_fraction")

    max_d = min(n - 1, m)
    mean = X.mean(axis=0)
    centered = X - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    svals = svals[:max_d]
    vt = vt[:max_d]
    eigvals = (svals * svals) / (n - 1)
    if eigvals.size and eigvals[0] > 0:
        eigvals = np.where(eigvals < RANK_TOL * eigvals[0], 0.0, eigvals)

    if components is not None:
        d = int(components)
        if not 1 <= d <= max_d:
            raise DataError(f"component count must lie in [1, {max_d}], got {d}")
    else:
        v = float(variance_fraction)
        if not 0.0 < v <= 1.0:
            raise DataError("variance_fraction must lie in (0, 1]")
        total = eigvals.sum()
        if total <= 0.0:
            raise DataError("data has zero variance; cannot pick components by fraction")
        cum = np.cumsum(eigvals)
        d = int(np.searchsorted(cum, v * total) + 1)
        d = min(d, int(np.count_nonzero(eigvals)))  # never select zero-variance axes

    basis = vt[:d].T.copy()
    # fixed sign: flip any column whose largest-magnitude entry is negative
    anchors = np.argmax(np.abs(basis), axis=0)
    signs = np.where(basis[anchors, np.arange(d)] < 0, -1.0, 1.0)
    basis *= signs
    return PcaModel(mean=mean, components=basis, variances=eigvals[:d].copy())


def project(model: PcaModel, X: np.ndarray) -> np.ndarray:
    """Map rows of X into the component space: (X - mean) @ components."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.input_dim:
        raise DataError(
            f"column count {X.shape[1]} does not match model input dim {model.input_dim}"
        )
    return (X - model.mean) @ model.components


def reconstruct(model: PcaModel, coords: np.ndarray) -> np.ndarray:
    """Inverse of :func:`project` restricted to the retained subspace."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim == 1:
        coords = coords[None, :]
    if coords.shape[1] != model.output_dim:
        raise DataError(
            f"coordinate count {coords.shape[1]} does not match model output dim "
            f"{model.output_dim}"
        )
    return model.mean + coords @ model.components.T


def write_pca(model: PcaModel, path) -> None:
    """Serialize a PcaModel (magic ``DPCA``, little-endian, float64 payload)."""
    m, d = model.components.shape
    parts = [
        PCA_MAGIC,
        struct.pack("<I", PCA_VERSION),
        struct.pack("<QQ", m, d),
        np.ascontiguousarray(model.mean, dtype="<f8").tobytes(),
        np.ascontiguousarray(model.components, dtype="<f8").tobytes(),
        np.ascontiguousarray(model.variances, dtype="<f8").tobytes(),
    ]
    Path(path).write_bytes(b"".join(parts))


def read_pca(path) -> PcaModel:
    p = Path(path)
    if not p.exists():
        raise DataError(f"file not found: {p}")
    blob = p.read_bytes()
    if blob[:4] != PCA_MAGIC:
        raise FormatError(f"bad magic: {p}")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != PCA_VERSION:
        raise FormatError(f"unsupported version {version}: {p}")
    m, d = struct.unpack("<QQ", blob[8:24])
    need = 24 + 8 * (m + m * d + d)
    if len(blob) < need:
        raise FormatError(f"truncated payload: {p}")
    pos = 24
    mean = np.frombuffer(blob, dtype="<f8", count=m, offset=pos).copy()
    pos += 8 * m
    comps = np.frombuffer(blob, dtype="<f8", count=m * d, offset=pos).reshape(m, d).copy()
    pos += 8 * m * d
    variances = np.frombuffer(blob, dtype="<f8", count=d, offset=pos).copy()
    return PcaModel(mean=mean, components=comps, variances=variances)
