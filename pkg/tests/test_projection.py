import numpy as np
import pytest

from detrac import projection
from detrac.errors import DataError, FormatError
from detrac.projection import fit_pca, project, read_pca, reconstruct, write_pca


def test_axis_aligned_first_component():
    X = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 0.1], [0.0, -0.1]])
    model = fit_pca(X, components=1)
    assert np.allclose(model.components[:, 0], [1.0, 0.0], atol=1e-12)


def test_full_rank_reconstruction(rng):
    X = rng.normal(size=(30, 6))
    model = fit_pca(X, components=6)
    coords = project(model, X)
    assert np.max(np.abs(reconstruct(model, coords) - X)) <= 1e-6


def test_collinear_data_fraction_picks_one(rng):
    t = rng.normal(size=100)
    X = np.stack([t, 2 * t], axis=1) + np.array([3.0, 3.0])
    model = fit_pca(X, variance_fraction=0.95)
    assert model.output_dim == 1
    full = fit_pca(X, components=2)
    assert full.variances[1] == 0.0


def test_project_mean_is_zero(rng):
    X = rng.normal(size=(20, 5)) + 7.0
    model = fit_pca(X, components=3)
    assert np.max(np.abs(project(model, X.mean(axis=0)))) <= 1e-9


def test_projected_variances_match_model(rng):
    X = rng.normal(size=(60, 8)) @ rng.normal(size=(8, 8))
    model = fit_pca(X, components=5)
    coords = project(model, X)
    assert np.allclose(np.var(coords, axis=0, ddof=1), model.variances, atol=1e-6)
    assert np.max(np.abs(coords.mean(axis=0))) <= 1e-9


def test_orthonormality(rng):
    X = rng.normal(size=(40, 10))
    model = fit_pca(X, components=7)
    gram = model.components.T @ model.components
    assert np.max(np.abs(gram - np.eye(7))) <= 1e-8


def test_variance_conservation(rng):
    X = rng.normal(size=(25, 9))
    max_d = min(24, 9)
    model = fit_pca(X, components=max_d)
    cov_trace = np.trace(np.cov(X, rowvar=False, ddof=1))
    assert model.variances.sum() == pytest.approx(cov_trace, abs=1e-6)
    assert np.all(np.diff(model.variances) <= 1e-12)


def test_deterministic_and_sign_convention(rng):
    X = rng.normal(size=(50, 6))
    a = fit_pca(X, components=4)
    b = fit_pca(X, components=4)
    assert a.components.tobytes() == b.components.tobytes()
    assert a.mean.tobytes() == b.mean.tobytes()
    assert a.variances.tobytes() == b.variances.tobytes()
    for j in range(4):
        anchor = np.argmax(np.abs(a.components[:, j]))
        assert a.components[anchor, j] > 0


def test_dimension_mismatch():
    X = np.eye(4)
    model = fit_pca(X, components=2)
    with pytest.raises(DataError, match="column count"):
        project(model, np.ones((3, 7)))
    with pytest.raises(DataError, match="coordinate count"):
        reconstruct(model, np.ones((3, 3)))


def test_fit_rejects_bad_inputs(rng):
    with pytest.raises(DataError, match="at least 2"):
        fit_pca(np.ones((1, 4)), components=1)
    with pytest.raises(DataError, match="component count"):
        fit_pca(rng.normal(size=(5, 3)), components=4)
    with pytest.raises(DataError, match="non-finite"):
        fit_pca(np.array([[np.inf, 1.0], [0.0, 1.0]]), components=1)
    with pytest.raises(DataError, match="exactly one"):
        fit_pca(rng.normal(size=(5, 3)))
    with pytest.raises(DataError, match="exactly one"):
        fit_pca(rng.normal(size=(5, 3)), components=1, variance_fraction=0.5)


def test_fraction_never_selects_zero_variance(rng):
    t = rng.normal(size=50)
    X = np.stack([t, -t, 2 * t], axis=1)  # rank 1
    model = fit_pca(X, variance_fraction=1.0)
    assert model.output_dim == 1
    assert np.all(model.variances > 0)


def test_pca_blob_round_trip(tmp_path, rng):
    X = rng.normal(size=(20, 5))
    model = fit_pca(X, components=3)
    path = tmp_path / "model.dpca"
    write_pca(model, path)
    assert path.read_bytes()[:4] == b"DPCA"
    back = read_pca(path)
    assert back.mean.tobytes() == model.mean.tobytes()
    assert back.components.tobytes() == model.components.tobytes()
    assert back.variances.tobytes() == model.variances.tobytes()


def test_pca_blob_errors(tmp_path):
    p = tmp_path / "bad.dpca"
    p.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(FormatError, match="bad magic"):
        read_pca(p)
    model = fit_pca(np.random.default_rng(0).normal(size=(6, 3)), components=2)
    good = tmp_path / "good.dpca"
    write_pca(model, good)
    (tmp_path / "trunc.dpca").write_bytes(good.read_bytes()[:-10])
    with pytest.raises(FormatError, match="truncated"):
        read_pca(tmp_path / "trunc.dpca")
