import numpy as np
import pytest

from detrac_extractor import ExtractorConfig, ExtractorError, export_features
from detrac_extractor.cli import main
from detrac_extractor.export import scan_manifest

RANDOM_CFG = ExtractorConfig(weights="random", seed=11, batch_size=4)


def write_pgm(path, rng, size=32):
    pixels = rng.integers(0, 256, size=(size, size)).astype(np.uint8)
    path.write_bytes(f"P5\n{size} {size}\n255\n".encode() + pixels.tobytes())


@pytest.fixture(scope="module")
def toy_manifest(tmp_path_factory):
    """Six images, two per class, with one duplicated file across a class."""
    root = tmp_path_factory.mktemp("manifest")
    rng = np.random.default_rng(5)
    for cname in ("covid", "norm", "sars"):
        (root / cname).mkdir()
        write_pgm(root / cname / "a.pgm", rng)
    # duplicate each class's image as its second sample
    for cname in ("covid", "norm", "sars"):
        src = (root / cname / "a.pgm").read_bytes()
        (root / cname / "b.pgm").write_bytes(src)
    return root


@pytest.fixture(scope="module")
def exported(toy_manifest, tmp_path_factory):
    out = tmp_path_factory.mktemp("features") / "toy.dtrc"
    summary = export_features(toy_manifest, out, RANDOM_CFG)
    return out, summary


def test_scan_manifest_order(toy_manifest):
    names, paths, labels = scan_manifest(toy_manifest)
    assert names == ["covid", "norm", "sars"]
    assert len(paths) == 6
    assert labels == [0, 0, 1, 1, 2, 2]


def test_export_header_matches_backbone(exported):
    out, summary = exported
    assert summary == {"n": 6, "m": 512, "classes": ["covid", "norm", "sars"]}


def test_exported_file_loads_in_primary(exported):
    from detrac import read_features

    out, _ = exported
    data = read_features(out)
    assert data.n == 6 and data.m == 512
    assert data.label_space.names == ("covid", "norm", "sars")
    assert np.array_equal(data.labels, [0, 0, 1, 1, 2, 2])
    assert np.isfinite(data.features).all()


def test_duplicate_images_give_identical_rows(exported):
    from detrac import read_features

    out, _ = exported
    data = read_features(out)
    for c in range(3):
        rows = data.features[data.labels == c]
        assert rows.shape[0] == 2
        assert np.array_equal(rows[0], rows[1])


def test_export_deterministic(toy_manifest, tmp_path):
    a, b = tmp_path / "a.dtrc", tmp_path / "b.dtrc"
    export_features(toy_manifest, a, RANDOM_CFG)
    export_features(toy_manifest, b, RANDOM_CFG)
    assert a.read_bytes() == b.read_bytes()


def test_empty_manifest_writes_nothing(tmp_path):
    root = tmp_path / "empty"
    root.mkdir()
    out = tmp_path / "nope.dtrc"
    with pytest.raises(ExtractorError, match="no class directories"):
        export_features(root, out, RANDOM_CFG)
    (root / "a").mkdir()
    with pytest.raises(ExtractorError, match="no images"):
        export_features(root, out, RANDOM_CFG)
    assert not out.exists()


def test_unreadable_image_reported(tmp_path):
    root = tmp_path / "m"
    (root / "a").mkdir(parents=True)
    (root / "a" / "broken.png").write_bytes(b"not a png at all")
    with pytest.raises(ExtractorError, match="broken.png"):
        export_features(root, tmp_path / "x.dtrc", RANDOM_CFG)


def test_config_validation():
    with pytest.raises(ExtractorError, match="unsupported backbone"):
        ExtractorConfig(backbone="vgg99")
    with pytest.raises(ExtractorError, match="weights"):
        ExtractorConfig(weights="magic")


def test_alexnet_penultimate_width(toy_manifest, tmp_path):
    out = tmp_path / "alex.dtrc"
    cfg = ExtractorConfig(backbone="alexnet", weights="random", seed=1, batch_size=4)
    summary = export_features(toy_manifest, out, cfg)
    assert summary["m"] == 4096


def test_cli_export(toy_manifest, tmp_path, capsys):
    out = tmp_path / "cli.dtrc"
    code = main([
        "export", "--root", str(toy_manifest), "--out", str(out),
        "--backbone", "resnet18", "--weights", "random", "--seed", "11",
    ])
    assert code == 0
    assert "n=6, m=512" in capsys.readouterr().out
    assert out.exists()


def test_cli_data_error(tmp_path, capsys):
    code = main([
        "export", "--root", str(tmp_path / "missing"), "--out",
        str(tmp_path / "o.dtrc"), "--weights", "random",
    ])
    assert code == 2
    assert "error:" in capsys.readouterr().err
