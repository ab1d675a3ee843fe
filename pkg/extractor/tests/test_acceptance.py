"""Secondary acceptance: exported features drive the primary pipeline."""

import json

import numpy as np
import pytest

from detrac_extractor import ExtractorConfig, export_features


def write_pgm(path, rng, size=32):
    pixels = rng.integers(0, 256, size=(size, size)).astype(np.uint8)
    path.write_bytes(f"P5\n{size} {size}\n255\n".encode() + pixels.tobytes())


def test_criterion_10_extractor_integration(tmp_path):
    from detrac import read_features
    from detrac.cli import main as detrac_main

    rng = np.random.default_rng(42)
    root = tmp_path / "manifest"
    for cname in ("covid", "norm", "sars"):
        (root / cname).mkdir(parents=True)
        for stem in ("one", "two"):
            write_pgm(root / cname / f"{stem}.pgm", rng)

    out_file = tmp_path / "toy.dtrc"
    summary = export_features(
        root, out_file, ExtractorConfig(weights="random", seed=3, batch_size=4)
    )
    assert summary["n"] == 6
    assert summary["m"] == 512  # 18-layer backbone penultimate width
    assert summary["classes"] == ["covid", "norm", "sars"]

    data = read_features(out_file)  # header + payload validation in the primary
    assert data.n == 6 and data.m == 512

    # full pipeline end to end; two samples per class forces k_per_class = 1
    out_dir = tmp_path / "run"
    code = detrac_main([
        "pipeline", "--seed", "1", "--out", str(out_dir),
        "--set", f"paths.features={out_file}",
        "--set", "decompose.k_per_class=1",
        "--set", "run.train_fraction=0.5",
        "--set", "train.epochs=3",
    ])
    assert code == 0
    doc = json.loads((out_dir / "metrics.json").read_text())
    assert doc["n"] == 3
    assert doc["classes"] == ["covid", "norm", "sars"]
    assert set(doc["headline"]) == {"accuracy", "sensitivity", "specificity"}
    print("[PASS] criterion 10: extractor features drive the primary pipeline end-to-end")
