"""Walk an image manifest and export penultimate activations as DTRC."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import torch

from .backbone import ExtractorConfig, load_backbone, preprocess
from .errors import ExtractorError

DTRC_MAGIC = b"DTRC"
DTRC_VERSION = 1

IMAGE_SUFFIXES = (".pgm", ".pnm", ".png", ".jpg", ".jpeg")


def scan_manifest(root) -> tuple[list[str], list[Path], list[int]]:
    """Class names, image paths and labels; class order is lexicographic."""
    root = Path(root)
    if not root.is_dir():
        raise ExtractorError(f"manifest root is not a directory: {root}")
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not class_dirs:
        raise ExtractorError(f"manifest root contains no class directories: {root}")
    paths: list[Path] = []
    labels: list[int] = []
    for idx, cdir in enumerate(class_dirs):
        files = sorted(
            f for f in cdir.iterdir()
            if f.is_file() and f.suffix.lower() in IMAGE_SUFFIXES
        )
        if not files:
            raise ExtractorError(f"class directory contains no images: {cdir}")
        paths.extend(files)
        labels.extend([idx] * len(files))
    return [d.name for d in class_dirs], paths, labels


def write_dtrc(path, features: np.ndarray, labels: list[int], names: list[str]) -> None:
    """Serialize features in the shared little-endian DTRC wire format."""
    n, m = features.shape
    parts = [DTRC_MAGIC, struct.pack("<I", DTRC_VERSION)]
    parts.append(struct.pack("<QQI", n, m, len(names)))
    for name in names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
    parts.append(np.ascontiguousarray(features, dtype="<f4").tobytes())
    parts.append(np.asarray(labels, dtype="<u4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def export_features(root, out_path, cfg: ExtractorConfig | None = None) -> dict:
    """Run the frozen backbone over the manifest and write ``out_path``.

    Returns a summary dict (n, m, classes). Nothing is written if the
    manifest is invalid or any image fails to load.
    """
    from PIL import Image, UnidentifiedImageError

    cfg = cfg or ExtractorConfig()
    names, paths, labels = scan_manifest(root)
    model = load_backbone(cfg)
    transform = preprocess(cfg)

    tensors = []
    for p in paths:
        try:
            with Image.open(p) as im:
                tensors.append(transform(im))
        except (UnidentifiedImageError, OSError) as e:
            raise ExtractorError(f"unreadable image {p}: {e}") from e

    rows = []
    with torch.no_grad():
        for start in range(0, len(tensors), cfg.batch_size):
            batch = torch.stack(tensors[start : start + cfg.batch_size])
            feats = model(batch)
            if feats.shape[1] != cfg.feature_width:
                raise ExtractorError(
                    f"backbone produced width {feats.shape[1]}, expected "
                    f"{cfg.feature_width} for {cfg.backbone}"
                )
            rows.append(feats.cpu().numpy().astype(np.float32))

    features = np.vstack(rows)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_dtrc(out_path, features, labels, names)
    return {"n": features.shape[0], "m": features.shape[1], "classes": names}
