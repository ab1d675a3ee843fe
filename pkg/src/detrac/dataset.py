"""Labeled feature matrices, class-decomposed variants, splits and file I/O.

The on-disk feature format (magic ``DTRC``) is the wire contract shared with
external feature extractors: little-endian, ``DTRC`` + u32 version, u64 n,
u64 m, u32 class count, class names as (u16 length, UTF-8 bytes), then n*m
float32 features row-major, then n u32 label indices.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError
from .imaging import GrayImage, load_image

MAGIC = b"DTRC"
VERSION = 1

IMAGE_SUFFIXES = (".pgm", ".pnm", ".png")


@dataclass(frozen=True)
class LabelSpace:
    """Ordered set of class names; a label is an index into ``names``."""

    names: tuple[str, ...]

    def __post_init__(self):
        if not self.names:
            raise DataError("label space must contain at least one class")
        if len(set(self.names)) != len(self.names):
            raise DataError("class names must be unique")
        object.__setattr__(self, "names", tuple(self.names))

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown class name: {name!r}") from None


@dataclass(frozen=True, eq=False)
class SampleSet:
    """n x m feature matrix with one label per row.

    Features are stored as float32, the precision of the wire format, so a
    write/read round-trip is bit-exact.
    """

    features: np.ndarray
    labels: np.ndarray
    label_space: LabelSpace

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float32)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
            raise DataError(f"features must be a non-empty 2-D matrix, got {feats.shape}")
        if not np.isfinite(feats).all():
            raise DataError("features contain non-finite values")
        if labels.shape != (feats.shape[0],):
            raise DataError("labels must align with feature rows")
        if labels.min() < 0 or labels.max() >= len(self.label_space):
            raise DataError("label index out of range")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True, eq=False)
class ParentMap:
    """Surjection from sub-class indices onto the original classes."""

    sub_names: tuple[str, ...]
    parent_of: np.ndarray
    label_space: LabelSpace

    def __post_init__(self):
        parent_of = np.ascontiguousarray(self.parent_of, dtype=np.int64)
        if parent_of.shape != (len(self.sub_names),):
            raise DataError("parent_of must have one entry per sub-class")
        if len(set(self.sub_names)) != len(self.sub_names):
            raise DataError("sub-class names must be unique")
        present = set(parent_of.tolist())
        if present != set(range(len(self.label_space))):
            raise DataError("parent_of must map onto every original class")
        object.__setattr__(self, "sub_names", tuple(self.sub_names))
        object.__setattr__(self, "parent_of", parent_of)

    @property
    def n_sub(self) -> int:
        return len(self.sub_names)

    @property
    def n_parent(self) -> int:
        return len(self.label_space)


@dataclass(frozen=True, eq=False)
class DecomposedSet:
    """A SampleSet relabeled with sub-class indices.

    Feature rows are identical to the source set; only the labels change.
    ``parent_of[sub_labels]`` recovers the original labels.
    """

    features: np.ndarray
    sub_labels: np.ndarray
    parent_map: ParentMap

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float32)
        labels = np.ascontiguousarray(self.sub_labels, dtype=np.int64)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise DataError("decomposed features must be a non-empty 2-D matrix")
        if labels.shape != (feats.shape[0],):
            raise DataError("sub_labels must align with feature rows")
        if labels.min() < 0 or labels.max() >= self.parent_map.n_sub:
            raise DataError("sub-label index out of range")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "sub_labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[1]

    def parent_labels(self) -> np.ndarray:
        return self.parent_map.parent_of[self.sub_labels]

    def as_sample_set(self) -> SampleSet:
        """View the decomposed data as a plain SampleSet over sub-class names."""
        return SampleSet(
            self.features, self.sub_labels, LabelSpace(self.parent_map.sub_names)
        )


@dataclass(frozen=True, eq=False)
class ImageManifest:
    """Images grouped by class directory, in deterministic order."""

    images: tuple[GrayImage, ...]
    labels: np.ndarray
    label_space: LabelSpace
    paths: tuple[Path, ...]  # relative to the manifest root

    @property
    def n(self) -> int:
        return len(self.images)


def load_manifest(root) -> ImageManifest:
    """Load ``root/<class>/<image>`` trees; class order is lexicographic."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"manifest root is not a directory: {root}")
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not class_dirs:
        raise DataError(f"manifest root contains no class directories: {root}")

    images: list[GrayImage] = []
    labels: list[int] = []
    rel_paths: list[Path] = []
    for idx, cdir in enumerate(class_dirs):
        files = sorted(
            f for f in cdir.iterdir()
            if f.is_file() and f.suffix.lower() in IMAGE_SUFFIXES
        )
        if not files:
            raise DataError(f"class directory contains no images: {cdir}")
        for f in files:
            images.append(load_image(f))
            labels.append(idx)
            rel_paths.append(f.relative_to(root))

    space = LabelSpace(tuple(d.name for d in class_dirs))
    return ImageManifest(
        images=tuple(images),
        labels=np.asarray(labels, dtype=np.int64),
        label_space=space,
        paths=tuple(rel_paths),
    )


def raw_pixel_features(manifest: ImageManifest, side: int = 32) -> SampleSet:
    """Fallback feature extraction: resize to ``side`` x ``side``, scale to [0, 1]."""
    from .imaging import resize_nearest

    rows = [
        resize_nearest(img, side, side).pixels.astype(np.float32).ravel() / 255.0
        for img in manifest.images
    ]
    return SampleSet(np.stack(rows), manifest.labels, manifest.label_space)


def split(
    data: SampleSet, train_fraction: float, seed: int
) -> tuple[SampleSet, SampleSet]:
    """Stratified train/test split.

    Per class, round-half-up(train_fraction * class size) samples go to the
    train side; the rest to test. Deterministic given ``seed``.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DataError("train_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for c in range(len(data.label_space)):
        members = np.flatnonzero(data.labels == c)
        if members.size < 2:
            raise DataError(
                f"class {data.label_space.names[c]!r} has fewer than 2 samples"
            )
        order = rng.permutation(members.size)
        n_train = int(np.floor(train_fraction * members.size + 0.5))
        train_idx.append(members[order[:n_train]])
        test_idx.append(members[order[n_train:]])

    tr = np.sort(np.concatenate(train_idx))
    te = np.sort(np.concatenate(test_idx))
    if tr.size == 0 or te.size == 0:
        raise DataError("train_fraction leaves one side of the split empty")
    make = lambda idx: SampleSet(data.features[idx], data.labels[idx], data.label_space)
    return make(tr), make(te)


def write_features(data: SampleSet, path) -> None:
    """Serialize a SampleSet in the ``DTRC`` wire format."""
    parts = [MAGIC, struct.pack("<I", VERSION)]
    parts.append(struct.pack("<QQI", data.n, data.m, len(data.label_space)))
    for name in data.label_space.names:
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise DataError(f"class name too long: {name[:32]!r}...")
        parts.append(struct.pack("<H", len(raw)) + raw)
    parts.append(np.ascontiguousarray(data.features, dtype="<f4").tobytes())
    parts.append(data.labels.astype("<u4").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.blob):
            raise FormatError(f"truncated payload: {self.path}")
        out = self.blob[self.pos : self.pos + count]
        self.pos += count
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_features(path) -> SampleSet:
    """Read a ``DTRC`` feature file, validating the header strictly."""
    p = Path(path)
    if not p.exists():
        raise DataError(f"file not found: {p}")
    r = _Reader(p.read_bytes(), p)
    if r.take(4) != MAGIC:
        raise FormatError(f"bad magic: {p}")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}: {p}")
    n, m, n_classes = r.unpack("<QQI")
    if n < 1 or m < 1 or n_classes < 1:
        raise FormatError(f"invalid header counts (n={n}, m={m}, classes={n_classes}): {p}")
    names = []
    for _ in range(n_classes):
        (length,) = r.unpack("<H")
        names.append(r.take(length).decode("utf-8"))
    feats = np.frombuffer(r.take(n * m * 4), dtype="<f4").reshape(n, m)
    labels = np.frombuffer(r.take(n * 4), dtype="<u4").astype(np.int64)
    if labels.size and labels.max() >= n_classes:
        raise FormatError(f"label index out of range: {p}")
    try:
        return SampleSet(feats, labels, LabelSpace(tuple(names)))
    except DataError as e:
        raise FormatError(f"{e}: {p}") from None


def read_header(path) -> dict:
    """Decode only the ``DTRC`` header (used by the CLI ``inspect`` command)."""
    p = Path(path)
    if not p.exists():
        raise DataError(f"file not found: {p}")
    r = _Reader(p.read_bytes(), p)
    if r.take(4) != MAGIC:
        raise FormatError(f"bad magic: {p}")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}: {p}")
    n, m, n_classes = r.unpack("<QQI")
    names = []
    for _ in range(n_classes):
        (length,) = r.unpack("<H")
        names.append(r.take(length).decode("utf-8"))
    return {"version": version, "n": n, "m": m, "classes": names}


def write_features_csv(data: SampleSet, path) -> None:
    """Debug export: header ``f0..f{m-1},label`` then one row per sample."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join([f"f{j}" for j in range(data.m)] + ["label"]) + "\n")
        for i in range(data.n):
            row = ",".join(repr(float(v)) for v in data.features[i])
            fh.write(f"{row},{data.labels[i]}\n")
