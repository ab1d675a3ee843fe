"""Grayscale image loading, augmentation and contrast enhancement.

Images are 8-bit single-channel arrays. The augmentation set expands every
input into eight derived images (two flips, five rotations, one translation),
so keeping the originals gives a 9x sample count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

# Candidate pool for the five randomly sampled rotation angles (degrees).
ROTATION_ANGLE_POOL = (-30, -25, -20, -15, -10, -5, 5, 10, 15, 20, 25, 30)

AXIS_HORIZONTAL = "horizontal"
AXIS_VERTICAL = "vertical"


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Single-channel 8-bit image, pixels stored row-major as (height, width)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.size == 0:
            raise DataError(f"image must be a non-empty 2-D array, got shape {px.shape}")
        if px.dtype != np.uint8:
            if np.issubdtype(px.dtype, np.floating) and not np.isfinite(px).all():
                raise DataError("image contains non-finite values")
            if px.min() < 0 or px.max() > 255:
                raise DataError("image intensities must lie in [0, 255]")
            px = px.astype(np.uint8)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class AugmentationSpec:
    """Deterministic recipe for the derived images produced by :func:`augment`.

    ``rotation_angles`` holds exactly the angles applied, in order.
    ``translations`` may be empty to skip shifting; ``None`` entries are not
    allowed. When ``translations`` is None the per-image default of one tenth
    of each dimension is used.
    """

    flips: tuple[str, ...] = (AXIS_HORIZONTAL, AXIS_VERTICAL)
    rotation_angles: tuple[float, ...] = ()
    translations: tuple[tuple[int, int], ...] | None = None
    seed: int = 0

    @classmethod
    def default(cls, seed: int = 0) -> "AugmentationSpec":
        """Both flips, five distinct angles sampled from the pool, one shift."""
        rng = np.random.default_rng(seed)
        angles = tuple(
            float(a) for a in rng.choice(ROTATION_ANGLE_POOL, size=5, replace=False)
        )
        return cls(
            flips=(AXIS_HORIZONTAL, AXIS_VERTICAL),
            rotation_angles=angles,
            translations=None,
            seed=seed,
        )


def load_image(path) -> GrayImage:
    """Load a PGM (P2/P5) or PNG file as a grayscale image.

    Multi-channel PNGs are reduced to one channel by the per-pixel average of
    the channels (rounded half-up).
    """
    p = Path(path)
    if not p.exists():
        raise DataError(f"file not found: {p}")
    suffix = p.suffix.lower()
    if suffix in (".pgm", ".pnm"):
        return _load_pgm(p)
    if suffix == ".png":
        return _load_png(p)
    # fall back on sniffing the magic for extension-less files
    head = p.read_bytes()[:2]
    if head in (b"P2", b"P5"):
        return _load_pgm(p)
    if head == b"\x89P":
        return _load_png(p)
    raise DataError(f"unsupported image format: {p}")


def _load_pgm(path: Path) -> GrayImage:
    data = path.read_bytes()
    if data[:2] not in (b"P2", b"P5"):
        raise DataError(f"corrupt PGM (bad magic): {path}")
    binary = data[:2] == b"P5"

    # header tokens: magic, width, height, maxval; '#' starts a comment
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3 and pos < len(data):
        c = data[pos : pos + 1]
        if c == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos : pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise DataError(f"corrupt PGM header: {path}") from None
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise DataError(f"corrupt PGM header: {path}")
    pos += 1  # single whitespace after maxval

    if binary:
        if maxval > 255:
            raise DataError(f"16-bit PGM not supported: {path}")
        raw = data[pos : pos + width * height]
        if len(raw) < width * height:
            raise DataError(f"truncated PGM payload: {path}")
        px = np.frombuffer(raw, dtype=np.uint8).reshape(height, width).copy()
    else:
        try:
            values = np.array(data[pos:].split(), dtype=np.int64)
        except ValueError:
            raise DataError(f"corrupt PGM payload: {path}") from None
        if values.size < width * height:
            raise DataError(f"truncated PGM payload: {path}")
        values = values[: width * height]
        if values.min() < 0 or values.max() > maxval:
            raise DataError(f"PGM values out of range: {path}")
        px = values.reshape(height, width)
    if maxval != 255:
        px = (px.astype(np.int64) * 2 * 255 + maxval) // (2 * maxval)
    return GrayImage(px.astype(np.uint8))


def _load_png(path: Path) -> GrayImage:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            arr = np.asarray(im)
    except UnidentifiedImageError:
        raise DataError(f"corrupt PNG: {path}") from None
    if arr.ndim == 2:
        px = arr
    elif arr.ndim == 3:
        channels = arr[:, :, :3].astype(np.int64)  # drop alpha if present
        # round-half-up channel average
        px = (2 * channels.sum(axis=2) + channels.shape[2]) // (2 * channels.shape[2])
    else:
        raise DataError(f"unsupported PNG layout: {path}")
    if px.dtype != np.uint8 and px.max() > 255:
        raise DataError(f"16-bit PNG not supported: {path}")
    return GrayImage(px.astype(np.uint8))


def save_pgm(img: GrayImage, path) -> None:
    """Write a binary (P5) PGM file."""
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.pixels.tobytes())


def flip(img: GrayImage, axis: str) -> GrayImage:
    """Mirror the image. Horizontal flips left/right, vertical flips up/down."""
    if axis == AXIS_HORIZONTAL:
        return GrayImage(img.pixels[:, ::-1].copy())
    if axis == AXIS_VERTICAL:
        return GrayImage(img.pixels[::-1, :].copy())
    raise DataError(f"unknown flip axis: {axis!r}")


def rotate(img: GrayImage, angle: float) -> GrayImage:
    """Rotate about the image centre by ``angle`` degrees (counter-clockwise).

    Nearest-neighbour resampling onto a same-size canvas; pixels that fall
    outside the source are 0.
    """
    h, w = img.pixels.shape
    theta = math.radians(angle)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0

    yy, xx = np.meshgrid(np.arange(h) - cy, np.arange(w) - cx, indexing="ij")
    # inverse mapping: output pixel pulled from the source rotated by -angle
    src_x = np.rint(cos_t * xx + sin_t * yy + cx).astype(np.int64)
    src_y = np.rint(-sin_t * xx + cos_t * yy + cy).astype(np.int64)
    inside = (src_x >= 0) & (src_x < w) & (src_y >= 0) & (src_y < h)

    out = np.zeros((h, w), dtype=np.uint8)
    out[inside] = img.pixels[src_y[inside], src_x[inside]]
    return GrayImage(out)


def translate(img: GrayImage, dx: int, dy: int) -> GrayImage:
    """Shift content by (dx, dy) pixels, filling vacated pixels with 0."""
    h, w = img.pixels.shape
    if abs(dx) >= w or abs(dy) >= h:
        raise DataError(
            f"translation ({dx}, {dy}) out of range for {w}x{h} image"
        )
    out = np.zeros((h, w), dtype=np.uint8)
    xs_dst = slice(max(dx, 0), w + min(dx, 0))
    ys_dst = slice(max(dy, 0), h + min(dy, 0))
    xs_src = slice(max(-dx, 0), w + min(-dx, 0))
    ys_src = slice(max(-dy, 0), h + min(-dy, 0))
    out[ys_dst, xs_dst] = img.pixels[ys_src, xs_src]
    return GrayImage(out)


def histogram_modify(img: GrayImage) -> GrayImage:
    """Global histogram equalization over 256 bins.

    Maps intensity v to floor(255 * cdf(v)) where cdf counts pixels <= v.
    Monotone in intensity; a constant image stays constant.
    """
    counts = np.bincount(img.pixels.ravel(), minlength=256).astype(np.int64)
    cum = np.cumsum(counts)
    n = int(cum[-1])
    lut = (255 * cum // n).astype(np.uint8)
    return GrayImage(lut[img.pixels])


def resize_nearest(img: GrayImage, width: int, height: int) -> GrayImage:
    """Nearest-neighbour resize (used by the raw-pixel feature fallback)."""
    if width < 1 or height < 1:
        raise DataError("resize target must be at least 1x1")
    h, w = img.pixels.shape
    ys = (np.arange(height) * h // height).astype(np.int64)
    xs = (np.arange(width) * w // width).astype(np.int64)
    return GrayImage(img.pixels[np.ix_(ys, xs)])


def default_translation(width: int, height: int) -> tuple[int, int]:
    """One tenth of each dimension, at least one pixel where possible."""
    dx = min(max(1, width // 10), width - 1) if width > 1 else 0
    dy = min(max(1, height // 10), height - 1) if height > 1 else 0
    return dx, dy


def augment(img: GrayImage, spec: AugmentationSpec) -> list[GrayImage]:
    """Produce the derived images for ``img`` (the original is not included).

    With the default spec: horizontal flip, vertical flip, five rotations and
    one translation, in that order: eight images.
    """
    out = [flip(img, axis) for axis in spec.flips]
    out.extend(rotate(img, angle) for angle in spec.rotation_angles)
    translations = spec.translations
    if translations is None:
        translations = (default_translation(img.width, img.height),)
    out.extend(translate(img, dx, dy) for dx, dy in translations)
    return out


def augment_suffixes(img: GrayImage, spec: AugmentationSpec) -> list[str]:
    """Filename stem suffixes matching :func:`augment` output order."""
    suffixes = [f"_f{axis[0]}" for axis in spec.flips]
    suffixes.extend(f"_r{angle:g}" for angle in spec.rotation_angles)
    translations = spec.translations
    if translations is None:
        translations = (default_translation(img.width, img.height),)
    suffixes.extend(f"_t{dx}x{dy}" for dx, dy in translations)
    return suffixes
