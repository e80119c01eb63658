"""Controlled stimulus generation and external image-dataset ingestion.

Two synthetic dataset families are generated here: "block" images (one
uniform color inside a border) and "stripe" images (two colors alternating
in vertical stripes, a grating-like stimulus).  External data comes in as
directories of raster files or as CIFAR-10 binary batches.

Every image carries a rectangular central mask; color metrics only ever see
the masked region, while embeddings see the whole raster.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataError

CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3 * 1024 channel-plane bytes


def default_palette(levels: int = 6) -> np.ndarray:
    """Uniform per-channel grid of sRGB colors (6 levels -> 216 colors)."""
    steps = np.round(np.linspace(0, 255, levels)).astype(np.uint8)
    r, g, b = np.meshgrid(steps, steps, steps, indexing="ij")
    return np.stack([r, g, b], axis=-1).reshape(-1, 3)


@dataclass(frozen=True)
class ImageRecord:
    """An sRGB raster with identity, central mask, and provenance.

    mask is (x0, y0, x1, y1), half-open, x = column and y = row; the masked
    region is pixels[y0:y1, x0:x1].
    """

    id: str
    pixels: np.ndarray  # (H, W, 3) uint8
    mask: tuple[int, int, int, int]
    source: str

    def central(self) -> np.ndarray:
        x0, y0, x1, y1 = self.mask
        return self.pixels[y0:y1, x0:x1]

    def validate(self) -> None:
        h, w = self.pixels.shape[:2]
        x0, y0, x1, y1 = self.mask
        if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
            raise DataError(f"{self.id}: mask {self.mask} outside {w}x{h} bounds")


@dataclass(frozen=True)
class BlockSpec:
    size: int = 300
    border_width: int = 50
    border_color: tuple[int, int, int] = (255, 255, 255)
    palette: np.ndarray = field(default_factory=default_palette)
    seed: int = 0

    def validate(self) -> None:
        if self.size < 2 or not 0 <= self.border_width < self.size / 2:
            raise DataError(f"invalid geometry: size={self.size} border={self.border_width}")


@dataclass(frozen=True)
class StripeSpec(BlockSpec):
    # Stripes of this width alternate across the central region; if the
    # width does not divide the region evenly the last stripe is truncated.
    stripe_width: int = 25

    def validate(self) -> None:
        super().validate()
        if self.stripe_width < 1:
            raise DataError(f"invalid stripe width {self.stripe_width}")


def _canvas(spec: BlockSpec) -> tuple[np.ndarray, tuple[int, int, int, int]]:
    img = np.empty((spec.size, spec.size, 3), dtype=np.uint8)
    img[:] = np.asarray(spec.border_color, dtype=np.uint8)
    w = spec.border_width
    return img, (w, w, spec.size - w, spec.size - w)


def gen_blocks(n: int, spec: BlockSpec | None = None) -> list[ImageRecord]:
    """Generate n single-color block images, colors drawn from the palette."""
    spec = spec or BlockSpec()
    spec.validate()
    if n < 1:
        raise DataError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(spec.seed)
    picks = rng.integers(0, len(spec.palette), size=n)
    records = []
    for i, p in enumerate(picks):
        img, mask = _canvas(spec)
        x0, y0, x1, y1 = mask
        img[y0:y1, x0:x1] = spec.palette[p]
        records.append(ImageRecord(f"block_{i:05d}", img, mask, "block"))
    return records


def gen_stripes(n: int, spec: StripeSpec | None = None) -> list[ImageRecord]:
    """Generate n two-color vertical-stripe images."""
    spec = spec or StripeSpec()
    spec.validate()
    if n < 1:
        raise DataError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(spec.seed)
    picks = rng.integers(0, len(spec.palette), size=(n, 2))
    records = []
    for i, (pa, pb) in enumerate(picks):
        img, mask = _canvas(spec)
        x0, y0, x1, y1 = mask
        cols = np.arange(x1 - x0)
        stripe_of_col = (cols // spec.stripe_width) % 2
        colors = np.stack([spec.palette[pa], spec.palette[pb]])
        img[y0:y1, x0:x1] = colors[stripe_of_col][None, :, :]
        records.append(ImageRecord(f"stripe_{i:05d}", img, mask, "stripe"))
    return records


@dataclass(frozen=True)
class LoadFailure:
    id: str
    path: str
    reason: str


def load_image_dir(path, source: str = "colorgram") -> tuple[list[ImageRecord], list[LoadFailure]]:
    """Load every raster file in a directory, full-image masks, name order.

    Returns (records, failures); files that cannot be decoded become
    LoadFailure entries rather than aborting the whole load.  Alpha channels
    are stripped on load.
    """
    root = Path(path)
    if not root.is_dir():
        raise DataError(f"not a directory: {root}")
    files = sorted(p for p in root.iterdir() if p.is_file())
    if not files:
        raise DataError(f"no files in {root}")
    records, failures = [], []
    for p in files:
        try:
            with Image.open(p) as im:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            failures.append(LoadFailure(p.stem, str(p), str(exc)))
            continue
        h, w = arr.shape[:2]
        records.append(ImageRecord(p.stem, arr, (0, 0, w, h), source))
    if not records:
        raise DataError(f"no decodable images in {root}")
    return records, failures


def parse_cifar10_batch(raw: bytes) -> tuple[np.ndarray, np.ndarray]:
    """Parse CIFAR-10 binary records into (labels, images).

    Each record is 3073 bytes: 1 label byte then 1024-byte R, G, B planes,
    row-major 32x32.  Returns labels (n,) and images (n, 32, 32, 3) uint8.
    """
    if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES != 0:
        raise DataError(
            f"file length {len(raw)} is not a positive multiple of {CIFAR_RECORD_BYTES}")
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
    labels = rec[:, 0].copy()
    planes = rec[:, 1:].reshape(-1, 3, 32, 32)
    return labels, np.moveaxis(planes, 1, -1).copy()


def serialize_cifar10(labels: np.ndarray, images: np.ndarray) -> bytes:
    """Inverse of parse_cifar10_batch, bit-exact."""
    planes = np.moveaxis(images, -1, 1).reshape(len(labels), 3 * 1024)
    rec = np.concatenate([np.asarray(labels, np.uint8)[:, None], planes], axis=1)
    return rec.tobytes()


def _upscale_nearest(img: np.ndarray, size: int) -> np.ndarray:
    src = img.shape[0]
    idx = (np.arange(size) * src) // size
    return img[idx][:, idx]


def load_cifar10(path, resize_to: int = 300) -> list[ImageRecord]:
    """Load a CIFAR-10 binary batch file, upscaling nearest-neighbor.

    Nearest-neighbor keeps the color histogram of each image exactly, which
    is what the color metrics consume.  The class label is kept in the id.
    """
    p = Path(path)
    labels, images = parse_cifar10_batch(p.read_bytes())
    records = []
    for i, (label, img) in enumerate(zip(labels, images)):
        up = _upscale_nearest(img, resize_to) if resize_to != 32 else img
        h, w = up.shape[:2]
        records.append(ImageRecord(
            f"{p.stem}_{i:05d}_label{label}", up, (0, 0, w, h), "cifar10"))
    return records


def write_dataset(records: list[ImageRecord], out_dir) -> Path:
    """Write records as PNGs plus a manifest.jsonl; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.jsonl"
    with open(manifest, "w") as fh:
        for rec in records:
            rec.validate()
            fname = f"{rec.id}.png"
            Image.fromarray(rec.pixels, mode="RGB").save(out / fname, format="PNG")
            h, w = rec.pixels.shape[:2]
            fh.write(json.dumps({
                "id": rec.id, "source": rec.source, "width": w, "height": h,
                "mask": list(rec.mask), "path": fname,
            }) + "\n")
    return manifest


def load_dataset(manifest_path) -> list[ImageRecord]:
    """Load a dataset written by write_dataset."""
    manifest = Path(manifest_path)
    if manifest.is_dir():
        manifest = manifest / "manifest.jsonl"
    if not manifest.is_file():
        raise DataError(f"manifest not found: {manifest}")
    records = []
    with open(manifest) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                meta = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{manifest}:{lineno}: bad JSON ({exc})") from exc
            img_path = manifest.parent / meta["path"]
            with Image.open(img_path) as im:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
            if arr.shape[:2] != (meta["height"], meta["width"]):
                raise DataError(f"{manifest}:{lineno}: size mismatch for {meta['id']}")
            rec = ImageRecord(meta["id"], arr, tuple(meta["mask"]), meta["source"])
            rec.validate()
            records.append(rec)
    if not records:
        raise DataError(f"empty manifest: {manifest}")
    return records


def with_border_color(records: list[ImageRecord], color: tuple[int, int, int]) -> list[ImageRecord]:
    """Copies of block/stripe records with the border repainted."""
    out = []
    for rec in records:
        px = rec.pixels.copy()
        x0, y0, x1, y1 = rec.mask
        central = px[y0:y1, x0:x1].copy()
        px[:] = np.asarray(color, dtype=np.uint8)
        px[y0:y1, x0:x1] = central
        out.append(replace(rec, pixels=px))
    return out
