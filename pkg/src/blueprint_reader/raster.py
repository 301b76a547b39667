"""Image value types, box geometry and file I/O.

All image types wrap read-only numpy arrays; every operation returns a new
value and never mutates its input.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import CorruptImage, OutOfBounds, UnsupportedFormat

_SIGNATURES = {
    b"\x89PNG\r\n\x1a\n": "PNG",
    b"\xff\xd8\xff": "JPEG",
    b"P5": "PGM",
    b"P2": "PGM",
    b"P6": "PPM",
}
_READ_FORMATS = {"PNG", "JPEG", "PPM"}  # Pillow reports PGM files as PPM


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class RasterImage:
    """8-bit gray (H, W) or RGB (H, W, 3) pixel grid."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.dtype != np.uint8:
            raise TypeError(f"RasterImage needs uint8 samples, got {px.dtype}")
        if px.ndim == 3 and px.shape[2] == 1:
            px = px[:, :, 0]
        if not (px.ndim == 2 or (px.ndim == 3 and px.shape[2] == 3)):
            raise ValueError(f"unsupported pixel shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("width and height must be >= 1")
        object.__setattr__(self, "pixels", _frozen(px))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    @property
    def shape(self) -> tuple:
        return self.pixels.shape

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f"RasterImage({self.width}x{self.height}x{self.channels})"


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Two-tone image; True marks foreground."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2 or b.shape[0] < 1 or b.shape[1] < 1:
            raise ValueError(f"BinaryImage needs a non-empty 2D array, got {b.shape}")
        object.__setattr__(self, "bits", _frozen(b.astype(bool, copy=False)))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def shape(self) -> tuple:
        return self.bits.shape

    def count(self) -> int:
        return int(self.bits.sum())

    def to_raster(self, foreground: int = 255) -> RasterImage:
        """Render as gray with foreground at ``foreground`` and background at the other tone."""
        bg = 255 - foreground
        return RasterImage(np.where(self.bits, foreground, bg).astype(np.uint8))

    def __eq__(self, other):
        if not isinstance(other, BinaryImage):
            return NotImplemented
        return self.bits.shape == other.bits.shape and np.array_equal(self.bits, other.bits)

    def __repr__(self):
        return f"BinaryImage({self.width}x{self.height}, {self.count()} fg)"


@dataclass(frozen=True, order=True)
class BoundingBox:
    """Pixel box, inclusive on the top/left and exclusive on the bottom/right."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        for name in ("x0", "y0", "x1", "y1"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate box {self.as_list()}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1 - 1) / 2.0, (self.y0 + self.y1 - 1) / 2.0)

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def from_list(cls, values) -> "BoundingBox":
        x0, y0, x1, y1 = values
        return cls(x0, y0, x1, y1)

    @classmethod
    def from_xywh(cls, x: int, y: int, w: int, h: int) -> "BoundingBox":
        return cls(x, y, x + w, y + h)

    def within(self, width: int, height: int) -> bool:
        return self.x0 >= 0 and self.y0 >= 0 and self.x1 <= width and self.y1 <= height

    def union(self, other: "BoundingBox") -> "BoundingBox":
        return BoundingBox(min(self.x0, other.x0), min(self.y0, other.y0),
                           max(self.x1, other.x1), max(self.y1, other.y1))

    def intersection_area(self, other: "BoundingBox") -> int:
        w = min(self.x1, other.x1) - max(self.x0, other.x0)
        h = min(self.y1, other.y1) - max(self.y0, other.y0)
        return max(w, 0) * max(h, 0)

    def iou(self, other: "BoundingBox") -> float:
        inter = self.intersection_area(other)
        return inter / float(self.area + other.area - inter)

    def offset(self, dx: int, dy: int) -> "BoundingBox":
        return BoundingBox(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y0, self.y1), slice(self.x0, self.x1)


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Per-pixel region labels, 0 = background."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise ValueError("LabelMap needs a 2D array")
        if lab.size and lab.min() < 0:
            raise ValueError("labels must be non-negative")
        object.__setattr__(self, "labels", _frozen(lab.astype(np.int32, copy=False)))

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def count(self) -> int:
        return int(self.labels.max()) if self.labels.size else 0

    def label_at(self, x: int, y: int) -> int:
        return int(self.labels[y, x])

    def to_raster(self) -> RasterImage:
        """Debug rendering with labels spread over 0..255."""
        k = self.count
        if k == 0:
            return RasterImage(np.zeros(self.labels.shape, np.uint8))
        scaled = np.round(self.labels.astype(np.float64) * (255.0 / k))
        return RasterImage(scaled.astype(np.uint8))


AnyImage = Union[RasterImage, BinaryImage]


def _sniff(path: Path) -> str | None:
    with open(path, "rb") as fh:
        head = fh.read(8)
    for sig, fmt in _SIGNATURES.items():
        if head.startswith(sig):
            return fmt
    return None


def _to_uint8(im: Image.Image) -> np.ndarray:
    mode = im.mode
    if mode in ("I;16", "I;16B", "I;16L", "I"):
        arr = np.asarray(im, dtype=np.float64)
        peak = 65535.0 if mode.startswith("I;16") or arr.max() > 255 else 255.0
        return np.clip(np.round(arr * 255.0 / peak), 0, 255).astype(np.uint8)
    if mode == "F":
        arr = np.asarray(im, dtype=np.float64)
        return np.clip(np.round(arr), 0, 255).astype(np.uint8)
    if mode in ("RGBA", "LA", "PA") or (mode == "P" and "transparency" in im.info):
        rgba = np.asarray(im.convert("RGBA"), dtype=np.float64)
        alpha = rgba[:, :, 3:4] / 255.0
        rgb = rgba[:, :, :3] * alpha + 255.0 * (1.0 - alpha)
        out = np.round(rgb).astype(np.uint8)
        if mode == "LA":
            return out[:, :, 0]
        return out
    if mode in ("L", "1"):
        return np.asarray(im.convert("L"), dtype=np.uint8)
    return np.asarray(im.convert("RGB"), dtype=np.uint8)


def load_image(path: os.PathLike | str) -> RasterImage:
    """Decode a PNG, JPEG or PGM file into a gray or RGB RasterImage."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image: {path}")
    sniffed = _sniff(path)
    try:
        with Image.open(path) as im:
            if im.format not in _READ_FORMATS:
                raise UnsupportedFormat(f"{path}: {im.format} images are not supported")
            im.load()
            arr = _to_uint8(im)
    except UnidentifiedImageError as exc:
        if sniffed is None:
            raise UnsupportedFormat(f"{path}: unrecognised image format") from exc
        raise CorruptImage(f"{path}: {exc}") from exc
    except (OSError, SyntaxError, ValueError) as exc:
        raise CorruptImage(f"{path}: {exc}") from exc
    return RasterImage(arr)


def save_image(img: AnyImage, path: os.PathLike | str) -> None:
    """Write losslessly as PNG, or as binary PGM/PPM when the suffix asks for it."""
    path = Path(path)
    if isinstance(img, BinaryImage):
        img = img.to_raster()
    px = img.pixels
    suffix = path.suffix.lower()
    if suffix == ".pgm" and img.channels != 1:
        raise ValueError("PGM output needs a 1-channel image")
    fmt = {".png": "PNG", ".pgm": "PPM", ".ppm": "PPM"}.get(suffix)
    if fmt is None:
        raise UnsupportedFormat(f"cannot write {suffix or 'extensionless'} files; use .png or .pgm")
    mode = "L" if img.channels == 1 else "RGB"
    Image.fromarray(np.array(px), mode=mode).save(path, format=fmt)


def crop(img: AnyImage, box: BoundingBox) -> AnyImage:
    """Copy the pixels under ``box``."""
    if not box.within(img.width, img.height):
        raise OutOfBounds(f"box {box.as_list()} outside {img.width}x{img.height} image")
    ys, xs = box.slices()
    if isinstance(img, BinaryImage):
        return BinaryImage(img.bits[ys, xs].copy())
    return RasterImage(img.pixels[ys, xs].copy())


def to_binary(img: RasterImage, threshold: int = 127) -> BinaryImage:
    """Foreground = samples above ``threshold`` (gray only)."""
    if img.channels != 1:
        raise ValueError("to_binary needs a 1-channel image")
    return BinaryImage(img.pixels > threshold)
