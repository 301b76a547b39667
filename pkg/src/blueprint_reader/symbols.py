"""Drawings for the bundled object templates (black strokes on white)."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .raster import RasterImage, save_image


def _blank(h: int, w: int) -> np.ndarray:
    return np.full((h, w), 255, np.uint8)


def _arc(img: np.ndarray, cx: float, cy: float, r: float, a0: float, a1: float) -> None:
    steps = int(4 * r * abs(a1 - a0)) + 8
    for a in np.linspace(a0, a1, steps):
        x = int(round(cx + r * math.cos(a)))
        y = int(round(cy - r * math.sin(a)))
        if 0 <= y < img.shape[0] and 0 <= x < img.shape[1]:
            img[y, x] = 0


def door(size: int = 16) -> np.ndarray:
    """Open leaf along the left edge plus its swing arc."""
    img = _blank(size, size)
    img[:, 0] = 0
    img[size - 1, : 3] = 0
    _arc(img, 0, size - 1, size - 1, 0.0, math.pi / 2)
    return img


def window(width: int = 20, height: int = 7) -> np.ndarray:
    img = _blank(height, width)
    img[0, :] = img[-1, :] = 0
    img[:, 0] = img[:, -1] = 0
    img[height // 2, 2:-2] = 0
    return img


def sprinkler(size: int = 11) -> np.ndarray:
    img = _blank(size, size)
    c = size // 2
    _arc(img, c, c, c, 0.0, 2 * math.pi)
    img[c, c - 2:c + 3] = 0
    img[c - 2:c + 3, c] = 0
    return img


def fire_door(size: int = 15) -> np.ndarray:
    """Square with both diagonals."""
    img = _blank(size, size)
    img[0, :] = img[-1, :] = 0
    img[:, 0] = img[:, -1] = 0
    idx = np.arange(size)
    img[idx, idx] = 0
    img[idx, size - 1 - idx] = 0
    return img


BUILTIN_SYMBOLS = {
    "door": ("Door", door, [0, 1, 2, 3], 0.9),
    "window": ("Window", window, [0, 1], 0.9),
    "sprinkler": ("Sprinkler", sprinkler, [0], 0.9),
    "fire_door": ("FireDoor", fire_door, [0], 0.9),
}


def write_template_library(directory) -> None:
    """PNG per symbol plus manifest.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for tid, (cls, draw, rotations, threshold) in BUILTIN_SYMBOLS.items():
        fname = f"{tid}.png"
        save_image(RasterImage(draw()), directory / fname)
        entries.append({
            "id": tid, "file": fname, "class": cls, "rotations": rotations,
            "metric": "NormalizedCorrelationCoefficient", "threshold": threshold,
        })
    (directory / "manifest.json").write_text(json.dumps({"templates": entries}, indent=2) + "\n")
