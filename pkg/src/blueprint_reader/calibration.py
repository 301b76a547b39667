"""Scale calibration: ruler detection, mm-per-pixel reading and room areas."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from statistics import mean, median

import numpy as np
from scipy import ndimage

from .errors import ConfigError, InconsistentSectors, NoLegibleSectors, RulerNotFound
from .preprocess import Square, binarize, clahe, morphology, otsu_threshold, to_grayscale
from .raster import BinaryImage, BoundingBox, RasterImage, crop
from .textual import GlyphRecognizer, group_words

_LENGTH_RE = re.compile(r"^(\d+(?:[.,]\d+)?)(MM|CM|M)?$", re.IGNORECASE)
_UNIT_MM = {None: 1.0, "mm": 1.0, "cm": 10.0, "m": 1000.0}


@dataclass
class CalibrationConfig:
    clahe_clip: float = 2.0
    clahe_tiles: int = 8
    min_aspect: float = 5.0
    # ruler must lie within this fraction of the image size from an edge
    margin_fraction: float = 0.25
    # a tick column is dark over at least this fraction of the ruler height
    tick_fraction: float = 0.8
    max_deviation: float = 0.2
    scale_override: float | None = None

    def __post_init__(self):
        if self.min_aspect < 1:
            raise ConfigError("min_aspect must be >= 1")
        if not 0 < self.max_deviation < 1:
            raise ConfigError("max_deviation must lie in (0, 1)")
        if self.scale_override is not None and not (self.scale_override > 0 and math.isfinite(self.scale_override)):
            raise ConfigError("scale_override must be a positive finite mm/pixel value")


@dataclass
class ScaleCalibration:
    mm_per_pixel: float
    source: str = "RulerDetected"  # or "Override"
    sectors_used: int = 0
    ruler_box: BoundingBox | None = None

    def __post_init__(self):
        if not (self.mm_per_pixel > 0 and math.isfinite(self.mm_per_pixel)):
            raise ValueError("mm_per_pixel must be positive and finite")

    def to_dict(self) -> dict:
        return {
            "mm_per_pixel": round(self.mm_per_pixel, 4),
            "source": self.source,
            "sectors_used": self.sectors_used,
            "ruler_box": self.ruler_box.as_list() if self.ruler_box else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScaleCalibration":
        box = d.get("ruler_box")
        return cls(float(d["mm_per_pixel"]), d["source"], int(d["sectors_used"]),
                   BoundingBox.from_list(box) if box else None)


def ruler_saliency(img: RasterImage) -> np.ndarray:
    """Per-channel mid-tone response, max over channels.

    Black ink and white paper score 0; a tinted or gray ruler band scores high.
    """
    px = img.pixels.astype(np.int32)
    chans = [px] if px.ndim == 2 else [px[:, :, c] for c in range(3)]
    resp = [np.clip(255 - 2 * np.abs(c - 128), 0, 255) for c in chans]
    return np.max(resp, axis=0).astype(np.uint8)


def detect_ruler_region(img: RasterImage, cfg: CalibrationConfig | None = None) -> BoundingBox:
    """Box of the brightest elongated band near an image margin."""
    cfg = cfg or CalibrationConfig()
    sal = RasterImage(ruler_saliency(img))
    if sal.pixels.max() == 0:
        raise RulerNotFound("no tinted band in the image")
    enhanced = clahe(sal, cfg.clahe_clip, cfg.clahe_tiles)
    t = max(otsu_threshold(enhanced), 64)
    mask = BinaryImage(enhanced.pixels > t)
    mask = morphology(morphology(mask, "close", Square(3)), "open", Square(3))
    lab, n = ndimage.label(mask.bits, structure=np.ones((3, 3), bool))
    h, w = mask.shape
    best = None
    for idx, sl in enumerate(ndimage.find_objects(lab), start=1):
        ys, xs = sl
        bh, bw = ys.stop - ys.start, xs.stop - xs.start
        if max(bh, bw) / min(bh, bw) < cfg.min_aspect:
            continue
        comp = lab[sl] == idx
        if comp.mean() < 0.5:
            continue
        if bw >= bh:
            near = min(ys.start, h - ys.stop) <= cfg.margin_fraction * h
        else:
            near = min(xs.start, w - xs.stop) <= cfg.margin_fraction * w
        if not near:
            continue
        brightness = float(enhanced.pixels[sl][comp].mean())
        key = (brightness, int(comp.sum()))
        if best is None or key > best[0]:
            best = (key, BoundingBox(xs.start, ys.start, xs.stop, ys.stop))
    if best is None:
        raise RulerNotFound("no elongated bright band near a margin")
    return best[1]


def _tick_centers(dark: np.ndarray, fraction: float) -> list[float]:
    cols = dark.mean(axis=0) >= fraction
    centers = []
    x = 0
    w = len(cols)
    while x < w:
        if cols[x]:
            start = x
            while x < w and cols[x]:
                x += 1
            centers.append((start + x - 1) / 2.0)
        else:
            x += 1
    return centers


def parse_length_mm(text: str) -> float | None:
    m = _LENGTH_RE.match(text.strip())
    if not m:
        return None
    unit = m.group(2).lower() if m.group(2) else None
    return float(m.group(1).replace(",", ".")) * _UNIT_MM[unit]


def _read_horizontal(gray: np.ndarray, recognizer, cfg: CalibrationConfig):
    level = float(np.median(gray))
    dark = gray < 0.5 * level
    ticks = _tick_centers(dark, cfg.tick_fraction)
    if len(ticks) < 2:
        return []
    clean = np.where(dark, 0, 255).astype(np.uint8)
    tick_cols = dark.mean(axis=0) >= cfg.tick_fraction
    clean[:, tick_cols] = 255
    chars = recognizer.recognize(RasterImage(clean))
    sectors = []
    for word in group_words(chars) if chars else []:
        mm = parse_length_mm(word.text)
        if mm is None or mm <= 0:
            continue
        cx = word.bbox.center[0]
        for a, b in zip(ticks, ticks[1:]):
            if a < cx < b:
                sectors.append((a, mm / (b - a)))
                break
    seen = {}
    for a, factor in sectors:
        seen.setdefault(a, factor)  # one reading per sector
    return list(seen.values())


def read_scale_factor(ruler: RasterImage, recognizer=None,
                      cfg: CalibrationConfig | None = None) -> ScaleCalibration:
    """mm/pixel from tick spacing and the printed sector lengths.

    Each legible sector gives printed_mm / sector_pixels; sectors more than
    ``max_deviation`` from the median are rejected and the rest averaged.
    """
    cfg = cfg or CalibrationConfig()
    recognizer = recognizer or GlyphRecognizer()
    gray = to_grayscale(ruler).pixels
    views = [gray] if gray.shape[1] >= gray.shape[0] else [np.rot90(gray, -1), np.rot90(gray, 1)]
    factors = []
    for view in views:
        got = _read_horizontal(np.ascontiguousarray(view), recognizer, cfg)
        if len(got) > len(factors):
            factors = got
    if not factors:
        raise NoLegibleSectors("no ruler sector carries a legible length")
    mid = median(factors)
    kept = [f for f in factors if abs(f - mid) <= cfg.max_deviation * mid]
    if not kept:
        raise InconsistentSectors(f"all {len(factors)} sectors deviate from the median")
    return ScaleCalibration(mean(sorted(kept)), "RulerDetected", len(kept))


def calibrate(img: RasterImage, recognizer=None, cfg: CalibrationConfig | None = None) -> ScaleCalibration:
    """Override if configured, otherwise detect and read the ruler."""
    cfg = cfg or CalibrationConfig()
    if cfg.scale_override is not None:
        return ScaleCalibration(float(cfg.scale_override), "Override", 0)
    box = detect_ruler_region(img, cfg)
    cal = read_scale_factor(crop(img, box), recognizer, cfg)
    return replace(cal, ruler_box=box)


def area_m2(pixel_count: int, mm_per_pixel: float) -> float:
    return pixel_count * mm_per_pixel * mm_per_pixel / 1_000_000.0


def compute_room_areas(regions, cal: ScaleCalibration):
    """Regions with ``area_m2`` filled in, rounded to 0.1 m^2."""
    return [replace(r, area_m2=round(area_m2(r.pixel_count, cal.mm_per_pixel), 1)) for r in regions]
