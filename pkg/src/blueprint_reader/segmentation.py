"""Room segmentation: Canny boundaries, wall-face merging, opening closure,
room labelling, colouring and counting."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import ConfigError, NoEnclosedRegions
from .preprocess import binarize, gaussian_smooth, invert
from .raster import BinaryImage, BoundingBox, LabelMap, RasterImage


@dataclass
class SegmentationConfig:
    canny_low: float = 100.0
    canny_high: float = 200.0
    merge_distance: int = 16
    gap_close: int = 32
    min_room_area: int = 50
    connectivity: int = 4
    color_seed: int = 0
    # vertical/horizontal edge runs shorter than this are not wall faces
    min_wall_run: int = 8
    # ink components whose bounding box never reaches this span are symbols or text
    min_wall_span: int = 48

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.canny_low < self.canny_high:
            raise ConfigError("canny_low must be < canny_high")
        if min(self.merge_distance, self.gap_close, self.min_room_area) < 0:
            raise ConfigError("merge_distance, gap_close and min_room_area must be >= 0")
        if self.connectivity not in (4, 8):
            raise ConfigError("connectivity must be 4 or 8")
        if self.min_wall_run < 1:
            raise ConfigError("min_wall_run must be >= 1")


@dataclass
class RoomRegion:
    label: int
    pixel_count: int
    bbox: BoundingBox
    color: tuple[int, int, int] = (255, 255, 255)
    area_m2: float | None = None


def _structure(connectivity: int) -> np.ndarray:
    return ndimage.generate_binary_structure(2, 1 if connectivity == 4 else 2)


# --- Canny -----------------------------------------------------------------

def gradient(gray: np.ndarray, sigma: float = 1.0):
    """Smoothed Sobel gradients ``(gx, gy, magnitude)``."""
    sm = gaussian_smooth(gray, sigma)
    gx = ndimage.sobel(sm, axis=1, mode="reflect")
    gy = ndimage.sobel(sm, axis=0, mode="reflect")
    return gx, gy, np.hypot(gx, gy)


def _shift(a: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """out[y, x] = a[y + dy, x + dx], zero outside."""
    out = np.zeros_like(a)
    h, w = a.shape
    ys = slice(max(0, -dy), min(h, h - dy))
    xs = slice(max(0, -dx), min(w, w - dx))
    yd = slice(max(0, dy), min(h, h + dy))
    xd = slice(max(0, dx), min(w, w + dx))
    out[ys, xs] = a[yd, xd]
    return out


def non_maximum_suppression(gx, gy, mag) -> np.ndarray:
    """Thin the magnitude map along the gradient direction (4 bins).

    A pixel survives if it is strictly greater than its backward neighbour
    and not smaller than its forward one, so plateaus keep exactly one pixel.
    """
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    out = np.zeros_like(mag)
    bins = [
        ((angle < 22.5) | (angle >= 157.5), (0, 1)),
        ((angle >= 22.5) & (angle < 67.5), (1, 1)),
        ((angle >= 67.5) & (angle < 112.5), (1, 0)),
        ((angle >= 112.5) & (angle < 157.5), (1, -1)),
    ]
    for sel, (dy, dx) in bins:
        fwd = _shift(mag, dy, dx)
        bwd = _shift(mag, -dy, -dx)
        keep = sel & (mag > bwd) & (mag >= fwd) & (mag > 0)
        out[keep] = mag[keep]
    return out


def canny_edges(img: RasterImage, cfg: SegmentationConfig | None = None,
                sigma: float = 1.0) -> BinaryImage:
    """Gaussian smoothing, Sobel gradients, non-maximum suppression, double
    threshold and 8-connected hysteresis."""
    cfg = cfg or SegmentationConfig()
    if img.channels != 1:
        raise ValueError("canny_edges needs a 1-channel image")
    gx, gy, mag = gradient(img.pixels, sigma)
    thin = non_maximum_suppression(gx, gy, mag)
    weak = thin >= cfg.canny_low
    strong = thin >= cfg.canny_high
    lab, n = ndimage.label(weak, structure=np.ones((3, 3), bool))
    if n == 0:
        return BinaryImage(np.zeros(weak.shape, bool))
    keep = np.zeros(n + 1, bool)
    keep[np.unique(lab[strong])] = True
    keep[0] = False
    return BinaryImage(keep[lab])


# --- wall extraction ---------------------------------------------------------

def _runs(line: np.ndarray):
    """(start, stop) pairs of True runs in a 1D bool array."""
    d = np.diff(np.concatenate(([0], line.view(np.int8), [0])))
    return zip(np.nonzero(d == 1)[0], np.nonzero(d == -1)[0])


def _column_runs(mask: np.ndarray, min_len: int):
    runs = []
    for x in np.nonzero(mask.any(axis=0))[0]:
        for a, b in _runs(mask[:, x]):
            if b - a >= min_len:
                runs.append((int(x), int(a), int(b)))
    return runs


def _group_runs(runs, distance: int):
    """Union runs that sit within ``distance`` columns and overlap in rows."""
    parent = list(range(len(runs)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(runs)):
        xi, ai, bi = runs[i]
        for j in range(i + 1, len(runs)):
            xj, aj, bj = runs[j]
            if xj - xi > distance:
                break
            if aj < bi and ai < bj:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    groups = {}
    for i in range(len(runs)):
        groups.setdefault(find(i), []).append(runs[i])
    return [groups[k] for k in sorted(groups)]


def _interval_union(intervals):
    merged = []
    for a, b in sorted(intervals):
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return merged


def _merge_columns(mask: np.ndarray, distance: int, min_run: int):
    """Centerline segments ``(x, y0, y1)`` for one orientation."""
    runs = sorted(_column_runs(mask, min_run))
    segments = []
    for group in _group_runs(runs, distance):
        xs = [r[0] for r in group]
        xc = (min(xs) + max(xs)) // 2
        for a, b in _interval_union([(r[1], r[2]) for r in group]):
            segments.append((xc, a, b))
    return segments


def _join_corners(vert, horiz, reach: int):
    """Extend perpendicular segment pairs to their crossing point.

    A vertical ``(x, a, b)`` and a horizontal ``(y, c, d)`` are joined when
    the crossing (x, y) lies within ``reach`` of both extents. This closes
    L-corners and T-junctions whose centerlines stop short of each other.
    """
    vert = [list(v) for v in vert]
    horiz = [list(h) for h in horiz]
    for v in vert:
        x, a, b = v
        for h in horiz:
            y, c, d = h
            if a - reach <= y < b + reach and c - reach <= x < d + reach:
                v[1], v[2] = min(v[1], y), max(v[2], y + 1)
                h[1], h[2] = min(h[1], x), max(h[2], x + 1)
    return vert, horiz


def extract_wall_mask(edges: BinaryImage, cfg: SegmentationConfig | None = None) -> BinaryImage:
    """Collapse parallel wall faces into 1-px centerlines.

    Vertical runs are merged first, then horizontal ones. Runs whose
    parallel counterpart lies within ``merge_distance`` are replaced by the
    centerline of the group; lone runs are kept in place. Perpendicular
    centerlines that stop within ``merge_distance`` of each other are joined.
    """
    cfg = cfg or SegmentationConfig()
    bits = edges.bits
    skel = np.zeros_like(bits)
    vert = _merge_columns(bits, cfg.merge_distance, cfg.min_wall_run)
    horiz = _merge_columns(bits.T, cfg.merge_distance, cfg.min_wall_run)
    if cfg.merge_distance > 0:
        vert, horiz = _join_corners(vert, horiz, cfg.merge_distance)
    for x, a, b in vert:
        skel[a:b, x] = True
    for y, a, b in horiz:
        skel[y, a:b] = True
    return BinaryImage(skel)


def _bridge_rows(mask: np.ndarray, gap: int, min_run: int) -> np.ndarray:
    out = mask.copy()
    for y in np.nonzero(mask.any(axis=1))[0]:
        runs = [r for r in _runs(mask[y]) if r[1] - r[0] >= min_run]
        for (a0, b0), (a1, b1) in zip(runs, runs[1:]):
            if a1 - b0 <= gap:
                out[y, b0:a1] = True
    return out


def close_openings(walls: BinaryImage, cfg: SegmentationConfig | None = None,
                   min_run: int = 2) -> BinaryImage:
    """Bridge collinear gaps of at most ``gap_close`` pixels.

    Only gaps between two runs of at least ``min_run`` pixels along the scan
    direction are filled, so crossings of perpendicular lines never bridge.
    """
    cfg = cfg or SegmentationConfig()
    bits = walls.bits
    if cfg.gap_close <= 0:
        return BinaryImage(bits.copy())
    rows = _bridge_rows(bits, cfg.gap_close, min_run)
    cols = _bridge_rows(bits.T, cfg.gap_close, min_run).T
    return BinaryImage(rows | cols)


# --- labelling -----------------------------------------------------------------

def connected_components(mask: np.ndarray, connectivity: int = 4):
    """Label True pixels; labels follow raster order of each component's first pixel."""
    lab, n = ndimage.label(mask, structure=_structure(connectivity))
    return lab, n


def room_colors(count: int, seed: int) -> list[tuple[int, int, int]]:
    """``count`` distinct non-white colours from a seeded generator."""
    rng = np.random.default_rng(seed)
    colors, seen = [], set()
    while len(colors) < count:
        c = tuple(int(v) for v in rng.integers(30, 231, size=3))
        if c not in seen:
            seen.add(c)
            colors.append(c)
    return colors


def label_rooms(walls: BinaryImage, cfg: SegmentationConfig | None = None):
    """Enclosed non-wall components as rooms.

    Components touching the image border are exterior; components below
    ``min_room_area`` are dropped. Returns ``(LabelMap, [RoomRegion])``.
    """
    cfg = cfg or SegmentationConfig()
    lab, n = connected_components(~walls.bits, cfg.connectivity)
    border = np.unique(np.concatenate((lab[0], lab[-1], lab[:, 0], lab[:, -1])))
    sizes = np.bincount(lab.ravel(), minlength=n + 1)
    keep = sizes >= cfg.min_room_area
    keep[border] = False
    keep[0] = False
    remap = np.zeros(n + 1, np.int32)
    remap[keep] = np.arange(1, int(keep.sum()) + 1)
    labels = remap[lab]
    k = int(keep.sum())
    if k == 0:
        raise NoEnclosedRegions("no enclosed regions found")
    colors = room_colors(k, cfg.color_seed)
    counts = np.bincount(labels.ravel(), minlength=k + 1)
    regions = []
    for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        ys, xs = sl
        regions.append(RoomRegion(
            label=idx,
            pixel_count=int(counts[idx]),
            bbox=BoundingBox(xs.start, ys.start, xs.stop, ys.stop),
            color=colors[idx - 1],
        ))
    return LabelMap(labels), regions


def colorize_rooms(labels: LabelMap, seed: int = 0) -> RasterImage:
    """RGB rendering with one seeded colour per label and white background."""
    k = labels.count
    lut = np.full((k + 1, 3), 255, np.uint8)
    if k:
        lut[1:] = np.array(room_colors(k, seed), np.uint8)
    return RasterImage(lut[labels.labels])


def count_rooms(regions) -> int:
    return len(regions)


# --- whole-stage driver -------------------------------------------------------

def wall_solid_mask(gray: RasterImage, cfg: SegmentationConfig | None = None) -> BinaryImage:
    """Dark strokes that belong to walls: ink components spanning at least
    ``min_wall_span`` pixels. Text glyphs and symbols fall below it."""
    cfg = cfg or SegmentationConfig()
    ink = invert(binarize(gray, "otsu")).bits
    lab, n = ndimage.label(ink, structure=np.ones((3, 3), bool))
    keep = np.zeros(n + 1, bool)
    for idx, sl in enumerate(ndimage.find_objects(lab), start=1):
        ys, xs = sl
        if max(ys.stop - ys.start, xs.stop - xs.start) >= cfg.min_wall_span:
            keep[idx] = True
    return BinaryImage(keep[lab])


@dataclass
class Segmentation:
    solid: BinaryImage
    edges: BinaryImage
    skeleton: BinaryImage
    closed: BinaryImage
    labels: LabelMap
    regions: list = field(default_factory=list)


def segment(gray: RasterImage, cfg: SegmentationConfig | None = None,
            sigma: float = 1.0) -> Segmentation:
    """Full segmentation of a grayscale blueprint.

    Rooms are bounded by wall centerlines; each room's ``pixel_count`` is
    then reduced to its floor pixels, i.e. those not covered by wall ink
    (with door openings in the ink bridged the same way as the skeleton).
    """
    cfg = cfg or SegmentationConfig()
    solid = wall_solid_mask(gray, cfg)
    edges = canny_edges(solid.to_raster(foreground=0), cfg, sigma=sigma)
    skeleton = extract_wall_mask(edges, cfg)
    closed = close_openings(skeleton, cfg)
    labels, regions = label_rooms(closed, cfg)
    solid_closed = close_openings(solid, cfg)
    floor = np.where(solid_closed.bits, 0, labels.labels)
    net = np.bincount(floor.ravel(), minlength=len(regions) + 1)
    regions = [replace(r, pixel_count=int(net[r.label])) for r in regions]
    return Segmentation(solid, edges, skeleton, closed, labels, regions)
