"""Synthetic blueprint fixtures with exact ground truth, plus overlay drawing.

A fixture spec is a JSON-compatible dict::

    {
      "canvas": [W, H],
      "wall_thickness": 4,
      "rooms": [{"rect": [x0, y0, x1, y1], "label": "R1", "function": "BATH",
                 "area_error": 0.0}],
      "doors": [{"rect": [x0, y0, x1, y1]}],
      "ruler": {"origin": [x, y], "sector_mm": 2580, "sector_px": 100,
                "sectors": 4, "height": 14, "orientation": "horizontal",
                "color": [60, 110, 220]},
      "objects": [{"template": "door", "x": 40, "y": 50, "rotation": 0}],
      "font": {"scale": 1},
    }

Room rects are floor interiors; walls of ``wall_thickness`` are drawn around
each one, so two rooms sharing a wall sit exactly one thickness apart. Door
rects are cleared back to paper and must not touch any interior.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np

from .calibration import area_m2
from .errors import InvalidSpec
from .font import LINE_SPACING, render_text, text_height, text_width
from .objects import builtin_template_dir, load_template_library
from .raster import BoundingBox, LabelMap, RasterImage, save_image

PAPER = (255, 255, 255)
INK = (0, 0, 0)
RULER_COLOR = (60, 110, 220)
RULER_PAD = 3
OBJECT_CLEARANCE = 3
DOOR_JUNCTION_CLEARANCE = 24


def _box(values, what) -> BoundingBox:
    try:
        x0, y0, x1, y1 = (int(v) for v in values)
    except (TypeError, ValueError):
        raise InvalidSpec(f"{what}: rect must be four integers") from None
    if x1 <= x0 or y1 <= y0:
        raise InvalidSpec(f"{what}: empty rect {values}")
    return BoundingBox(x0, y0, x1, y1)


def _grow(b: BoundingBox, m: int) -> BoundingBox:
    return BoundingBox(b.x0 - m, b.y0 - m, b.x1 + m, b.y1 + m)


def _draw_ruler(r: dict, scale: int):
    """Ruler band image (horizontal) and its tick columns relative to the band."""
    sector_px = float(r["sector_px"])
    n = int(r.get("sectors", 4))
    height = int(r.get("height", 14))
    color = tuple(r.get("color", RULER_COLOR))
    if n < 1 or sector_px < 8 or height < text_height(scale) + 4:
        raise InvalidSpec("ruler: need >= 1 sector, sector_px >= 8 and room for the labels")
    ticks = [RULER_PAD + int(round(k * sector_px)) for k in range(n + 1)]
    width = ticks[-1] + RULER_PAD + 1
    band = np.empty((height, width, 3), np.uint8)
    band[:] = color
    for x in ticks:
        band[:, x] = INK
    text = f"{float(r['sector_mm']):g}"
    tw, th = text_width(text, scale), text_height(scale)
    for a, b in zip(ticks, ticks[1:]):
        if tw > b - a - 4:
            raise InvalidSpec(f"ruler: label {text!r} does not fit a {b - a} px sector")
        render_text(band, text, a + (b - a - tw) // 2 + 1, (height - th) // 2, scale, ink=INK)
    return band


def generate_fixture(spec: dict, seed: int = 0, template_dir=None):
    """Render ``spec``; returns (RasterImage RGB, ground-truth dict).

    The seed only feeds optional per-room jitter of unspecified text
    placement, so equal spec and seed always give identical pixels.
    """
    spec = copy.deepcopy(spec)
    rng = np.random.default_rng(seed)
    try:
        W, H = (int(v) for v in spec["canvas"])
        t = int(spec.get("wall_thickness", 4))
    except (KeyError, TypeError, ValueError):
        raise InvalidSpec("spec needs canvas [W, H]") from None
    if t < 2:
        raise InvalidSpec("wall thickness must be >= 2 px")
    if W < 8 or H < 8:
        raise InvalidSpec("canvas too small")
    scale = int(spec.get("font", {}).get("scale", 1))
    jitter = bool(spec.get("text_jitter", False))

    rooms = [_box(r.get("rect"), f"room {i}") for i, r in enumerate(spec.get("rooms", []))]
    for i, b in enumerate(rooms):
        if not _grow(b, t).within(W, H):
            raise InvalidSpec(f"room {i}: walls leave the canvas")
        for j in range(i):
            if b.intersection_area(_grow(rooms[j], t - 1)) > 0:
                raise InvalidSpec(f"rooms {j} and {i} overlap or share less than a wall")

    img = np.empty((H, W, 3), np.uint8)
    img[:] = PAPER
    for b in rooms:
        img[_grow(b, t).slices()] = INK
    for b in rooms:
        img[b.slices()] = PAPER
    for i, d in enumerate(spec.get("doors", [])):
        db = _box(d.get("rect"), f"door {i}")
        if not db.within(W, H) or any(db.intersection_area(b) for b in rooms):
            raise InvalidSpec(f"door {i}: must lie on walls inside the canvas")
        img[db.slices()] = PAPER

    truth = {"canvas": [W, H], "wall_thickness": t, "mm_per_pixel": None,
             "ruler_box": None, "rooms": [], "objects": [], "tokens": []}
    ruler = spec.get("ruler")
    mmpp = spec.get("mm_per_pixel")
    occupied = [_grow(b, t) for b in rooms]
    if ruler:
        band = _draw_ruler(ruler, scale)
        if ruler.get("orientation", "horizontal") == "vertical":
            band = np.ascontiguousarray(np.rot90(band, 1))
        ox, oy = (int(v) for v in ruler["origin"])
        rb = BoundingBox(ox, oy, ox + band.shape[1], oy + band.shape[0])
        if not rb.within(W, H) or any(rb.intersection_area(o) for o in occupied):
            raise InvalidSpec("ruler: outside the canvas or over a room")
        img[rb.slices()] = band
        occupied.append(rb)
        truth["ruler_box"] = rb.as_list()
        mmpp = float(ruler["sector_mm"]) / float(ruler["sector_px"])
    truth["mm_per_pixel"] = mmpp

    text_boxes = []
    for i, (r, b) in enumerate(zip(spec.get("rooms", []), rooms)):
        pixels = b.area
        exact = area_m2(pixels, mmpp) if mmpp else None
        rounded = round(exact, 1) if exact is not None else None
        lines = []
        if r.get("label"):
            lines.append(("label", str(r["label"])))
        if r.get("function"):
            lines.append(("function", str(r["function"]).upper()))
        printed = None
        if rounded is not None and r.get("show_area", True):
            printed = round(rounded * (1.0 + float(r.get("area_error", 0.0))), 1)
            lines.append(("area", f"{printed:.1f} m2"))
        room_truth = {"label": r.get("label"), "function": r.get("function"),
                      "rect": b.as_list(), "pixel_count": pixels,
                      "area_exact_m2": exact, "area_m2": rounded,
                      "area_printed_m2": printed}
        if lines:
            lh = text_height(scale)
            block_h = len(lines) * lh + (len(lines) - 1) * LINE_SPACING * scale
            block_w = max(text_width(s, scale) for _, s in lines)
            if block_w > b.width - 4 or block_h > b.height - 4:
                raise InvalidSpec(f"room {i}: text block {block_w}x{block_h} does not fit")
            cx, cy = b.x0 + (b.width - block_w) // 2, b.y0 + (b.height - block_h) // 2
            if jitter:
                cx += int(rng.integers(-(b.width - block_w - 4) // 4, (b.width - block_w - 4) // 4 + 1))
                cy += int(rng.integers(-(b.height - block_h - 4) // 4, (b.height - block_h - 4) // 4 + 1))
            y = cy
            for kind, s in lines:
                lx = b.x0 + (b.width - text_width(s, scale)) // 2 if not jitter else cx
                glyphs = render_text(img, s, lx, y, scale, ink=INK)
                box = glyphs[0][1]
                for _, g in glyphs[1:]:
                    box = box.union(g)
                truth["tokens"].append({"room": i, "kind": kind, "text": s, "bbox": box.as_list(),
                                        "glyphs": [[c, g.as_list()] for c, g in glyphs]})
                text_boxes.append(box)
                y += lh + LINE_SPACING * scale
        truth["rooms"].append(room_truth)

    placements = spec.get("objects", [])
    if placements:
        library = {tp.id: tp for tp in load_template_library(template_dir or builtin_template_dir())}
        stamped = []
        for i, o in enumerate(placements):
            tp = library.get(o.get("template"))
            if tp is None:
                raise InvalidSpec(f"object {i}: unknown template {o.get('template')!r}")
            k = int(o.get("rotation", 0)) % 4
            arr = np.rot90(tp.image.pixels, k)
            x, y = int(o["x"]), int(o["y"])
            ob = BoundingBox(x, y, x + arr.shape[1], y + arr.shape[0])
            padded = _grow(ob, OBJECT_CLEARANCE)
            host = [j for j, b in enumerate(rooms) if b.union(padded) == b]
            if not host:
                raise InvalidSpec(f"object {i}: must sit inside a room, {OBJECT_CLEARANCE} px from walls")
            if any(_grow(ob, 2).intersection_area(tb) for tb in text_boxes + stamped):
                raise InvalidSpec(f"object {i}: overlaps text or another object")
            region = img[ob.slices()]
            region[:] = np.minimum(region, arr[:, :, None])
            stamped.append(ob)
            truth["objects"].append({"template": tp.id, "class": tp.cls, "rotation": k,
                                     "bbox": ob.as_list(), "room": host[0]})
    return RasterImage(img), truth


def ground_truth_labels(truth: dict) -> LabelMap:
    """Label map of the room interiors (1..N in spec order)."""
    W, H = truth["canvas"]
    lab = np.zeros((H, W), np.int32)
    for i, r in enumerate(truth["rooms"], start=1):
        lab[BoundingBox.from_list(r["rect"]).slices()] = i
    return LabelMap(lab)


def write_fixture(spec: dict, out_dir, name: str = "fixture", seed: int = 0, template_dir=None):
    """Write ``<name>.png`` and ``<name>.truth.json``; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    img, truth = generate_fixture(spec, seed, template_dir)
    png = out_dir / f"{name}.png"
    js = out_dir / f"{name}.truth.json"
    save_image(img, png)
    js.write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n")
    return png, js


def demo_spec_path() -> Path:
    return Path(__file__).parent / "data" / "demo_six_rooms.json"


def load_spec(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise InvalidSpec(f"{path}: {e}") from None


# --- random plans --------------------------------------------------------------

_SHORT_FUNCTIONS = ("WC", "BATH", "HALL", "LIVING", "DINING", "KITCHEN", "BEDROOM", "CLOSET")


def random_plan_spec(seed: int, rooms=(2, 10), thickness=(2, 8), door=(6, 14),
                     min_cell: int = 70, with_ruler: bool = True, with_text: bool = True) -> dict:
    """Guillotine-partitioned rectangular plan with doors between neighbours.

    Cells are split on wall centerlines, so every room is a cell shrunk by
    the wall thickness and neighbours share exactly one wall.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(rooms[0], rooms[1] + 1))
    t = int(rng.integers(thickness[0], thickness[1] + 1))
    bw = int(rng.integers(300, 460)) + 12 * n
    bh = int(rng.integers(220, 320)) + 6 * n
    margin = 30
    cells = [(margin, margin, margin + bw, margin + bh)]
    attempts = 0
    while len(cells) < n and attempts < 200:
        attempts += 1
        cells.sort(key=lambda c: -(c[2] - c[0]) * (c[3] - c[1]))
        idx = 0 if attempts < 50 else int(rng.integers(0, len(cells)))
        X0, Y0, X1, Y1 = cells[idx]
        vertical = (X1 - X0) >= (Y1 - Y0)
        lo, hi = (X0, X1) if vertical else (Y0, Y1)
        if hi - lo < 2 * min_cell:
            continue
        cut = int(rng.integers(lo + max(min_cell, int(0.35 * (hi - lo))),
                               hi - max(min_cell, int(0.35 * (hi - lo))) + 1))
        cells.pop(idx)
        if vertical:
            cells += [(X0, Y0, cut, Y1), (cut, Y0, X1, Y1)]
        else:
            cells += [(X0, Y0, X1, cut), (X0, cut, X1, Y1)]
    cells.sort(key=lambda c: (c[1], c[0]))
    h0 = t // 2
    interiors = [(X0 - h0 + t, Y0 - h0 + t, X1 - h0, Y1 - h0) for X0, Y0, X1, Y1 in cells]

    # wall pieces left between a door and a junction stay long enough to
    # read as wall rather than as a symbol
    keep = max(t + 8, DOOR_JUNCTION_CLEARANCE)
    doors = []
    for i in range(len(cells)):
        for j in range(i + 1, len(cells)):
            a, b = interiors[i], interiors[j]
            for axis in (0, 1):
                # a's far edge + t == b's near edge along axis, overlap on the other
                o = 1 - axis
                if a[2 + axis] + t == b[axis] or b[2 + axis] + t == a[axis]:
                    first = a if a[2 + axis] + t == b[axis] else b
                    lo, hi = max(a[o], b[o]), min(a[2 + o], b[2 + o])
                    dw = int(rng.integers(door[0], door[1] + 1))
                    if hi - lo < dw + 2 * keep:
                        continue
                    s = int(rng.integers(lo + keep, hi - keep - dw + 1))
                    w0 = first[2 + axis]
                    rect = [w0, s, w0 + t, s + dw] if axis == 0 else [s, w0, s + dw, w0 + t]
                    doors.append({"rect": rect})
    # one entrance through the outer wall of the first room
    x0, y0, x1, y1 = interiors[0]
    dw = int(rng.integers(door[0], door[1] + 1))
    if x1 - x0 > dw + 2 * keep:
        s = int(rng.integers(x0 + keep, x1 - keep - dw + 1))
        doors.append({"rect": [s, y0 - t, s + dw, y0]})

    mmpp = float(rng.integers(150, 350)) / 10.0
    sector_px = 100
    spec = {"canvas": [bw + 2 * margin, bh + 2 * margin + 40], "wall_thickness": t,
            "rooms": [], "doors": doors, "objects": []}
    for k, (x0, y0, x1, y1) in enumerate(interiors):
        room = {"rect": [x0, y0, x1, y1], "show_area": False}
        if with_text:
            room["label"] = f"R{k + 1}"
            fits = [f for f in _SHORT_FUNCTIONS if text_width(f) <= x1 - x0 - 8]
            room["function"] = fits[int(rng.integers(0, len(fits)))] if fits else None
            room["show_area"] = text_width("000.0 m2") <= x1 - x0 - 8
        spec["rooms"].append(room)
    if with_ruler:
        sectors = max(1, min(4, (bw - 2 * RULER_PAD) // sector_px))
        spec["ruler"] = {"origin": [margin, bh + margin + 18], "sector_mm": round(mmpp * sector_px),
                         "sector_px": sector_px, "sectors": sectors, "height": 14}
    else:
        spec["mm_per_pixel"] = mmpp
    return spec


# --- overlays --------------------------------------------------------------------

def draw_rectangles(img: RasterImage, boxes, color=(255, 0, 0), width: int = 1) -> RasterImage:
    """RGB copy of ``img`` with rectangle outlines."""
    px = img.pixels
    out = np.repeat(px[:, :, None], 3, axis=2) if px.ndim == 2 else px.copy()
    H, W = out.shape[:2]
    for b in boxes:
        x0, y0 = max(b.x0, 0), max(b.y0, 0)
        x1, y1 = min(b.x1, W), min(b.y1, H)
        if x1 <= x0 or y1 <= y0:
            continue
        for k in range(width):
            out[min(y0 + k, H - 1), x0:x1] = color
            out[max(y1 - 1 - k, 0), x0:x1] = color
            out[y0:y1, min(x0 + k, W - 1)] = color
            out[y0:y1, max(x1 - 1 - k, 0)] = color
    return RasterImage(out)
