"""Template-matching object detection with six score metrics."""

from __future__ import annotations

import enum
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DuplicateId, ManifestMissing, MissingImage, TemplateTooLarge
from .preprocess import to_grayscale
from .raster import BoundingBox, RasterImage, load_image

KNOWN_CLASSES = ("Door", "Window", "Sprinkler", "FireDoor")
MANIFEST_NAME = "manifest.json"


class MatchMetric(enum.Enum):
    SQUARED_DIFFERENCE = "SquaredDifference"
    NORMALIZED_SQUARED_DIFFERENCE = "NormalizedSquaredDifference"
    CROSS_CORRELATION = "CrossCorrelation"
    NORMALIZED_CROSS_CORRELATION = "NormalizedCrossCorrelation"
    CORRELATION_COEFFICIENT = "CorrelationCoefficient"
    NORMALIZED_CORRELATION_COEFFICIENT = "NormalizedCorrelationCoefficient"

    @property
    def minimize(self) -> bool:
        return self in (MatchMetric.SQUARED_DIFFERENCE, MatchMetric.NORMALIZED_SQUARED_DIFFERENCE)

    @classmethod
    def parse(cls, value) -> "MatchMetric":
        if isinstance(value, cls):
            return value
        key = str(value).replace("_", "").replace("-", "").lower()
        aliases = {
            "sqdiff": cls.SQUARED_DIFFERENCE, "sqdiffnormed": cls.NORMALIZED_SQUARED_DIFFERENCE,
            "ccorr": cls.CROSS_CORRELATION, "ccorrnormed": cls.NORMALIZED_CROSS_CORRELATION,
            "ccoeff": cls.CORRELATION_COEFFICIENT, "ccoeffnormed": cls.NORMALIZED_CORRELATION_COEFFICIENT,
            "nsd": cls.NORMALIZED_SQUARED_DIFFERENCE, "ncc": cls.NORMALIZED_CROSS_CORRELATION,
            "nccoef": cls.NORMALIZED_CORRELATION_COEFFICIENT,
        }
        for m in cls:
            aliases[m.value.lower()] = m
            aliases[m.name.replace("_", "").lower()] = m
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown match metric {value!r}") from None


DEFAULT_METRIC = MatchMetric.NORMALIZED_CORRELATION_COEFFICIENT


@dataclass
class Template:
    id: str
    cls: str
    image: RasterImage
    rotations: tuple = (0,)
    metric: MatchMetric = DEFAULT_METRIC
    threshold: float = 0.9

    def __post_init__(self):
        if self.image.channels != 1:
            self.image = to_grayscale(self.image)
        self.rotations = tuple(sorted({0, *(int(r) % 4 for r in self.rotations)}))
        self.metric = MatchMetric.parse(self.metric)

    def oriented(self):
        """(quarter_turns, pixels) for every orientation to try."""
        return [(k, np.rot90(self.image.pixels, k)) for k in self.rotations]


@dataclass
class Detection:
    template_id: str
    cls: str
    bbox: BoundingBox
    score: float
    metric: MatchMetric
    rotation: int = 0

    def to_dict(self) -> dict:
        return {
            "template_id": self.template_id,
            "class": self.cls,
            "bbox": self.bbox.as_list(),
            "score": round(float(self.score), 6),
            "metric": self.metric.value,
            "rotation": self.rotation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Detection":
        return cls(d["template_id"], d["class"], BoundingBox.from_list(d["bbox"]),
                   float(d["score"]), MatchMetric.parse(d["metric"]), int(d.get("rotation", 0)))


# --- score maps ----------------------------------------------------------------

def _window_sums(a: np.ndarray, th: int, tw: int) -> np.ndarray:
    ii = np.zeros((a.shape[0] + 1, a.shape[1] + 1), np.int64)
    ii[1:, 1:] = a.cumsum(0).cumsum(1)
    return ii[th:, tw:] - ii[:-th, tw:] - ii[th:, :-tw] + ii[:-th, :-tw]


def _cross_term(src: np.ndarray, tpl: np.ndarray) -> np.ndarray:
    """Exact sum of T*I over every placement.

    T is split into its most common value c plus a sparse remainder D, so
    the cost scales with the number of non-background template pixels.
    """
    th, tw = tpl.shape
    oh, ow = src.shape[0] - th + 1, src.shape[1] - tw + 1
    values, counts = np.unique(tpl, return_counts=True)
    c = int(values[np.argmax(counts)])
    out = c * _window_sums(src, th, tw)
    d = tpl - c
    for ky, kx in zip(*np.nonzero(d)):
        out += int(d[ky, kx]) * src[ky:ky + oh, kx:kx + ow]
    return out


def score_map(src, tpl, metric=DEFAULT_METRIC) -> np.ndarray:
    """Score of ``tpl`` at every valid top-left placement in ``src``.

    Normalized variants divide by sqrt(sum T^2 * sum I^2) of the (for the
    coefficient metrics, mean-subtracted) terms. Zero denominators give 0
    for the correlation metrics; for the normalized squared difference they
    give 0 when the numerator is 0 too and +inf otherwise.
    """
    metric = MatchMetric.parse(metric)
    src = np.asarray(src.pixels if isinstance(src, RasterImage) else src).astype(np.int64)
    tpl = np.asarray(tpl.pixels if isinstance(tpl, RasterImage) else tpl).astype(np.int64)
    th, tw = tpl.shape
    if th > src.shape[0] or tw > src.shape[1]:
        raise TemplateTooLarge(f"template {tw}x{th} larger than source {src.shape[1]}x{src.shape[0]}")
    n = th * tw
    cross = _cross_term(src, tpl)
    s_t = int(tpl.sum())
    s_tt = int((tpl * tpl).sum())
    if metric is MatchMetric.CROSS_CORRELATION:
        return cross.astype(np.float64)
    s_ii = _window_sums(src * src, th, tw)
    if metric is MatchMetric.SQUARED_DIFFERENCE:
        return (s_tt - 2 * cross + s_ii).astype(np.float64)
    if metric is MatchMetric.NORMALIZED_SQUARED_DIFFERENCE:
        num = (s_tt - 2 * cross + s_ii).astype(np.float64)
        den = np.sqrt(float(s_tt) * s_ii.astype(np.float64))
        out = np.where(num == 0, 0.0, np.inf)
        ok = den > 0
        out[ok] = num[ok] / den[ok]
        return out
    if metric is MatchMetric.NORMALIZED_CROSS_CORRELATION:
        den = np.sqrt(float(s_tt) * s_ii.astype(np.float64))
        out = np.zeros(cross.shape)
        ok = den > 0
        out[ok] = cross[ok] / den[ok]
        return out
    s_i = _window_sums(src, th, tw)
    num_n = n * cross - s_t * s_i  # n * sum(T' I')
    if metric is MatchMetric.CORRELATION_COEFFICIENT:
        return num_n / float(n)
    var_t = n * s_tt - s_t * s_t
    var_i = n * s_ii - s_i * s_i
    den = np.sqrt(float(var_t) * var_i.astype(np.float64))
    out = np.zeros(cross.shape)
    ok = den > 0
    out[ok] = num_n[ok] / den[ok]
    return np.clip(out, -1.0, 1.0)


def _best_index(scores: np.ndarray, minimize: bool):
    flat = scores.ravel()
    idx = int(np.argmin(flat) if minimize else np.argmax(flat))  # first occurrence = raster order
    return divmod(idx, scores.shape[1])


def _finite(v: float) -> float:
    return float(np.nan_to_num(v, posinf=sys.float_info.max, neginf=-sys.float_info.max))


def _check_size(src_px: np.ndarray, t: Template):
    h, w = src_px.shape
    th, tw = t.image.height, t.image.width
    if th >= h or tw >= w:
        raise TemplateTooLarge(f"template {t.id} ({tw}x{th}) must be smaller than source ({w}x{h})")


def _gray_pixels(src) -> np.ndarray:
    if isinstance(src, RasterImage):
        src = to_grayscale(src).pixels
    return np.asarray(src)


def match_template(src, t: Template, metric=None) -> Detection:
    """Single best placement over all of the template's orientations."""
    metric = MatchMetric.parse(metric or t.metric)
    px = _gray_pixels(src)
    _check_size(px, t)
    best = None
    for k, tpl in t.oriented():
        if tpl.shape[0] >= px.shape[0] or tpl.shape[1] >= px.shape[1]:
            continue
        scores = score_map(px, tpl, metric)
        y, x = _best_index(scores, metric.minimize)
        s = float(scores[y, x])
        better = best is None or (s < best[0] if metric.minimize else s > best[0])
        if better:
            best = (s, y, x, k, tpl.shape)
    if best is None:
        raise TemplateTooLarge(f"no orientation of template {t.id} fits the source")
    s, y, x, k, (th, tw) = best
    return Detection(t.id, t.cls, BoundingBox(x, y, x + tw, y + th), _finite(s), metric, k)


def non_maximum_suppression(dets: list[Detection], iou: float, minimize: bool = False) -> list[Detection]:
    """Greedy suppression; ``dets`` must already be sorted best-first."""
    if not dets:
        return []
    boxes = np.array([d.bbox.as_list() for d in dets], np.int64)
    alive = np.ones(len(dets), bool)
    keep = []
    areas = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    for i in range(len(dets)):
        if not alive[i]:
            continue
        keep.append(dets[i])
        bx = boxes[i]
        iw = np.clip(np.minimum(boxes[:, 2], bx[2]) - np.maximum(boxes[:, 0], bx[0]), 0, None)
        ih = np.clip(np.minimum(boxes[:, 3], bx[3]) - np.maximum(boxes[:, 1], bx[1]), 0, None)
        inter = iw * ih
        ious = inter / (areas + areas[i] - inter)
        alive &= ~(ious > iou)
    return keep


def match_template_multi(src, t: Template, metric=None, threshold: float | None = None,
                         nms_iou: float = 0.3) -> list[Detection]:
    """Every placement beating ``threshold``, de-duplicated by greedy IoU
    suppression and sorted best-first."""
    metric = MatchMetric.parse(metric or t.metric)
    threshold = t.threshold if threshold is None else threshold
    if not 0 <= nms_iou < 1:
        raise ValueError("nms_iou must lie in [0, 1)")
    px = _gray_pixels(src)
    _check_size(px, t)
    cands = []
    for k, tpl in t.oriented():
        if tpl.shape[0] >= px.shape[0] or tpl.shape[1] >= px.shape[1]:
            continue
        scores = score_map(px, tpl, metric)
        hit = scores <= threshold if metric.minimize else scores >= threshold
        ys, xs = np.nonzero(hit)
        th, tw = tpl.shape
        for y, x in zip(ys.tolist(), xs.tolist()):
            cands.append((float(scores[y, x]), y, x, k, th, tw))
    sign = 1.0 if metric.minimize else -1.0
    cands.sort(key=lambda c: (sign * c[0], c[1], c[2], c[3]))
    dets = [Detection(t.id, t.cls, BoundingBox(x, y, x + tw, y + th), _finite(s), metric, k)
            for s, y, x, k, th, tw in cands]
    return non_maximum_suppression(dets, nms_iou)


def detect_objects(src, templates: list[Template], metric=None, threshold: float | None = None,
                   nms_iou: float = 0.3) -> list[Detection]:
    """Multi-match every template; per-template settings unless overridden."""
    out = []
    for t in templates:
        out.extend(match_template_multi(src, t, metric=metric, threshold=threshold, nms_iou=nms_iou))
    return out


def class_counts(dets: list[Detection], templates: list[Template] = ()) -> dict[str, int]:
    counts = {c: 0 for c in KNOWN_CLASSES}
    for t in templates:
        counts.setdefault(t.cls, 0)
    for d in dets:
        counts[d.cls] = counts.get(d.cls, 0) + 1
    return counts


# --- library ---------------------------------------------------------------------

def read_manifest(directory) -> list[dict]:
    directory = Path(directory)
    path = directory / MANIFEST_NAME
    if not path.is_file():
        raise ManifestMissing(f"no {MANIFEST_NAME} in {directory}")
    data = json.loads(path.read_text(encoding="utf-8"))
    entries = data["templates"] if isinstance(data, dict) else data
    return entries


def load_template_library(directory) -> list[Template]:
    """Templates listed in ``manifest.json``: id, file, class, rotations,
    metric and threshold per entry."""
    directory = Path(directory)
    entries = read_manifest(directory)
    seen = set()
    templates = []
    for e in entries:
        tid = str(e["id"])
        if tid in seen:
            raise DuplicateId(f"duplicate template id {tid!r}")
        seen.add(tid)
        path = directory / e["file"]
        if not path.is_file():
            raise MissingImage(f"template {tid!r}: missing image {path}")
        templates.append(Template(
            id=tid,
            cls=str(e.get("class", "Other")),
            image=to_grayscale(load_image(path)),
            rotations=tuple(e.get("rotations", ())),
            metric=MatchMetric.parse(e.get("metric", DEFAULT_METRIC.value)),
            threshold=float(e.get("threshold", 0.9)),
        ))
    return templates


def builtin_template_dir() -> Path:
    return Path(__file__).parent / "data" / "templates"


@dataclass
class ObjectsConfig:
    # directory with manifest.json; None = bundled symbols
    template_dir: str | None = None
    # None = each template's own metric / threshold from the manifest
    metric: str | None = None
    threshold: float | None = None
    nms_iou: float = 0.3
    enabled: bool = True

    def __post_init__(self):
        if self.metric is not None:
            try:
                MatchMetric.parse(self.metric)
            except ValueError as e:
                raise ConfigError(str(e)) from None
        if not 0.0 <= self.nms_iou < 1.0:
            raise ConfigError("nms_iou must lie in [0, 1)")
