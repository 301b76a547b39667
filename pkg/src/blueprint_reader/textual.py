"""Text recognition: per-character OCR, word grouping, token classes and
area-label parsing."""

from __future__ import annotations

import enum
import io
import re
import shlex
import shutil
import subprocess
from dataclasses import dataclass
from pathlib import Path
from statistics import median
from typing import Iterable, Protocol

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import NotAnArea, RecognizerUnavailable
from .font import BUILTIN_GLYPHS, Glyph, load_glyph_set
from .preprocess import otsu_threshold
from .raster import BinaryImage, BoundingBox, RasterImage

DEFAULT_FUNCTIONS = (
    "KITCHEN", "BATH", "BEDROOM", "DINING", "DINING AREA", "LIVING", "HALL", "WC",
    "CLOSET", "ENTRANCE", "STAIRS",
)

_AREA_RE = re.compile(r"^\s*(\d+(?:[.,]\d+)?)\s*(?:m²|m2|m\?|sqm)\s*$", re.IGNORECASE)
_NUMBER_RE = re.compile(r"^\d+(?:[.,]\d+)?$")
_UNIT_RE = re.compile(r"^(?:m²|m2|m\?|sqm)$", re.IGNORECASE)
_POSITION_RE = re.compile(r"^(?=.*\d)[A-Za-z0-9]+$")


@dataclass(frozen=True)
class TextToken:
    text: str
    bbox: BoundingBox
    confidence: float = 100.0

    def __post_init__(self):
        if not self.text:
            raise ValueError("token text must be non-empty")

    def to_dict(self) -> dict:
        return {"text": self.text, "bbox": self.bbox.as_list(), "confidence": round(self.confidence, 3)}

    @classmethod
    def from_dict(cls, d: dict) -> "TextToken":
        return cls(d["text"], BoundingBox.from_list(d["bbox"]), float(d["confidence"]))


class TokenClass(enum.Enum):
    POSITION = "Position"
    FUNCTION = "Function"
    AREA_SIZE = "AreaSize"
    UNCLASSIFIED = "Unclassified"


class TextRecognizer(Protocol):
    capability: str  # "character", "word" or "both"

    def recognize(self, img: RasterImage) -> list[TextToken]:
        ...


def ink_mask(img: RasterImage) -> np.ndarray:
    """Dark pixels under an Otsu split; a flat image has ink only if it is dark."""
    px = img.pixels if img.channels == 1 else img.pixels.mean(axis=2).astype(np.uint8)
    levels = np.unique(px)
    if len(levels) == 1:
        return np.full(px.shape, levels[0] < 128)
    return px <= otsu_threshold(RasterImage(px))


def _ncc(a: np.ndarray, b: np.ndarray) -> float:
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    da, db = a - a.mean(), b - b.mean()
    na, nb = np.sqrt((da * da).sum()), np.sqrt((db * db).sum())
    if na == 0 or nb == 0:
        return 1.0 if (na == 0 and nb == 0 and a.flat[0] == b.flat[0]) else 0.0
    return float((da * db).sum() / (na * nb))


def _nearest_resize(a: np.ndarray, shape) -> np.ndarray:
    ys = (np.arange(shape[0]) * a.shape[0]) // shape[0]
    xs = (np.arange(shape[1]) * a.shape[1]) // shape[1]
    return a[ys][:, xs]


class GlyphRecognizer:
    """Template-matching recognizer over a fixed-font glyph set.

    Ink components are grouped into glyph candidates (components stacked
    within ``stack_gap`` rows, e.g. the dot of '?', form one glyph) and
    compared against every glyph at integer scales 1..``max_scale``.
    Confidence is 100 x the best normalized correlation score.
    """

    capability = "character"

    def __init__(self, glyphs: dict[str, Glyph] | None = None, max_scale: int = 3,
                 min_confidence: float = 70.0, stack_gap: int = 2):
        self.glyphs = glyphs or BUILTIN_GLYPHS
        self.max_scale = max_scale
        self.min_confidence = min_confidence
        self.stack_gap = stack_gap
        self._templates = []
        for ch, g in self.glyphs.items():
            for s in range(1, max_scale + 1):
                self._templates.append((ch, s, np.kron(g.ink, np.ones((s, s), bool))))
        self._max_h = max(t.shape[0] for _, _, t in self._templates) + 1
        self._max_w = max(t.shape[1] for _, _, t in self._templates) + 1

    @classmethod
    def from_directory(cls, directory, **kw) -> "GlyphRecognizer":
        return cls(load_glyph_set(directory), **kw)

    def _candidates(self, lab: np.ndarray) -> list[tuple[BoundingBox, list[int]]]:
        cands = []
        for idx, sl in enumerate(ndimage.find_objects(lab), start=1):
            if sl is None:
                continue
            ys, xs = sl
            if ys.stop - ys.start <= self._max_h and xs.stop - xs.start <= self._max_w:
                cands.append((BoundingBox(xs.start, ys.start, xs.stop, ys.stop), [idx]))
        cands.sort(key=lambda c: (c[0].x0, c[0].y0))
        merged = True
        while merged:
            merged = False
            for i in range(len(cands)):
                for j in range(i + 1, len(cands)):
                    a, b = cands[i][0], cands[j][0]
                    if b.x0 >= a.x1:
                        break
                    vgap = max(a.y0, b.y0) - min(a.y1, b.y1)
                    if a.x0 < b.x1 and vgap <= self.stack_gap:
                        u = a.union(b)
                        if u.height <= self._max_h and u.width <= self._max_w:
                            cands[i] = (u, cands[i][1] + cands[j][1])
                            del cands[j]
                            merged = True
                            break
                if merged:
                    break
        return cands

    def classify_glyph(self, patch: np.ndarray) -> tuple[str, float] | None:
        best = None
        for tolerant in (False, True):
            for ch, s, tpl in self._templates:
                dh = abs(tpl.shape[0] - patch.shape[0])
                dw = abs(tpl.shape[1] - patch.shape[1])
                if tolerant:
                    if (dh == 0 and dw == 0) or dh > 1 or dw > 1 or s == 1:
                        continue
                    score = _ncc(_nearest_resize(patch, tpl.shape), tpl)
                elif dh or dw:
                    continue
                else:
                    score = _ncc(patch, tpl)
                if best is None or score > best[1] + 1e-12:
                    best = (ch, score)
            if best is not None and 100.0 * best[1] >= self.min_confidence:
                return best[0], 100.0 * best[1]
        return None

    def recognize(self, img: RasterImage) -> list[TextToken]:
        lab, _ = ndimage.label(ink_mask(img), structure=np.ones((3, 3), bool))
        tokens = []
        for box, ids in self._candidates(lab):
            ys, xs = box.slices()
            hit = self.classify_glyph(np.isin(lab[ys, xs], ids))
            if hit is not None:
                tokens.append(TextToken(hit[0], box, hit[1]))
        return reading_order(tokens)


class SubprocessRecognizer:
    """External engine behind a child process.

    The PNG goes to stdin; each stdout line is ``text<TAB>x0<TAB>y0<TAB>x1
    <TAB>y1<TAB>confidence``. One request runs per child process.
    """

    def __init__(self, command: list[str], capability: str = "word", timeout: float = 60.0):
        self.command = list(command)
        self.capability = capability
        self.timeout = timeout

    def recognize(self, img: RasterImage) -> list[TextToken]:
        if not self.command or shutil.which(self.command[0]) is None:
            raise RecognizerUnavailable(f"recognizer command not found: {self.command[:1]}")
        buf = io.BytesIO()
        Image.fromarray(np.array(img.pixels)).save(buf, format="PNG")
        try:
            proc = subprocess.run(self.command, input=buf.getvalue(), capture_output=True,
                                  timeout=self.timeout, check=False)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise RecognizerUnavailable(str(exc)) from exc
        if proc.returncode != 0:
            raise RecognizerUnavailable(
                f"recognizer exited with {proc.returncode}: {proc.stderr.decode(errors='replace').strip()}")
        return reading_order(parse_recognizer_output(proc.stdout.decode("utf-8"), img.width, img.height))


def parse_recognizer_output(text: str, width: int, height: int) -> list[TextToken]:
    tokens = []
    for line in text.splitlines():
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 6:
            raise ValueError(f"malformed recognizer line: {line!r}")
        label = parts[0]
        x0, y0, x1, y1 = (int(float(v)) for v in parts[1:5])
        conf = float(parts[5])
        if not label or x1 <= x0 or y1 <= y0:
            continue  # malformed rows are engine noise
        box = BoundingBox(max(x0, 0), max(y0, 0), min(x1, width), min(y1, height))
        tokens.append(TextToken(label, box, min(max(conf, 0.0), 100.0)))
    return tokens


def _vertical_overlap(a: BoundingBox, b: BoundingBox) -> float:
    ov = min(a.y1, b.y1) - max(a.y0, b.y0)
    return max(ov, 0) / min(a.height, b.height)


def _lines(tokens: list[TextToken]) -> list[list[TextToken]]:
    """Cluster tokens whose boxes overlap vertically by >= 50%."""
    toks = sorted(tokens, key=lambda t: (t.bbox.x0, t.bbox.y0, t.bbox.x1, t.bbox.y1, t.text))
    parent = list(range(len(toks)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(toks)):
        for j in range(i + 1, len(toks)):
            if _vertical_overlap(toks[i].bbox, toks[j].bbox) >= 0.5:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[TextToken]] = {}
    for i, t in enumerate(toks):
        groups.setdefault(find(i), []).append(t)
    lines = list(groups.values())
    lines.sort(key=lambda ln: (min(t.bbox.y0 for t in ln), min(t.bbox.x0 for t in ln)))
    return lines


def reading_order(tokens: Iterable[TextToken]) -> list[TextToken]:
    """Top-to-bottom by line, left-to-right within a line."""
    return [t for line in _lines(list(tokens)) for t in line]


def recognize_characters(img: RasterImage, recognizer: TextRecognizer | None = None) -> list[TextToken]:
    recognizer = recognizer or GlyphRecognizer()
    if recognizer.capability not in ("character", "both"):
        raise RecognizerUnavailable("recognizer does not report single characters")
    if img.channels != 1:
        raise ValueError("recognize_characters needs a 1-channel image")
    return recognizer.recognize(img)


def group_words(chars: list[TextToken], gap: float | None = None) -> list[TextToken]:
    """Join same-line characters separated by at most ``gap`` background
    columns (default: median glyph width of the line)."""
    words = []
    for line in _lines(chars):
        limit = gap if gap is not None else median(t.bbox.width for t in line)
        current = [line[0]]
        for t in line[1:]:
            if t.bbox.x0 - current[-1].bbox.x1 <= limit:
                current.append(t)
            else:
                words.append(current)
                current = [t]
        words.append(current)
    out = []
    for members in words:
        box = members[0].bbox
        for m in members[1:]:
            box = box.union(m.bbox)
        out.append(TextToken("".join(m.text for m in members), box, min(m.confidence for m in members)))
    return reading_order(out)


def join_area_labels(words: list[TextToken]) -> list[TextToken]:
    """Merge a number followed on its line by a unit word ("25", "m?") into
    one token ("25 m?")."""
    lines = _lines(words)
    out = []
    for line in lines:
        i = 0
        while i < len(line):
            t = line[i]
            if i + 1 < len(line) and _NUMBER_RE.match(t.text) and _UNIT_RE.match(line[i + 1].text):
                u = line[i + 1]
                if u.bbox.x0 - t.bbox.x1 <= 2 * max(t.bbox.height, u.bbox.height):
                    out.append(TextToken(f"{t.text} {u.text}", t.bbox.union(u.bbox),
                                         min(t.confidence, u.confidence)))
                    i += 2
                    continue
            out.append(t)
            i += 1
    return out


def join_phrases(words: list[TextToken], dictionary=DEFAULT_FUNCTIONS) -> list[TextToken]:
    """Merge runs of same-line words that spell a multi-word dictionary entry
    ("DINING", "AREA" -> "DINING AREA"); the longest entry wins."""
    phrases = {d.upper() for d in dictionary if " " in d}
    if not phrases:
        return list(words)
    longest = max(len(p.split()) for p in phrases)
    out = []
    for line in _lines(words):
        i = 0
        while i < len(line):
            for n in range(min(longest, len(line) - i), 1, -1):
                run = line[i:i + n]
                gaps_ok = all(b.bbox.x0 - a.bbox.x1 <= 2 * max(a.bbox.height, b.bbox.height)
                              for a, b in zip(run, run[1:]))
                if gaps_ok and " ".join(t.text.upper() for t in run) in phrases:
                    box = run[0].bbox
                    for t in run[1:]:
                        box = box.union(t.bbox)
                    out.append(TextToken(" ".join(t.text for t in run), box, min(t.confidence for t in run)))
                    i += n
                    break
            else:
                out.append(line[i])
                i += 1
    return out


def parse_area_label(text: str) -> float:
    """Square metres from "<number> m²", "m2" or a garbled "m?"."""
    m = _AREA_RE.match(text)
    if not m:
        raise NotAnArea(f"not an area label: {text!r}")
    return float(m.group(1).replace(",", "."))


def classify_token(text: str, dictionary=DEFAULT_FUNCTIONS) -> TokenClass:
    upper = text.strip().upper()
    if upper in {d.upper() for d in dictionary}:
        return TokenClass.FUNCTION
    try:
        parse_area_label(text)
        return TokenClass.AREA_SIZE
    except NotAnArea:
        pass
    stripped = text.strip()
    if _POSITION_RE.match(stripped) and not _UNIT_RE.match(stripped):
        return TokenClass.POSITION
    return TokenClass.UNCLASSIFIED


def classify_tokens(words: list[TextToken], dictionary=DEFAULT_FUNCTIONS):
    dictionary = tuple(dictionary)
    return [(w, classify_token(w.text, dictionary)) for w in words]


def load_dictionary(path) -> tuple[str, ...]:
    """Function words, one per line; '#' starts a comment."""
    words = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            words.append(line.upper())
    return tuple(words)


@dataclass
class TextualConfig:
    # directory of <hex codepoint>.png glyph cells; None = built-in font
    glyph_dir: str | None = None
    # function words file, one per line; None = DEFAULT_FUNCTIONS
    dictionary: str | None = None
    # external OCR command line speaking the TSV protocol; None = glyph recognizer
    recognizer_command: str | None = None
    min_confidence: float = 70.0
    # None = median glyph width of each line
    word_gap: float | None = None
    enabled: bool = True

    def build_recognizer(self):
        if self.recognizer_command:
            return SubprocessRecognizer(shlex.split(self.recognizer_command))
        kw = {"min_confidence": self.min_confidence}
        if self.glyph_dir:
            return GlyphRecognizer.from_directory(self.glyph_dir, **kw)
        return GlyphRecognizer(**kw)

    def functions(self) -> tuple[str, ...]:
        return load_dictionary(self.dictionary) if self.dictionary else DEFAULT_FUNCTIONS
