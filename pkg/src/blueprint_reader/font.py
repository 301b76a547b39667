"""Built-in 5x7 bitmap glyph set and a text renderer that records exact
glyph boxes."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .raster import BoundingBox, RasterImage, load_image, save_image

CELL_HEIGHT = 7
SPACE_ADVANCE = 5
LETTER_SPACING = 1
LINE_SPACING = 3

_BITMAPS = {
    "A": ".###.|#...#|#...#|#####|#...#|#...#|#...#",
    "B": "####.|#...#|#...#|####.|#...#|#...#|####.",
    "C": ".###.|#...#|#....|#....|#....|#...#|.###.",
    "D": "####.|#...#|#...#|#...#|#...#|#...#|####.",
    "E": "#####|#....|#....|####.|#....|#....|#####",
    "F": "#####|#....|#....|####.|#....|#....|#....",
    "G": ".###.|#...#|#....|#.###|#...#|#...#|.###.",
    "H": "#...#|#...#|#...#|#####|#...#|#...#|#...#",
    "I": "###|.#.|.#.|.#.|.#.|.#.|###",
    "J": "..###|...#.|...#.|...#.|...#.|#..#.|.##..",
    "K": "#...#|#..#.|#.#..|##...|#.#..|#..#.|#...#",
    "L": "#....|#....|#....|#....|#....|#....|#####",
    "M": "#...#|##.##|#.#.#|#.#.#|#...#|#...#|#...#",
    "N": "#...#|#...#|##..#|#.#.#|#..##|#...#|#...#",
    "O": ".###.|#...#|#...#|#...#|#...#|#...#|.###.",
    "P": "####.|#...#|#...#|####.|#....|#....|#....",
    "Q": ".###.|#...#|#...#|#...#|#.#.#|#..#.|.##.#",
    "R": "####.|#...#|#...#|####.|#.#..|#..#.|#...#",
    "S": ".####|#....|#....|.###.|....#|....#|####.",
    "T": "#####|..#..|..#..|..#..|..#..|..#..|..#..",
    "U": "#...#|#...#|#...#|#...#|#...#|#...#|.###.",
    "V": "#...#|#...#|#...#|#...#|#...#|.#.#.|..#..",
    "W": "#...#|#...#|#...#|#.#.#|#.#.#|#.#.#|.#.#.",
    "X": "#...#|#...#|.#.#.|..#..|.#.#.|#...#|#...#",
    "Y": "#...#|#...#|.#.#.|..#..|..#..|..#..|..#..",
    "Z": "#####|....#|...#.|..#..|.#...|#....|#####",
    "0": ".###.|#...#|#..##|#.#.#|##..#|#...#|.###.",
    "1": ".#.|##.|.#.|.#.|.#.|.#.|###",
    "2": ".###.|#...#|....#|...#.|..#..|.#...|#####",
    "3": "####.|....#|....#|.###.|....#|....#|####.",
    "4": "...#.|..##.|.#.#.|#..#.|#####|...#.|...#.",
    "5": "#####|#....|####.|....#|....#|#...#|.###.",
    "6": ".###.|#....|#....|####.|#...#|#...#|.###.",
    "7": "#####|....#|...#.|..#..|.#...|.#...|.#...",
    "8": ".###.|#...#|#...#|.###.|#...#|#...#|.###.",
    "9": ".###.|#...#|#...#|.####|....#|....#|.###.",
    "m": ".....|.....|##.#.|#.#.#|#.#.#|#.#.#|#.#.#",
    ".": ".|.|.|.|.|.|#",
    ",": ".|.|.|.|.|#|#",
    ":": ".|.|#|.|.|#|.",
    "-": "...|...|...|###|...|...|...",
    "?": ".###.|#...#|....#|...#.|..#..|.....|..#..",
    "²": "##.|..#|.#.|###|...|...|...",
}


@dataclass(frozen=True)
class Glyph:
    char: str
    cell: np.ndarray  # bool, CELL_HEIGHT rows x advance width, True = ink

    @property
    def width(self) -> int:
        return self.cell.shape[1]

    @property
    def ink_box(self) -> BoundingBox:
        ys, xs = np.nonzero(self.cell)
        return BoundingBox(xs.min(), ys.min(), xs.max() + 1, ys.max() + 1)

    @property
    def ink(self) -> np.ndarray:
        b = self.ink_box
        return self.cell[b.y0:b.y1, b.x0:b.x1]


def _parse(char: str, art: str) -> Glyph:
    rows = art.split("|")
    cell = np.array([[c == "#" for c in row] for row in rows], bool)
    assert cell.shape[0] == CELL_HEIGHT, char
    return Glyph(char, cell)


BUILTIN_GLYPHS: dict[str, Glyph] = {c: _parse(c, a) for c, a in _BITMAPS.items()}


def glyph_filename(char: str) -> str:
    return f"{ord(char):04X}.png"


def write_glyph_set(directory, glyphs: dict[str, Glyph] | None = None) -> None:
    """One PNG per glyph cell, named by hex code point, black ink on white."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for ch, g in (glyphs or BUILTIN_GLYPHS).items():
        save_image(RasterImage(np.where(g.cell, 0, 255).astype(np.uint8)), directory / glyph_filename(ch))


def load_glyph_set(directory) -> dict[str, Glyph]:
    glyphs = {}
    for path in sorted(Path(directory).glob("*.png")):
        ch = chr(int(path.stem, 16))
        px = load_image(path).pixels
        if px.ndim == 3:
            px = px.mean(axis=2)
        glyphs[ch] = Glyph(ch, px < 128)
    return glyphs


def text_width(text: str, scale: int = 1, glyphs: dict[str, Glyph] | None = None) -> int:
    glyphs = glyphs or BUILTIN_GLYPHS
    w = 0
    for i, ch in enumerate(text):
        w += SPACE_ADVANCE if ch == " " else glyphs[ch].width
        if i < len(text) - 1:
            w += LETTER_SPACING
    return w * scale


def text_height(scale: int = 1) -> int:
    return CELL_HEIGHT * scale


def render_text(canvas: np.ndarray, text: str, x: int, y: int, scale: int = 1,
                ink=0, glyphs: dict[str, Glyph] | None = None) -> list[tuple[str, BoundingBox]]:
    """Draw ``text`` with its cell's top-left at (x, y), in place.

    Returns the exact ink box of every non-space glyph.
    """
    glyphs = glyphs or BUILTIN_GLYPHS
    placed = []
    cx = x
    for i, ch in enumerate(text):
        if ch == " ":
            cx += SPACE_ADVANCE * scale
        else:
            g = glyphs[ch]
            cell = np.kron(g.cell, np.ones((scale, scale), bool))
            h, w = cell.shape
            region = canvas[y:y + h, cx:cx + w]
            region[cell] = ink
            b = g.ink_box
            placed.append((ch, BoundingBox(cx + b.x0 * scale, y + b.y0 * scale,
                                           cx + b.x1 * scale, y + b.y1 * scale)))
            cx += g.width * scale
        if i < len(text) - 1:
            cx += LETTER_SPACING * scale
    return placed
