"""Pre-processing: resizing, denoising, grayscale, binarization, inversion,
morphology and CLAHE."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import ndimage

from .errors import ConfigError, ZeroDimension
from .raster import BinaryImage, RasterImage

LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class Element:
    """Odd-sized structuring element, ``shape`` is "square" or "cross"."""

    shape: str = "square"
    size: int = 3

    def __post_init__(self):
        if self.shape not in ("square", "cross"):
            raise ConfigError(f"unknown structuring element {self.shape!r}")
        if self.size < 1 or self.size % 2 == 0:
            raise ConfigError(f"structuring element size must be odd, got {self.size}")

    def array(self) -> np.ndarray:
        k = self.size
        if self.shape == "square":
            return np.ones((k, k), bool)
        el = np.zeros((k, k), bool)
        el[k // 2, :] = True
        el[:, k // 2] = True
        return el


def Square(k: int) -> Element:
    return Element("square", k)


def Cross(k: int) -> Element:
    return Element("cross", k)


@dataclass
class PreprocessConfig:
    target_width: int | None = None
    denoise: tuple = ()  # any of "nlm", "gaussian", applied in order
    nlm_strength: float = 10.0
    nlm_patch: int = 7
    nlm_window: int = 21
    nlm_sigma: float = 0.0
    gaussian_sigma: float = 1.0
    threshold: int | None = None  # None selects Otsu
    morph_element: str = "square"
    morph_size: int = 3
    clahe_clip: float = 2.0
    clahe_tiles: int = 8

    def __post_init__(self):
        self.denoise = tuple(self.denoise)
        self.validate()

    def validate(self) -> None:
        if self.target_width is not None and self.target_width < 1:
            raise ConfigError("target_width must be >= 1")
        for step in self.denoise:
            if step not in ("nlm", "gaussian"):
                raise ConfigError(f"unknown denoise step {step!r}")
        if self.nlm_strength <= 0:
            raise ConfigError("nlm_strength must be > 0")
        if self.nlm_patch % 2 == 0 or self.nlm_window % 2 == 0 or self.nlm_patch < 1:
            raise ConfigError("nlm_patch and nlm_window must be odd")
        if self.gaussian_sigma <= 0:
            raise ConfigError("gaussian_sigma must be > 0")
        if self.threshold is not None and not 0 <= self.threshold <= 255:
            raise ConfigError("fixed threshold must lie in [0, 255]")
        Element(self.morph_element, self.morph_size)
        if self.clahe_clip < 1:
            raise ConfigError("clahe_clip must be >= 1")
        if self.clahe_tiles < 1:
            raise ConfigError("clahe_tiles must be >= 1")

    @property
    def binarize_mode(self) -> Union[str, int]:
        return "otsu" if self.threshold is None else self.threshold

    @property
    def element(self) -> Element:
        return Element(self.morph_element, self.morph_size)


def _gray(img: RasterImage, op: str) -> np.ndarray:
    if img.channels != 1:
        raise ValueError(f"{op} needs a 1-channel image")
    return img.pixels


def _to_u8(arr: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(arr + 0.5), 0, 255).astype(np.uint8)


def _bilinear_axis(n_in: int, n_out: int):
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def resize(img: RasterImage, target_width: int, preserve_aspect: bool = True,
           target_height: int | None = None) -> RasterImage:
    """Bilinear resample to ``target_width`` columns.

    Height follows the aspect ratio when ``preserve_aspect`` is set, else
    ``target_height`` (default: unchanged).
    """
    if target_width < 1:
        raise ZeroDimension("target_width must be >= 1")
    h, w = img.height, img.width
    if preserve_aspect:
        new_h = max(1, int(math.floor(h * target_width / w + 0.5)))
    else:
        new_h = target_height if target_height is not None else h
    if new_h < 1:
        raise ZeroDimension("target height must be >= 1")
    if (new_h, target_width) == (h, w):
        return RasterImage(img.pixels.copy())
    src = img.pixels.astype(np.float64)
    y0, y1, fy = _bilinear_axis(h, new_h)
    x0, x1, fx = _bilinear_axis(w, target_width)
    if src.ndim == 3:
        fy = fy[:, None, None]
        fx = fx[None, :, None]
    else:
        fy = fy[:, None]
        fx = fx[None, :]
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    return RasterImage(_to_u8(top * (1 - fy) + bot * fy))


def to_grayscale(img: RasterImage) -> RasterImage:
    """Luminance conversion; gray input passes through."""
    if img.channels == 1:
        return img
    rgb = img.pixels.astype(np.float64)
    lum = rgb[..., 0] * LUMA[0] + rgb[..., 1] * LUMA[1] + rgb[..., 2] * LUMA[2]
    return RasterImage(_to_u8(lum))


def denoise_nlm(img: RasterImage, cfg: PreprocessConfig | None = None) -> RasterImage:
    """Non-local means over a square search window.

    Patch distance is the mean squared difference over the patch; weights are
    ``exp(-max(d2 - 2 sigma^2, 0) / h^2)``.
    """
    cfg = cfg or PreprocessConfig()
    src = _gray(img, "denoise_nlm").astype(np.float64)
    h2 = float(cfg.nlm_strength) ** 2
    floor = 2.0 * cfg.nlm_sigma ** 2
    pr = cfg.nlm_patch // 2
    wr = cfg.nlm_window // 2
    pad = pr + wr
    padded = np.pad(src, pad, mode="symmetric")
    hh, ww = src.shape
    core = padded[wr:wr + hh + 2 * pr, wr:wr + ww + 2 * pr]
    acc = np.zeros_like(src)
    wsum = np.zeros_like(src)
    for dy in range(-wr, wr + 1):
        for dx in range(-wr, wr + 1):
            shifted = padded[wr + dy:wr + dy + hh + 2 * pr, wr + dx:wr + dx + ww + 2 * pr]
            d2 = ndimage.uniform_filter((core - shifted) ** 2, size=cfg.nlm_patch, mode="constant")
            d2 = d2[pr:pr + hh, pr:pr + ww]
            wgt = np.exp(-np.maximum(d2 - floor, 0.0) / h2)
            acc += wgt * shifted[pr:pr + hh, pr:pr + ww]
            wsum += wgt
    return RasterImage(_to_u8(acc / wsum))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1D kernel of radius ceil(3 sigma), normalised to unit sum."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    radius = max(1, int(math.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_smooth(arr: np.ndarray, sigma: float) -> np.ndarray:
    """Float-valued separable blur with reflect padding."""
    k = gaussian_kernel(sigma)
    out = ndimage.correlate1d(np.asarray(arr, np.float64), k, axis=0, mode="reflect")
    return ndimage.correlate1d(out, k, axis=1, mode="reflect")


def gaussian_blur(img: RasterImage, sigma: float) -> RasterImage:
    return RasterImage(_to_u8(gaussian_smooth(_gray(img, "gaussian_blur"), sigma)))


def otsu_threshold(img: RasterImage) -> int:
    """Threshold t maximising between-class variance of {<= t} vs {> t}.

    Compared in exact integer arithmetic; ties go to the smallest t. A single
    gray level returns that level.
    """
    hist = np.bincount(_gray(img, "otsu_threshold").ravel(), minlength=256)
    levels = np.nonzero(hist)[0]
    if len(levels) == 1:
        return int(levels[0])
    n = int(hist.sum())
    total = int(np.dot(np.arange(256, dtype=np.int64), hist))
    best_t, best_num, best_den = None, 0, 1
    n0 = 0
    s0 = 0
    for t in range(255):
        c = int(hist[t])
        n0 += c
        s0 += t * c
        n1 = n - n0
        if n0 == 0 or n1 == 0:
            continue
        num = (n * s0 - total * n0) ** 2
        den = n0 * n1
        if best_t is None or num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return int(best_t)


def binarize(img: RasterImage, mode: Union[str, int] = "otsu") -> BinaryImage:
    """Two-tone conversion; True (white) where the pixel exceeds the threshold."""
    px = _gray(img, "binarize")
    if isinstance(mode, str):
        if mode.lower() != "otsu":
            raise ValueError(f"unknown binarize mode {mode!r}")
        t = otsu_threshold(img)
    else:
        t = int(mode)
        if not 0 <= t <= 255:
            raise ValueError("fixed threshold must lie in [0, 255]")
    return BinaryImage(px > t)


def invert(img):
    if isinstance(img, BinaryImage):
        return BinaryImage(~img.bits)
    return RasterImage((255 - _gray(img, "invert")).astype(np.uint8))


def morphology(img: BinaryImage, op: str, element: Element = Square(3)) -> BinaryImage:
    """Erode / Dilate / Open / Close. Off-image pixels count as background
    when dilating and foreground when eroding."""
    se = element.array()
    op = op.lower()

    def dilate(b):
        return ndimage.binary_dilation(b, structure=se, border_value=0)

    def erode(b):
        return ndimage.binary_erosion(b, structure=se, border_value=1)

    bits = img.bits
    if op == "erode":
        out = erode(bits)
    elif op == "dilate":
        out = dilate(bits)
    elif op == "open":
        out = dilate(erode(bits))
    elif op == "close":
        out = erode(dilate(bits))
    else:
        raise ValueError(f"unknown morphology op {op!r}")
    return BinaryImage(out)


def _clip_histogram(hist: np.ndarray, limit: int) -> np.ndarray:
    hist = hist.copy()
    excess = int(np.maximum(hist - limit, 0).sum())
    if excess == 0:
        return hist
    hist = np.minimum(hist, limit)
    hist += excess // 256
    rem = excess % 256
    if rem:
        step = max(256 // rem, 1)
        hist[::step][:rem] += 1
    return hist


def _tile_lut(tile: np.ndarray, clip: float) -> np.ndarray:
    hist = np.bincount(tile.ravel(), minlength=256).astype(np.int64)
    if np.count_nonzero(hist) <= 1:
        return np.arange(256, dtype=np.float64)
    n = tile.size
    limit = max(1, int(clip * n / 256.0))
    cdf = np.cumsum(_clip_histogram(hist, limit))
    cdf_min = cdf[np.nonzero(cdf)[0][0]]
    if n - cdf_min == 0:
        return np.arange(256, dtype=np.float64)
    return np.clip((cdf - cdf_min) * 255.0 / (n - cdf_min), 0, 255)


def clahe(img: RasterImage, clip: float = 2.0, tiles=8) -> RasterImage:
    """Contrast-limited adaptive histogram equalisation.

    ``tiles`` is n (n x n grid) or (rows, cols). The image is reflect-padded
    to a multiple of the grid; tile mappings are bilinearly blended between
    tile centres.
    """
    if clip < 1:
        raise ValueError("clip must be >= 1")
    ny, nx = (tiles, tiles) if isinstance(tiles, int) else tuple(tiles)
    src = _gray(img, "clahe")
    h, w = src.shape
    ny, nx = min(ny, h), min(nx, w)
    th, tw = -(-h // ny), -(-w // nx)
    padded = np.pad(src, ((0, th * ny - h), (0, tw * nx - w)), mode="symmetric")
    luts = np.empty((ny, nx, 256))
    for i in range(ny):
        for j in range(nx):
            luts[i, j] = _tile_lut(padded[i * th:(i + 1) * th, j * tw:(j + 1) * tw], clip)

    # position of each pixel in tile-centre coordinates
    gy = (np.arange(h) + 0.5) / th - 0.5
    gx = (np.arange(w) + 0.5) / tw - 0.5
    y0 = np.clip(np.floor(gy).astype(int), 0, ny - 1)
    x0 = np.clip(np.floor(gx).astype(int), 0, nx - 1)
    y1 = np.minimum(y0 + 1, ny - 1)
    x1 = np.minimum(x0 + 1, nx - 1)
    fy = np.clip(gy - y0, 0, 1)[:, None]
    fx = np.clip(gx - x0, 0, 1)[None, :]
    v = src.astype(np.intp)
    yy0, yy1 = y0[:, None], y1[:, None]
    xx0, xx1 = x0[None, :], x1[None, :]
    top = luts[yy0, xx0, v] * (1 - fx) + luts[yy0, xx1, v] * fx
    bot = luts[yy1, xx0, v] * (1 - fx) + luts[yy1, xx1, v] * fx
    return RasterImage(_to_u8(top * (1 - fy) + bot * fy))


def preprocess(img: RasterImage, cfg: PreprocessConfig | None = None) -> RasterImage:
    """Resize (optional), grayscale and the configured denoise steps."""
    cfg = cfg or PreprocessConfig()
    if cfg.target_width is not None:
        img = resize(img, cfg.target_width, preserve_aspect=True)
    gray = to_grayscale(img)
    for step in cfg.denoise:
        gray = denoise_nlm(gray, cfg) if step == "nlm" else gaussian_blur(gray, cfg.gaussian_sigma)
    return gray
