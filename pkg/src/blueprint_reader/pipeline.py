"""End-to-end interpretation of one blueprint, batch runs and configuration.

Stages run in order preprocess, calibration, segmentation, objects, text,
report. Stage errors that leave a usable report (no ruler, no rooms, no
recognizer, bad template library) are recorded in ``report.skipped`` and
give exit code 2; unreadable input or invalid configuration are hard
failures (exit code 1).
"""

from __future__ import annotations

import dataclasses
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .calibration import CalibrationConfig, ScaleCalibration, calibrate, compute_room_areas
from .errors import BlueprintError, ConfigError
from .objects import (ObjectsConfig, builtin_template_dir, class_counts, detect_objects,
                      load_template_library)
from .preprocess import PreprocessConfig, binarize, invert, morphology, preprocess, resize
from .raster import BoundingBox, LabelMap, RasterImage, load_image, save_image
from .report import BlueprintReport, ReportConfig, assemble_report
from .segmentation import SegmentationConfig, colorize_rooms, segment
from .synth import draw_rectangles
from .textual import TextualConfig, classify_tokens, group_words, join_area_labels, join_phrases

log = logging.getLogger(__name__)

CONFIG_ENV = "BLUEPRINT_CONFIG"
EXIT_OK, EXIT_FAILURE, EXIT_DEGRADED = 0, 1, 2
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".ppm", ".pgm")
RULER_BLANK_MARGIN = 2

_SECTIONS = {
    "preprocess": PreprocessConfig,
    "segmentation": SegmentationConfig,
    "calibration": CalibrationConfig,
    "objects": ObjectsConfig,
    "textual": TextualConfig,
    "report": ReportConfig,
}


@dataclass
class PipelineConfig:
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    objects: ObjectsConfig = field(default_factory=ObjectsConfig)
    textual: TextualConfig = field(default_factory=TextualConfig)
    report: ReportConfig = field(default_factory=ReportConfig)
    inputs: list = field(default_factory=list)
    out_dir: str = "out"
    # mm per pixel of the input file; skips ruler detection
    scale_override: float | None = None
    seed: int = 0
    parallel_jobs: int = 1
    save_intermediates: bool = False

    def __post_init__(self):
        if self.parallel_jobs < 1:
            raise ConfigError("parallel_jobs must be >= 1")
        if self.scale_override is not None and not self.scale_override > 0:
            raise ConfigError("scale_override must be > 0")

    @classmethod
    def from_dict(cls, data: dict | None) -> "PipelineConfig":
        data = dict(data or {})
        kw = {}
        top = {f.name for f in dataclasses.fields(cls)}
        for key, value in data.items():
            if key not in top:
                raise ConfigError(f"unknown config key {key!r}")
            if key in _SECTIONS:
                kw[key] = _section(_SECTIONS[key], key, value)
            else:
                kw[key] = value
        try:
            return cls(**kw)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def with_overrides(self, **flags) -> "PipelineConfig":
        """Apply command-line values; ``None`` means "not given"."""
        cfg = dataclasses.replace(self)
        for key, value in flags.items():
            if value is None:
                continue
            if key == "metric":
                cfg.objects = dataclasses.replace(cfg.objects, metric=value)
            elif key == "threshold":
                cfg.objects = dataclasses.replace(cfg.objects, threshold=float(value))
            elif key == "jobs":
                cfg.parallel_jobs = int(value)
            elif key == "out":
                cfg.out_dir = str(value)
            elif hasattr(cfg, key):
                setattr(cfg, key, value)
            else:
                raise ConfigError(f"unknown override {key!r}")
        cfg.__post_init__()
        return cfg


def _section(cls, name, value):
    if value is None:
        return cls()
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(value) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {', '.join(sorted(unknown))}")
    try:
        return cls(**value)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"{name}: {e}") from None


def load_config(path=None) -> PipelineConfig:
    """Defaults, overridden by the YAML file at ``path`` (or $BLUEPRINT_CONFIG)."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return PipelineConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError(f"{p}: {e}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    return PipelineConfig.from_dict(data)


def default_config_yaml() -> str:
    return yaml.safe_dump(PipelineConfig().to_dict(), sort_keys=False)


@dataclass
class PipelineResult:
    report: BlueprintReport
    exit_code: int
    outputs: dict = field(default_factory=dict)  # artifact kind -> path


def _reason(exc: Exception) -> str:
    msg = str(exc)
    return f"{type(exc).__name__}: {msg}" if msg else type(exc).__name__


def _blank(gray: RasterImage, box: BoundingBox | None) -> RasterImage:
    if box is None:
        return gray
    px = gray.pixels.copy()
    m = RULER_BLANK_MARGIN
    px[max(box.y0 - m, 0):box.y1 + m, max(box.x0 - m, 0):box.x1 + m] = 255
    return RasterImage(px)


def interpret(img: RasterImage, cfg: PipelineConfig, source: str = "<memory>"):
    """Run every stage on an in-memory image.

    Returns (report, artifacts) where artifacts maps names to images.
    """
    timings, skipped, art = {}, {}, {}
    tick = time.perf_counter()

    def lap(name):
        nonlocal tick
        now = time.perf_counter()
        timings[name] = now - tick
        tick = now

    scale = 1.0
    if cfg.preprocess.target_width is not None:
        scale = img.width / cfg.preprocess.target_width
        img = resize(img, cfg.preprocess.target_width)
    gray = preprocess(img, dataclasses.replace(cfg.preprocess, target_width=None))
    art["gray"] = gray
    if cfg.save_intermediates:
        bits = invert(binarize(gray, cfg.preprocess.binarize_mode))
        art["binary"] = morphology(bits, "open", cfg.preprocess.element).to_raster()
    lap("preprocess")

    cal: ScaleCalibration | None = None
    ccfg = cfg.calibration
    if cfg.scale_override is not None:
        ccfg = dataclasses.replace(ccfg, scale_override=cfg.scale_override * scale)
    try:
        cal = calibrate(img, cfg.textual.build_recognizer(), ccfg)
    except BlueprintError as e:
        skipped["calibration"] = _reason(e)
    work = _blank(gray, cal.ruler_box if cal else None)
    lap("calibration")

    regions, labels = [], None
    try:
        seg = segment(work, cfg.segmentation)
        regions, labels = seg.regions, seg.labels
        if cal is not None:
            regions = compute_room_areas(regions, cal)
        art["rooms"] = _room_overlay(work, labels, cfg.segmentation.color_seed + cfg.seed)
        if cfg.save_intermediates:
            art["walls"] = seg.solid.to_raster()
            art["edges"] = seg.edges.to_raster()
            art["skeleton"] = seg.skeleton.to_raster()
            art["closed"] = seg.closed.to_raster()
            art["labels"] = labels.to_raster()
    except BlueprintError as e:
        skipped["segmentation"] = _reason(e)
        art["rooms"] = RasterImage(np.repeat(work.pixels[:, :, None], 3, axis=2))
    lap("segmentation")

    detections, templates = [], []
    if cfg.objects.enabled:
        try:
            templates = load_template_library(cfg.objects.template_dir or builtin_template_dir())
            usable = [t for t in templates
                      if t.image.height < work.height and t.image.width < work.width]
            detections = detect_objects(work, usable, cfg.objects.metric, cfg.objects.threshold,
                                        cfg.objects.nms_iou)
        except BlueprintError as e:
            skipped["objects"] = _reason(e)
    else:
        skipped["objects"] = "disabled"
    counts = class_counts(detections, templates)
    art["detections"] = draw_rectangles(img, [d.bbox for d in detections])
    lap("objects")

    tokens = []
    if cfg.textual.enabled:
        try:
            rec = cfg.textual.build_recognizer()
            found = rec.recognize(work)
            words = group_words(found, cfg.textual.word_gap) if rec.capability == "character" and found else found
            functions = cfg.textual.functions()
            tokens = classify_tokens(join_phrases(join_area_labels(words), functions), functions)
        except BlueprintError as e:
            skipped["textual"] = _reason(e)
    else:
        skipped["textual"] = "disabled"
    lap("textual")

    report = assemble_report(source, cal, regions, labels, detections, counts, tokens,
                             cfg.report.risk_inputs(), cfg.report.tolerance,
                             timings, skipped)
    lap("report")
    report.timings = dict(timings)
    return report, art


def _room_overlay(gray: RasterImage, labels: LabelMap, seed: int) -> RasterImage:
    colored = colorize_rooms(labels, seed).pixels.copy()
    colored[gray.pixels < 128] = 0
    return RasterImage(colored)


def output_stem(path, taken: set | None = None) -> str:
    """File stem for a report, extended with the suffix when already taken."""
    p = Path(path)
    stem = p.stem
    if taken is not None:
        if stem in taken:
            stem = f"{p.stem}_{p.suffix.lstrip('.')}"
        taken.add(stem)
    return stem


def run_pipeline(cfg: PipelineConfig, path, stem: str | None = None) -> PipelineResult:
    """Interpret the file at ``path`` and write report and overlays to
    ``cfg.out_dir``. I/O errors propagate."""
    img = load_image(path)
    report, art = interpret(img, cfg, source=str(path))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or output_stem(path)
    outputs = {"report": out / f"{stem}.report.json"}
    outputs["report"].write_text(report.to_json(), encoding="utf-8")
    for kind in ("rooms", "detections"):
        outputs[kind] = out / f"{stem}.{kind}.png"
        save_image(art[kind], outputs[kind])
    if cfg.save_intermediates:
        for kind in ("gray", "binary", "walls", "edges", "skeleton", "closed", "labels"):
            if kind in art:
                outputs[kind] = out / f"{stem}.{kind}.png"
                save_image(art[kind], outputs[kind])
    code = EXIT_DEGRADED if report.skipped else EXIT_OK
    return PipelineResult(report, code, {k: str(v) for k, v in outputs.items()})


def _batch_one(args):
    cfg, path, stem = args
    try:
        res = run_pipeline(cfg, path, stem)
        return str(path), res.exit_code, res.outputs.get("report"), None
    except (OSError, BlueprintError, ValueError) as e:
        return str(path), EXIT_FAILURE, None, _reason(e)


def list_inputs(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"not a directory: {d}")
    return sorted(p for p in d.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def run_batch(cfg: PipelineConfig, paths) -> list[tuple]:
    """One pipeline per input; a failing input never stops the others.

    Returns (path, exit_code, report_path, error) per input, in input order.
    """
    taken: set = set()
    jobs = [(cfg, p, output_stem(p, taken)) for p in paths]
    if cfg.parallel_jobs <= 1 or len(jobs) <= 1:
        return [_batch_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=cfg.parallel_jobs) as pool:
        return list(pool.map(_batch_one, jobs))


def batch_exit_code(results) -> int:
    codes = [r[1] for r in results]
    if not codes or EXIT_FAILURE in codes:
        return EXIT_FAILURE
    return EXIT_DEGRADED if EXIT_DEGRADED in codes else EXIT_OK
