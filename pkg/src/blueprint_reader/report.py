"""Room records, area cross-verification, risk score and the JSON report."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .calibration import ScaleCalibration
from .errors import ConfigError, NotAnArea
from .objects import Detection
from .raster import LabelMap
from .textual import TextToken, TokenClass, parse_area_label

SPRINKLER_EFFECTIVENESS_RANGE = (0.701, 0.988)
DEFAULT_TOLERANCE = 0.05
SNAP_DISTANCE = 10  # px; token centers on a wall go to the nearest room this close


@dataclass(frozen=True)
class Verification:
    status: str  # "Verified", "Mismatch" or "Unverified"
    error: float | None = None

    def __post_init__(self):
        if self.status not in ("Verified", "Mismatch", "Unverified"):
            raise ValueError(f"unknown verification status {self.status!r}")
        if self.error is not None and self.error < 0:
            raise ValueError("relative error must be >= 0")

    def to_dict(self):
        return {"status": self.status, "error": None if self.error is None else round(self.error, 4)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["status"], d.get("error"))


UNVERIFIED = Verification("Unverified")


@dataclass(frozen=True)
class RoomRecord:
    label: int
    area_computed_m2: float | None
    pixel_count: int = 0
    area_ocr_m2: float | None = None
    function: str | None = None
    position_code: str | None = None
    verification: Verification = UNVERIFIED
    bbox: list | None = None

    def __post_init__(self):
        if self.verification.status != "Unverified" and self.area_ocr_m2 is None:
            raise ValueError("Verified/Mismatch needs an OCR area")

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "pixel_count": self.pixel_count,
            "bbox": self.bbox,
            "area_computed_m2": _r1(self.area_computed_m2),
            "area_ocr_m2": _r1(self.area_ocr_m2),
            "function": self.function,
            "position_code": self.position_code,
            "verification": self.verification.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoomRecord":
        return cls(d["label"], d["area_computed_m2"], d.get("pixel_count", 0), d.get("area_ocr_m2"),
                   d.get("function"), d.get("position_code"),
                   Verification.from_dict(d["verification"]), d.get("bbox"))


def _r1(v):
    return None if v is None else round(float(v), 1)


@dataclass(frozen=True)
class RiskInputs:
    P: float
    E: float
    V: float
    sprinkler_effectiveness: float = SPRINKLER_EFFECTIVENESS_RANGE[0]

    def __post_init__(self):
        if not 0.0 <= self.P <= 1.0:
            raise ConfigError("P must lie in [0, 1]")
        if not (self.E >= 0 and math.isfinite(self.E)):
            raise ConfigError("E must be a finite value >= 0")
        if not 0.0 <= self.V <= 1.0:
            raise ConfigError("V must lie in [0, 1]")
        lo, hi = SPRINKLER_EFFECTIVENESS_RANGE
        if not lo <= self.sprinkler_effectiveness <= hi:
            raise ConfigError(f"sprinkler_effectiveness must lie in [{lo}, {hi}]")


def compute_risk_score(inputs: RiskInputs, sprinklers_detected: int) -> dict:
    """Q = P * E * V_effective, V discounted by the sprinkler effectiveness
    when any sprinkler was detected."""
    v_eff = inputs.V * (1.0 - inputs.sprinkler_effectiveness) if sprinklers_detected > 0 else inputs.V
    return {"Q": inputs.P * inputs.E * v_eff, "V_effective": v_eff}


def room_at(labels: LabelMap, x: float, y: float, snap: int = SNAP_DISTANCE) -> int:
    """Label containing the pixel at (x, y), or the nearest label within
    ``snap`` pixels when (x, y) is on a wall; 0 if none."""
    lab = labels.labels
    h, w = lab.shape
    xi, yi = int(math.floor(x)), int(math.floor(y))
    if not (0 <= xi < w and 0 <= yi < h):
        return 0
    if lab[yi, xi]:
        return int(lab[yi, xi])
    y0, y1 = max(yi - snap, 0), min(yi + snap + 1, h)
    x0, x1 = max(xi - snap, 0), min(xi + snap + 1, w)
    win = lab[y0:y1, x0:x1]
    ys, xs = np.nonzero(win)
    if len(ys) == 0:
        return 0
    d2 = (ys + y0 - yi) ** 2 + (xs + x0 - xi) ** 2
    # nearest first, then smallest label so ties do not depend on scan order
    order = np.lexsort((win[ys, xs], d2))
    k = order[0]
    return int(win[ys[k], xs[k]]) if d2[k] <= snap * snap else 0


def assign_tokens(tokens, labels: LabelMap, cls: TokenClass) -> dict[int, list[TextToken]]:
    out: dict[int, list[TextToken]] = {}
    for tok, c in tokens:
        if c != cls:
            continue
        room = room_at(labels, *tok.bbox.center)
        if room:
            out.setdefault(room, []).append(tok)
    return out


def cross_verify_areas(rooms: list[RoomRecord], tokens, labels: LabelMap,
                       tolerance: float = DEFAULT_TOLERANCE) -> list[RoomRecord]:
    """Match each room's computed area against the area label printed in it.

    ``tokens`` are (TextToken, TokenClass) pairs. With several area labels in
    one room the first in reading order is used.
    """
    if tolerance < 0:
        raise ConfigError("tolerance must be >= 0")
    by_room = assign_tokens(tokens, labels, TokenClass.AREA_SIZE)
    out = []
    for r in rooms:
        toks = by_room.get(r.label)
        ocr = None
        if toks:
            try:
                ocr = parse_area_label(toks[0].text)
            except NotAnArea:
                ocr = None
        if ocr is None or r.area_computed_m2 is None:
            out.append(RoomRecord(r.label, r.area_computed_m2, r.pixel_count, ocr, r.function,
                                  r.position_code, UNVERIFIED, r.bbox))
            continue
        if ocr == 0:
            err = 0.0 if r.area_computed_m2 == 0 else math.inf
        else:
            err = abs(r.area_computed_m2 - ocr) / ocr
        status = "Verified" if err <= tolerance else "Mismatch"
        out.append(RoomRecord(r.label, r.area_computed_m2, r.pixel_count, ocr, r.function,
                              r.position_code, Verification(status, err), r.bbox))
    return out


def attach_labels(rooms: list[RoomRecord], tokens, labels: LabelMap) -> list[RoomRecord]:
    """Function words and position codes by the same center rule as areas."""
    funcs = assign_tokens(tokens, labels, TokenClass.FUNCTION)
    codes = assign_tokens(tokens, labels, TokenClass.POSITION)
    out = []
    for r in rooms:
        f = funcs.get(r.label)
        c = codes.get(r.label)
        out.append(RoomRecord(r.label, r.area_computed_m2, r.pixel_count, r.area_ocr_m2,
                              f[0].text.upper() if f else r.function,
                              c[0].text if c else r.position_code, r.verification, r.bbox))
    return out


@dataclass
class BlueprintReport:
    source: str
    calibration: ScaleCalibration | None = None
    rooms: list = field(default_factory=list)
    detections: list = field(default_factory=list)
    class_counts: dict = field(default_factory=dict)
    tokens: list = field(default_factory=list)  # (TextToken, TokenClass)
    risk: dict | None = None
    timings: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)  # stage -> reason

    @property
    def room_count(self) -> int:
        return len(self.rooms)

    @property
    def total_area_m2(self) -> float | None:
        """Sum of the rounded room areas (null when uncalibrated)."""
        areas = [r.area_computed_m2 for r in self.rooms]
        if not areas or any(a is None for a in areas):
            return None
        return round(sum(round(a, 1) for a in areas), 1)

    def to_dict(self, include_timings: bool = True) -> dict:
        d = {
            "source": self.source,
            "calibration": self.calibration.to_dict() if self.calibration else None,
            "room_count": self.room_count,
            "total_area_m2": self.total_area_m2,
            "rooms": [r.to_dict() for r in self.rooms],
            "detections": [x.to_dict() for x in self.detections],
            "class_counts": dict(sorted(self.class_counts.items())),
            "tokens": [dict(t.to_dict(), **{"class": c.value}) for t, c in self.tokens],
            "risk": None if self.risk is None else {k: round(v, 6) for k, v in self.risk.items()},
            "skipped": dict(sorted(self.skipped.items())),
        }
        if include_timings:
            d["timings"] = {k: round(v, 4) for k, v in self.timings.items()}
        return d

    def to_json(self, include_timings: bool = True) -> str:
        return json.dumps(self.to_dict(include_timings), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "BlueprintReport":
        cal = d.get("calibration")
        return cls(
            source=d["source"],
            calibration=ScaleCalibration.from_dict(cal) if cal else None,
            rooms=[RoomRecord.from_dict(r) for r in d.get("rooms", [])],
            detections=[Detection.from_dict(x) for x in d.get("detections", [])],
            class_counts=dict(d.get("class_counts", {})),
            tokens=[(TextToken.from_dict(t), TokenClass(t["class"])) for t in d.get("tokens", [])],
            risk=d.get("risk"),
            timings=dict(d.get("timings", {})),
            skipped=dict(d.get("skipped", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> "BlueprintReport":
        return cls.from_dict(json.loads(text))


def assemble_report(source, calibration, regions, labels, detections, counts, tokens,
                    risk_inputs: RiskInputs | None = None, tolerance: float = DEFAULT_TOLERANCE,
                    timings=None, skipped=None) -> BlueprintReport:
    """Join every stage's output into one report.

    ``regions`` are RoomRegions (area_m2 filled when calibrated); a missing
    calibration leaves every area null and every room Unverified.
    """
    rooms = [RoomRecord(r.label, r.area_m2 if calibration else None, r.pixel_count,
                        bbox=r.bbox.as_list()) for r in regions]
    if labels is not None:
        rooms = attach_labels(rooms, tokens, labels)
        rooms = cross_verify_areas(rooms, tokens, labels, tolerance)
    counts = dict(counts)
    for d in detections:
        counts.setdefault(d.cls, 0)
    risk = None
    if risk_inputs is not None:
        risk = compute_risk_score(risk_inputs, counts.get("Sprinkler", 0))
    return BlueprintReport(str(source), calibration, rooms, list(detections), counts,
                           list(tokens), risk, dict(timings or {}), dict(skipped or {}))


@dataclass
class ReportConfig:
    # relative area difference accepted as Verified
    tolerance: float = DEFAULT_TOLERANCE
    # risk inputs; the score is omitted unless P, E and V are all given
    P: float | None = None
    E: float | None = None
    V: float | None = None
    sprinkler_effectiveness: float = SPRINKLER_EFFECTIVENESS_RANGE[0]

    def __post_init__(self):
        if self.tolerance < 0:
            raise ConfigError("tolerance must be >= 0")
        self.risk_inputs()  # validate ranges early

    def risk_inputs(self) -> RiskInputs | None:
        if self.P is None or self.E is None or self.V is None:
            return None
        return RiskInputs(float(self.P), float(self.E), float(self.V), float(self.sprinkler_effectiveness))
