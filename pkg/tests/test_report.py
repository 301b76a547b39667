import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blueprint_reader.calibration import ScaleCalibration
from blueprint_reader.errors import ConfigError
from blueprint_reader.objects import Detection, MatchMetric
from blueprint_reader.raster import BoundingBox, LabelMap
from blueprint_reader.report import (BlueprintReport, ReportConfig, RiskInputs, RoomRecord,
                                     Verification, assemble_report, compute_risk_score,
                                     cross_verify_areas, room_at)
from blueprint_reader.segmentation import RoomRegion
from blueprint_reader.textual import TextToken, TokenClass


def two_rooms():
    lab = np.zeros((40, 80), np.int32)
    lab[5:35, 5:38] = 1
    lab[5:35, 42:75] = 2
    return LabelMap(lab)


def tok(text, x, y, cls):
    return TextToken(text, BoundingBox(x, y, x + 10, y + 7)), cls


# --- risk ----------------------------------------------------------------------------------------

GRID = [0.0, 0.25, 0.5, 1.0]


@pytest.mark.parametrize("P", GRID)
@pytest.mark.parametrize("E", [0.0, 1.0, 1e6])
@pytest.mark.parametrize("V", GRID)
@pytest.mark.parametrize("n", [0, 1, 4])
def test_risk_matches_exact_product(P, E, V, n):
    eff = 0.8
    r = compute_risk_score(RiskInputs(P, E, V, eff), n)
    v = Fraction(V) * (1 - Fraction(eff)) if n else Fraction(V)
    assert r["V_effective"] == pytest.approx(float(v), abs=1e-15)
    assert r["Q"] == pytest.approx(float(Fraction(P) * Fraction(E) * v), rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("eff,factor", [(0.701, 0.299), (0.988, 0.012)])
def test_effectiveness_bounds(eff, factor):
    r = compute_risk_score(RiskInputs(1.0, 1.0, 0.6, eff), 1)
    assert r["V_effective"] == pytest.approx(0.6 * factor, rel=1e-12)
    assert compute_risk_score(RiskInputs(1.0, 1.0, 0.6, eff), 0)["V_effective"] == 0.6


@pytest.mark.parametrize("kw", [dict(P=1.5), dict(P=-0.1), dict(E=-1), dict(E=float("inf")),
                                dict(V=2), dict(sprinkler_effectiveness=0.5),
                                dict(sprinkler_effectiveness=0.99)])
def test_risk_input_validation(kw):
    base = dict(P=0.5, E=1.0, V=0.5, sprinkler_effectiveness=0.701)
    base.update(kw)
    with pytest.raises(ConfigError):
        RiskInputs(**base)


def test_report_config():
    assert ReportConfig().risk_inputs() is None
    assert ReportConfig(P=0.1, E=2, V=0.3).risk_inputs() == RiskInputs(0.1, 2.0, 0.3, 0.701)
    with pytest.raises(ConfigError):
        ReportConfig(tolerance=-0.1)
    with pytest.raises(ConfigError):
        ReportConfig(P=3, E=1, V=0.1)


# --- token assignment and verification -----------------------------------------------------------

def test_room_at_snaps_from_wall():
    lab = np.zeros((40, 80), np.int32)
    lab[5:35, 5:38] = 2
    lab[5:35, 43:75] = 1
    lm = LabelMap(lab)
    assert room_at(lm, 10, 10) == 2
    assert room_at(lm, 40.5, 10) == 1  # 3 px from both rooms: smaller label wins
    assert room_at(lm, 39, 10) == 2
    assert room_at(lm, 79, 0) == 1  # diagonal distance sqrt(50)
    assert room_at(lm, 79, 39, snap=4) == 0
    assert room_at(lm, -3, 5) == 0


@pytest.mark.parametrize("computed,printed,status,err", [
    (18.0, 25.0, "Mismatch", 0.28),
    (18.0, 18.0, "Verified", 0.0),
    (18.9, 18.0, "Verified", 0.05),
    (19.0, 18.0, "Mismatch", 1 / 18),
])
def test_cross_verification(computed, printed, status, err):
    rooms = [RoomRecord(1, computed, 100), RoomRecord(2, 3.0, 50)]
    toks = [tok(f"{printed} m2", 10, 10, TokenClass.AREA_SIZE)]
    out = cross_verify_areas(rooms, toks, two_rooms())
    assert out[0].verification.status == status
    assert out[0].verification.error == pytest.approx(err)
    assert out[0].area_ocr_m2 == printed
    assert out[1].verification.status == "Unverified" and out[1].area_ocr_m2 is None


def test_unparsable_or_uncalibrated_stays_unverified():
    toks = [tok("0,003", 10, 10, TokenClass.AREA_SIZE), tok("5 m2", 50, 10, TokenClass.AREA_SIZE)]
    out = cross_verify_areas([RoomRecord(1, 4.0), RoomRecord(2, None)], toks, two_rooms())
    assert [r.verification.status for r in out] == ["Unverified", "Unverified"]
    assert out[1].area_ocr_m2 == 5.0


def test_first_label_in_reading_order_wins():
    toks = [tok("4 m2", 10, 10, TokenClass.AREA_SIZE), tok("9 m2", 10, 20, TokenClass.AREA_SIZE)]
    out = cross_verify_areas([RoomRecord(1, 4.0)], toks, two_rooms())
    assert out[0].verification == Verification("Verified", 0.0)


def test_verification_invariants():
    with pytest.raises(ValueError):
        RoomRecord(1, 4.0, verification=Verification("Verified", 0.0))
    with pytest.raises(ValueError):
        Verification("Maybe")
    with pytest.raises(ValueError):
        Verification("Mismatch", -1)


@settings(max_examples=40, deadline=None)
@given(st.permutations([1, 2, 3]), st.floats(1, 50), st.floats(1, 50))
def test_relabel_invariance(perm, a, b):
    lab = np.zeros((30, 90), np.int32)
    lab[2:28, 2:28], lab[2:28, 32:58], lab[2:28, 62:88] = 1, 2, 3
    areas = {1: a, 2: b, 3: 7.0}
    toks = [tok("7 m2", 40, 10, TokenClass.AREA_SIZE), tok("10 m2", 10, 10, TokenClass.AREA_SIZE),
            tok("KITCHEN", 70, 10, TokenClass.FUNCTION)]

    def run(mapping):
        relab = np.zeros_like(lab)
        for old, new in mapping.items():
            relab[lab == old] = new
        regions = [RoomRegion(mapping[k], 676, BoundingBox(0, 0, 1, 1), area_m2=areas[k]) for k in (1, 2, 3)]
        cal = ScaleCalibration(10.0)
        rep = assemble_report("x", cal, regions, LabelMap(relab), [], {}, toks)
        inv = {v: k for k, v in mapping.items()}
        return {inv[r.label]: (r.verification, r.function, r.area_ocr_m2) for r in rep.rooms}

    assert run({1: 1, 2: 2, 3: 3}) == run(dict(zip((1, 2, 3), perm)))


# --- report --------------------------------------------------------------------------------------

def sample_report():
    regions = [RoomRegion(1, 1000, BoundingBox(5, 5, 38, 35), area_m2=18.04),
               RoomRegion(2, 990, BoundingBox(42, 5, 75, 35), area_m2=10.06)]
    toks = [tok("18 m2", 10, 10, TokenClass.AREA_SIZE), tok("BATH", 50, 10, TokenClass.FUNCTION),
            tok("3B", 50, 20, TokenClass.POSITION)]
    det = Detection("sprinkler", "Sprinkler", BoundingBox(1, 1, 12, 12), 0.97,
                    MatchMetric.NORMALIZED_CORRELATION_COEFFICIENT)
    return assemble_report("plan.png", ScaleCalibration(25.8, sectors_used=4, ruler_box=BoundingBox(0, 0, 5, 5)),
                           regions, two_rooms(), [det], {"Sprinkler": 1, "Door": 0}, toks,
                           RiskInputs(0.5, 2.0, 0.4, 0.701), timings={"total": 0.123456},
                           skipped={})


def test_assembled_fields():
    rep = sample_report()
    assert rep.room_count == 2
    assert rep.total_area_m2 == 28.1
    r1, r2 = rep.rooms
    assert r1.verification.status == "Verified" and r1.area_ocr_m2 == 18.0
    assert (r2.function, r2.position_code) == ("BATH", "3B")
    assert rep.risk["V_effective"] == pytest.approx(0.4 * 0.299)


def test_json_roundtrip():
    rep = sample_report()
    text = rep.to_json()
    again = BlueprintReport.from_json(text)
    assert again.to_json() == text
    d = json.loads(text)
    assert set(d) == {"source", "calibration", "room_count", "total_area_m2", "rooms", "detections",
                      "class_counts", "tokens", "risk", "skipped", "timings"}
    assert "timings" not in rep.to_dict(include_timings=False)
    assert d["rooms"][0]["area_computed_m2"] == 18.0


def test_uncalibrated_report_has_null_areas():
    regions = [RoomRegion(1, 1000, BoundingBox(5, 5, 38, 35), area_m2=None)]
    toks = [tok("18 m2", 10, 10, TokenClass.AREA_SIZE)]
    rep = assemble_report("p", None, regions, two_rooms(), [], {}, toks, skipped={"calibration": "RulerNotFound"})
    assert rep.total_area_m2 is None and rep.rooms[0].area_computed_m2 is None
    assert rep.rooms[0].verification.status == "Unverified"
    assert rep.to_dict()["calibration"] is None


def test_total_is_sum_of_rounded_areas():
    rep = BlueprintReport("p", rooms=[RoomRecord(1, 1.04), RoomRecord(2, 1.04), RoomRecord(3, 1.04)])
    assert rep.total_area_m2 == 3.0
    assert BlueprintReport("p").total_area_m2 is None
