import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blueprint_reader.calibration import (CalibrationConfig, ScaleCalibration, area_m2, calibrate,
                                          compute_room_areas, detect_ruler_region,
                                          parse_length_mm, read_scale_factor)
from blueprint_reader.errors import (ConfigError, InconsistentSectors, NoLegibleSectors,
                                     RulerNotFound)
from blueprint_reader.font import render_text, text_width
from blueprint_reader.preprocess import resize
from blueprint_reader.raster import BoundingBox, RasterImage
from blueprint_reader.segmentation import RoomRegion
from blueprint_reader.synth import generate_fixture


def ruler_image(ticks, labels, height=14, color=(60, 110, 220)):
    """Band with 1-px black ticks at ``ticks`` and one label per sector."""
    width = ticks[-1] + 4
    band = np.empty((height, width, 3), np.uint8)
    band[:] = color
    for x in ticks:
        band[:, x] = 0
    for (a, b), text in zip(zip(ticks, ticks[1:]), labels):
        if text:
            render_text(band, text, a + (b - a - text_width(text)) // 2 + 1, (height - 7) // 2, ink=(0, 0, 0))
    return RasterImage(band)


def plan_with_ruler(orientation="horizontal", origin=(30, 200)):
    spec = {
        "canvas": [300, 240] if orientation == "horizontal" else [260, 460],
        "wall_thickness": 4,
        "rooms": [{"rect": [60, 30, 200, 150]}],
        "ruler": {"origin": list(origin), "sector_mm": 1000, "sector_px": 50, "sectors": 4,
                  "orientation": orientation},
    }
    return generate_fixture(spec)


def test_horizontal_ruler_box_within_three_pixels():
    img, truth = plan_with_ruler()
    box = detect_ruler_region(img)
    exp = truth["ruler_box"]
    assert all(abs(a - b) <= 3 for a, b in zip(box.as_list(), exp))


def test_vertical_ruler_detected_and_read():
    img, truth = plan_with_ruler("vertical", origin=(230, 30))
    box = detect_ruler_region(img)
    assert all(abs(a - b) <= 3 for a, b in zip(box.as_list(), truth["ruler_box"]))
    cal = calibrate(img)
    assert cal.mm_per_pixel == pytest.approx(20.0)
    assert cal.sectors_used == 4


def test_no_ruler_raises():
    img, _ = generate_fixture({"canvas": [200, 200], "rooms": [{"rect": [40, 40, 150, 150]}]})
    with pytest.raises(RulerNotFound):
        detect_ruler_region(img)
    with pytest.raises(RulerNotFound):
        calibrate(img)


def test_ruler_far_from_margin_ignored():
    img, _ = plan_with_ruler(origin=(30, 160))
    # band now sits in the middle third of a taller canvas
    big = np.full((600, 300, 3), 255, np.uint8)
    big[200:440] = img.pixels
    with pytest.raises(RulerNotFound):
        detect_ruler_region(RasterImage(big))


def test_single_sector_arithmetic():
    cal = read_scale_factor(ruler_image([3, 103], ["1000"]))
    assert cal.mm_per_pixel == pytest.approx(10.0)
    assert cal.sectors_used == 1 and cal.source == "RulerDetected"


def test_four_sectors_near_100px():
    ticks = [3, 103, 204, 303, 404]
    cal = read_scale_factor(ruler_image(ticks, ["1000"] * 4))
    spans = np.diff(ticks)
    assert cal.mm_per_pixel == pytest.approx(np.mean(1000 / spans))
    assert cal.mm_per_pixel == pytest.approx(10.0, rel=0.01)
    assert cal.sectors_used == 4


def test_outlier_sector_rejected():
    cal = read_scale_factor(ruler_image([3, 103, 203, 303, 403], ["1000", "1000", "1000", "5000"]))
    assert cal.sectors_used == 3
    assert cal.mm_per_pixel == pytest.approx(10.0)


def test_sector_order_does_not_matter():
    a = read_scale_factor(ruler_image([3, 103, 203, 303], ["1000", "1100", "900"]))
    b = read_scale_factor(ruler_image([3, 103, 203, 303], ["900", "1000", "1100"]))
    assert a.mm_per_pixel == pytest.approx(b.mm_per_pixel)


def test_unlabelled_ruler():
    with pytest.raises(NoLegibleSectors):
        read_scale_factor(ruler_image([3, 103, 203], [None, None]))


def test_inconsistent_sectors():
    # two sectors, 10 and 20 mm/px: both sit 33% from their median of 15
    with pytest.raises(InconsistentSectors):
        read_scale_factor(ruler_image([3, 103, 203], ["1000", "2000"]))


def test_units():
    assert parse_length_mm("1000") == 1000
    assert parse_length_mm("2.5m") == 2500
    assert parse_length_mm("50CM") == 500
    assert parse_length_mm("1,5M") == 1500
    assert parse_length_mm("ABC") is None


def test_override_skips_detection():
    img = RasterImage(np.full((20, 20), 255, np.uint8))
    cal = calibrate(img, cfg=CalibrationConfig(scale_override=12.5))
    assert (cal.mm_per_pixel, cal.source) == (12.5, "Override")


@pytest.mark.parametrize("bad", [0.0, -1.0, float("inf"), float("nan")])
def test_invalid_scale(bad):
    with pytest.raises((ValueError, ConfigError)):
        ScaleCalibration(bad)
    with pytest.raises(ConfigError):
        CalibrationConfig(scale_override=bad)


def test_area_examples():
    assert area_m2(0, 25.8) == 0.0
    regions = [RoomRegion(1, 6010, BoundingBox(0, 0, 1, 1)), RoomRegion(2, 0, BoundingBox(0, 0, 1, 1))]
    out = compute_room_areas(regions, ScaleCalibration(25.8))
    assert [r.area_m2 for r in out] == [4.0, 0.0]
    assert out[0].pixel_count == 6010 and out[0].bbox == regions[0].bbox


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 10**6), st.floats(0.1, 100))
def test_area_monotone(a, b, mmpp):
    lo, hi = sorted((a, b))
    assert area_m2(lo, mmpp) <= area_m2(hi, mmpp)


def test_demo_scale_and_areas(demo_fixture):
    img, truth = demo_fixture
    cal = calibrate(img)
    assert cal.mm_per_pixel == pytest.approx(25.8, rel=0.02)
    assert cal.ruler_box.as_list() == truth["ruler_box"]


def test_resizing_halves_scale(demo_fixture):
    img, _ = demo_fixture
    a = calibrate(img).mm_per_pixel
    b = calibrate(resize(img, img.width * 2)).mm_per_pixel
    assert b / a == pytest.approx(0.5, rel=0.01)


def test_calibration_serialization():
    c = ScaleCalibration(25.8, "RulerDetected", 4, BoundingBox(1, 2, 3, 4))
    assert ScaleCalibration.from_dict(c.to_dict()) == c
