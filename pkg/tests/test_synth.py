import json

import numpy as np
import pytest

from blueprint_reader.calibration import area_m2
from blueprint_reader.errors import InvalidSpec
from blueprint_reader.raster import BoundingBox, RasterImage, load_image
from blueprint_reader.synth import (draw_rectangles, generate_fixture, ground_truth_labels,
                                    load_spec, random_plan_spec, write_fixture)

from oracles import flood_fill_labels, same_partition


def small_spec(**extra):
    spec = {"canvas": [200, 140], "wall_thickness": 4,
            "rooms": [{"rect": [20, 20, 96, 100]}, {"rect": [100, 20, 180, 100]}],
            "doors": [{"rect": [96, 50, 100, 62]}], "mm_per_pixel": 20.0}
    spec.update(extra)
    return spec


def test_deterministic(demo_spec):
    a, ta = generate_fixture(demo_spec, seed=3)
    b, tb = generate_fixture(demo_spec, seed=3)
    assert np.array_equal(a.pixels, b.pixels) and ta == tb


def test_jitter_depends_on_seed(demo_spec):
    spec = dict(demo_spec, text_jitter=True)
    a, _ = generate_fixture(spec, seed=1)
    b, _ = generate_fixture(spec, seed=2)
    assert not np.array_equal(a.pixels, b.pixels)


def test_truth_areas_from_pixel_counts(demo_fixture):
    _, truth = demo_fixture
    mmpp = truth["mm_per_pixel"]
    assert mmpp == pytest.approx(25.8)
    for r in truth["rooms"]:
        b = BoundingBox.from_list(r["rect"])
        assert r["pixel_count"] == b.width * b.height
        assert r["area_exact_m2"] == pytest.approx(b.width * b.height * mmpp ** 2 / 1e6)
        assert r["area_m2"] == round(r["area_exact_m2"], 1)
    assert [r["area_m2"] for r in truth["rooms"]] == [4.0, 6.4, 18.0, 10.1, 12.8, 2.8]


def wall_ring_is_ink(img, truth, doors):
    ink = img.pixels.max(axis=2) < 100
    t = truth["wall_thickness"]
    door_mask = np.zeros(ink.shape, bool)
    for d in doors:
        door_mask[BoundingBox.from_list(d["rect"]).slices()] = True
    for r in truth["rooms"]:
        b = BoundingBox.from_list(r["rect"])
        ring = np.zeros(ink.shape, bool)
        ring[b.y0 - t:b.y1 + t, b.x0 - t:b.x1 + t] = True
        ring[b.slices()] = False
        if not (ink | door_mask)[ring].all():
            return False
    return True


def test_walls_enclose_interiors(demo_fixture, demo_spec):
    img, truth = demo_fixture
    assert wall_ring_is_ink(img, truth, demo_spec["doors"])
    # without text or symbols each interior is exactly one paper component
    spec = small_spec(doors=[])
    for r in spec["rooms"]:
        r["show_area"] = False
    img, truth = generate_fixture(spec)
    paper = img.pixels.min(axis=2) > 200
    ref, _ = flood_fill_labels(paper, connectivity=4)
    assert same_partition(np.where(ground_truth_labels(truth).labels > 0, ref, 0),
                          ground_truth_labels(truth).labels)


def test_ground_truth_labels_partition():
    img, truth = generate_fixture(small_spec())
    lab = ground_truth_labels(truth).labels
    assert set(np.unique(lab)) == {0, 1, 2}
    assert (lab == 1).sum() == 76 * 80 and (lab == 2).sum() == 80 * 80


def test_zero_objects_and_no_text():
    spec = small_spec()
    for r in spec["rooms"]:
        r["show_area"] = False
    img, truth = generate_fixture(spec)
    assert truth["objects"] == [] and truth["tokens"] == []
    assert truth["rooms"][0]["area_m2"] == round(area_m2(76 * 80, 20.0), 1)


def test_area_error_prints_wrong_label():
    spec = small_spec()
    spec["rooms"][0].update(label="R1", area_error=0.5)
    _, truth = generate_fixture(spec)
    r = truth["rooms"][0]
    assert r["area_printed_m2"] == round(r["area_m2"] * 1.5, 1)
    areas = [tk["text"] for tk in truth["tokens"] if tk["room"] == 0 and tk["kind"] == "area"]
    assert areas == [f"{r['area_printed_m2']:.1f} m2"]


def test_vertical_ruler_box():
    spec = small_spec(canvas=[240, 470])
    spec.pop("mm_per_pixel")
    spec["ruler"] = {"origin": [200, 20], "sector_mm": 2000, "sector_px": 100, "sectors": 4,
                     "height": 14, "orientation": "vertical"}
    _, truth = generate_fixture(spec)
    box = BoundingBox.from_list(truth["ruler_box"])
    assert box.height > box.width and truth["mm_per_pixel"] == 20.0


@pytest.mark.parametrize("mutate", [
    lambda s: s.pop("canvas"),
    lambda s: s.update(wall_thickness=1),
    lambda s: s.update(canvas=[4, 4]),
    lambda s: s["rooms"].append({"rect": [150, 60, 190, 130]}),
    lambda s: s["rooms"].append({"rect": [5, 5, 10]}),
    lambda s: s["rooms"].append({"rect": [-5, 0, 10, 10]}),
    lambda s: s["doors"].append({"rect": [90, 50, 100, 60]}),
    lambda s: s.update(objects=[{"template": "nope", "x": 40, "y": 40}]),
    lambda s: s.update(objects=[{"template": "door", "x": 22, "y": 22}]),
    lambda s: s["rooms"][0].update(function="BEDROOMBEDROOMBEDROOM"),
    lambda s: s.update(ruler={"origin": [30, 30], "sector_mm": 1000, "sector_px": 100,
                              "sectors": 1, "height": 14}),
])
def test_invalid_specs(mutate):
    spec = small_spec()
    mutate(spec)
    with pytest.raises(InvalidSpec):
        generate_fixture(spec)


def test_load_spec_rejects_bad_json(tmp_path):
    p = tmp_path / "s.json"
    p.write_text("{not json")
    with pytest.raises(InvalidSpec):
        load_spec(p)


def test_write_fixture(tmp_path, demo_spec):
    png, js = write_fixture(demo_spec, tmp_path, "demo")
    img, truth = generate_fixture(demo_spec)
    assert np.array_equal(load_image(png).pixels, img.pixels)
    assert json.loads(js.read_text()) == json.loads(json.dumps(truth))


@pytest.mark.parametrize("seed", range(12))
def test_random_plans_are_valid(seed):
    spec = random_plan_spec(seed)
    img, truth = generate_fixture(spec)
    assert 2 <= len(truth["rooms"]) <= 10
    assert 2 <= truth["wall_thickness"] <= 8
    for d in spec["doors"]:
        b = BoundingBox.from_list(d["rect"])
        assert 6 <= max(b.width, b.height) <= 14
    assert wall_ring_is_ink(img, truth, spec["doors"])
    rooms = [BoundingBox.from_list(r["rect"]) for r in truth["rooms"]]
    for i in range(len(rooms)):
        for j in range(i):
            assert rooms[i].intersection_area(rooms[j]) == 0


def test_random_plan_without_ruler_or_text():
    spec = random_plan_spec(5, with_ruler=False, with_text=False)
    _, truth = generate_fixture(spec)
    assert truth["ruler_box"] is None and truth["tokens"] == [] and truth["mm_per_pixel"] > 0


def test_draw_rectangles_outline_only():
    img = RasterImage(np.zeros((20, 20, 3), np.uint8))
    out = draw_rectangles(img, [BoundingBox(2, 3, 10, 12)], color=(9, 8, 7), width=1)
    px = out.pixels
    assert tuple(px[3, 2]) == (9, 8, 7) and tuple(px[11, 9]) == (9, 8, 7)
    assert tuple(px[6, 6]) == (0, 0, 0)
    assert (img.pixels == 0).all()
