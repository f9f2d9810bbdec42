import json

import numpy as np
import pytest

from segstudio.contours import parse_structure_set, rasterize_contours
from segstudio.errors import GeometryError, ParseError
from segstudio.geometry import identity_grid

from .oracles import min_edge_distance, random_simple_polygon, ray_cast_inside


def doc(rois, contours, series="series-1"):
    return {"format": "structure-set/v1", "series_ref": series,
            "rois": rois, "contours": contours}


def square(z, lo=-0.25, hi=2.25):
    return [[lo, lo, z], [hi, lo, z], [hi, hi, z], [lo, hi, z]]


# ----------------------------------------------------------------- parse

def test_parse_single_roi_square():
    cs = parse_structure_set(json.dumps(doc(
        [{"number": 1, "name": "liver", "color": [255, 0, 0]}],
        [{"roi_number": 1, "points": square(0.0)}])))
    assert len(cs.rois) == 1
    roi, contours = cs.rois[0]
    assert roi.name == "liver"
    assert roi.color == (255, 0, 0)
    assert len(contours) == 1
    assert len(contours[0].vertices) == 4
    assert cs.series_ref == "series-1"


def test_parse_rejects_two_vertex_contour():
    with pytest.raises(ParseError):
        parse_structure_set(doc(
            [{"number": 1, "name": "liver"}],
            [{"roi_number": 1, "points": [[0, 0, 0], [1, 0, 0]]}]))


def test_parse_rejects_dangling_roi_number():
    with pytest.raises(ParseError):
        parse_structure_set(doc(
            [{"number": 1, "name": "liver"}],
            [{"roi_number": 9, "points": square(0.0)}]))


def test_parse_rejects_missing_name_and_bad_json():
    with pytest.raises(ParseError):
        parse_structure_set(doc([{"number": 1}], []))
    with pytest.raises(ParseError):
        parse_structure_set(b"{not json")


# ------------------------------------------------------------- rasterize

def test_square_contour_covers_nine_centers():
    grid = identity_grid(8, 8, 3)
    cs = parse_structure_set(doc(
        [{"number": 1, "name": "box"}],
        [{"roi_number": 1, "points": square(1.0)}]))
    seg = rasterize_contours(cs, grid)
    mask = seg.rois[0][1]
    assert mask.voxel_count == 9
    got = {(i, j) for j in range(8) for i in range(8) if mask.get(i, j, 1)}
    assert got == {(i, j) for i in range(3) for j in range(3)}


def test_nested_squares_make_a_ring():
    grid = identity_grid(12, 12, 1)
    outer = [[-0.5, -0.5, 0], [8.5, -0.5, 0], [8.5, 8.5, 0], [-0.5, 8.5, 0]]
    inner = [[1.5, 1.5, 0], [6.5, 1.5, 0], [6.5, 6.5, 0], [1.5, 6.5, 0]]
    cs = parse_structure_set(doc(
        [{"number": 1, "name": "ring"}],
        [{"roi_number": 1, "points": outer}, {"roi_number": 1, "points": inner}]))
    mask = rasterize_contours(cs, grid).rois[0][1]
    # Even-odd: 9x9 outer block minus 5x5 hole.
    assert mask.voxel_count == 81 - 25
    assert mask.get(0, 0, 0)
    assert not mask.get(4, 4, 0)


def test_empty_contour_set_rasterizes_to_no_rois():
    seg = rasterize_contours(parse_structure_set(doc([], [])), identity_grid(4, 4, 2))
    assert seg.rois == ()


def test_vertex_order_reversal_is_identical():
    grid = identity_grid(16, 16, 1)
    pts = [[1.2, 1.7, 0], [9.4, 2.1, 0], [11.7, 8.3, 0], [5.0, 12.9, 0], [0.8, 7.7, 0]]
    cs_fwd = parse_structure_set(doc([{"number": 1, "name": "p"}],
                                     [{"roi_number": 1, "points": pts}]))
    cs_rev = parse_structure_set(doc([{"number": 1, "name": "p"}],
                                     [{"roi_number": 1, "points": pts[::-1]}]))
    assert rasterize_contours(cs_fwd, grid).rois[0][1] == rasterize_contours(cs_rev, grid).rois[0][1]


def test_translation_by_one_pitch_shifts_mask():
    grid = identity_grid(16, 16, 1)
    pts = [[2.3, 2.6, 0], [7.8, 3.1, 0], [6.9, 9.2, 0], [3.1, 8.4, 0]]
    shifted = [[x + 1.0, y, z] for x, y, z in pts]
    m1 = rasterize_contours(parse_structure_set(doc(
        [{"number": 1, "name": "p"}], [{"roi_number": 1, "points": pts}])), grid).rois[0][1]
    m2 = rasterize_contours(parse_structure_set(doc(
        [{"number": 1, "name": "p"}], [{"roi_number": 1, "points": shifted}])), grid).rois[0][1]
    assert np.array_equal(np.roll(m1.bits, 1, axis=2), m2.bits)


def test_contour_off_every_slice_plane_rejected():
    grid = identity_grid(8, 8, 3)  # slices at z = 0, 1, 2
    cs = parse_structure_set(doc(
        [{"number": 1, "name": "far"}],
        [{"roi_number": 1, "points": square(5.0)}]))
    with pytest.raises(GeometryError):
        rasterize_contours(cs, grid)


def test_non_coplanar_contour_rejected():
    grid = identity_grid(8, 8, 3)
    pts = [[0, 0, 0.0], [2, 0, 0.0], [2, 2, 0.01], [0, 2, 0.0]]
    cs = parse_structure_set(doc(
        [{"number": 1, "name": "tilted"}], [{"roi_number": 1, "points": pts}]))
    with pytest.raises(GeometryError):
        rasterize_contours(cs, grid)


def test_contour_assigned_to_nearest_slice():
    grid = identity_grid(8, 8, 3)
    cs = parse_structure_set(doc(
        [{"number": 1, "name": "near"}],
        [{"roi_number": 1, "points": square(1.4)}]))  # nearest slice k=1
    seg = rasterize_contours(cs, grid)
    mask = seg.rois[0][1]
    assert mask.bits[1].sum() == 9
    assert mask.bits[0].sum() == 0 and mask.bits[2].sum() == 0


def test_rasterization_matches_ray_cast_oracle(rng):
    grid = identity_grid(64, 64, 1)
    for trial in range(100):
        n = rng.randint(3, 12)
        poly = random_simple_polygon(rng, n, cx=rng.uniform(20, 44), cy=rng.uniform(20, 44),
                                     r_min=2.0, r_max=18.0)
        points = [[x, y, 0.0] for x, y in poly]
        cs = parse_structure_set(doc([{"number": 1, "name": "p"}],
                                     [{"roi_number": 1, "points": points}]))
        mask = rasterize_contours(cs, grid).rois[0][1]
        for j in range(64):
            for i in range(64):
                if min_edge_distance(float(i), float(j), poly) <= 1e-9:
                    continue  # tie region excluded by contract
                assert mask.get(i, j, 0) == ray_cast_inside(float(i), float(j), poly), \
                    f"disagreement at ({i},{j}) on trial {trial}"
