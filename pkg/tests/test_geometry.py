import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from layoutforge.geometry import (
    Box3D,
    Footprint,
    boxes_collide_3d,
    footprint_corners,
    footprints_overlap,
    is_out_of_bound,
    min_footprint_distance,
)
from layoutforge.layout import Room


def fp(cx, cy, l, w, deg=0.0) -> Footprint:
    return Footprint((cx, cy), (l / 2, w / 2), math.radians(deg))


def random_box(rng):
    return (rng.uniform(0, 256), rng.uniform(0, 256), rng.uniform(2, 80), rng.uniform(2, 80), rng.uniform(0, 360))


def test_corners_identity():
    got = {tuple(np.round(p, 12)) for p in footprint_corners(fp(0, 0, 2, 2))}
    assert got == {(1, 1), (-1, 1), (-1, -1), (1, -1)}


def test_corners_square_symmetry():
    got = {tuple(np.round(p, 9) + 0.0) for p in footprint_corners(fp(0, 0, 2, 2, 90))}
    assert got == {(1, 1), (-1, 1), (-1, -1), (1, -1)}


def test_corners_match_matrix_oracle():
    np.testing.assert_allclose(footprint_corners(fp(10, 10, 4, 2, 45)), oracles.corners(10, 10, 4, 2, 45),
                               atol=1e-9, rtol=0)


def test_yaw_zero_convention():
    # length along +x, width along +y; +90 turns length onto +y
    xs = [p[0] for p in footprint_corners(fp(0, 0, 10, 2))]
    assert max(xs) == pytest.approx(5)
    ys = [p[1] for p in footprint_corners(fp(0, 0, 10, 2, 90))]
    assert max(ys) == pytest.approx(5)


def test_overlap_examples():
    assert not footprints_overlap(fp(0, 0, 1, 1), fp(3, 0, 1, 1), 0)
    assert footprints_overlap(fp(5, 5, 4, 4), fp(5, 5, 4, 4))
    # touching edges are not an overlap even at eps 0
    assert not footprints_overlap(fp(0, 0, 2, 2), fp(2, 0, 2, 2), 0)


def test_rotated_square_against_dense_grid_oracle():
    a, b = (0, 0, 10, 10, 0), (10.5, 0, 10, 10, 45)
    xs = np.linspace(-6, 18, 200)
    gx, gy = np.meshgrid(xs, np.linspace(-9, 9, 200))
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    both = (oracles.inside_depth(pts, a) > 0) & (oracles.inside_depth(pts, b) > 0)
    assert footprints_overlap(fp(*a), fp(*b), 0) == bool(both.any())


def test_min_distance_examples():
    assert min_footprint_distance(fp(0, 0, 1, 1), fp(3, 0, 1, 1)) == pytest.approx(2.0)
    assert min_footprint_distance(fp(0, 0, 4, 4), fp(1, 1, 4, 4)) == 0.0
    assert min_footprint_distance(fp(0, 0, 10, 10), fp(0, 0, 2, 2, 30)) == 0.0  # containment


def test_min_distance_matches_boundary_oracle():
    rng = random.Random(7)
    checked = 0
    while checked < 60:
        a, b = random_box(rng), random_box(rng)
        want = oracles.sampled_min_distance(a, b)
        got = min_footprint_distance(fp(*a), fp(*b))
        assert got == pytest.approx(want, abs=0.01), (a, b)
        checked += 1


def test_out_of_bound_examples():
    room = Room(256, 171, 160)
    assert is_out_of_bound(fp(0, 0, 10, 10), room, 0)
    assert not is_out_of_bound(fp(128, 85, 10, 10), room, 0)
    c = oracles.corners(220, 85, 100, 10, 30)
    expected = bool(((c[:, 0] < 0) | (c[:, 0] > 256) | (c[:, 1] < 0) | (c[:, 1] > 171)).any())
    assert is_out_of_bound(fp(220, 85, 100, 10, 30), room, 0) == expected


def test_out_of_bound_tolerance():
    room = Room(100, 100, 100)
    assert not is_out_of_bound(fp(4.8, 50, 10, 10), room, 0.5)  # corner at -0.2
    assert is_out_of_bound(fp(4.4, 50, 10, 10), room, 0.5)  # corner at -0.6


def test_boxes_3d():
    bed = Box3D(fp(50, 50, 88, 40), (0, 36))
    lamp = Box3D(fp(50, 50, 88, 40), (100, 140))
    assert not boxes_collide_3d(bed, lamp)
    assert boxes_collide_3d(bed, bed)
    table = Box3D(fp(50, 50, 60, 40), (0, 40))
    chair = Box3D(fp(50, 50, 20, 20), (0, 45))
    assert boxes_collide_3d(chair, table, 0)


def test_degenerate_rejected():
    with pytest.raises(ValueError):
        fp(0, 0, 0, 1)
    with pytest.raises(ValueError):
        Box3D(fp(0, 0, 1, 1), (3, 3))


boxes = st.tuples(st.floats(0, 256), st.floats(0, 256), st.floats(2, 80), st.floats(2, 80), st.floats(0, 360))


@settings(max_examples=300, deadline=None)
@given(boxes, boxes, st.floats(0, 3))
def test_symmetry(a, b, eps):
    assert footprints_overlap(fp(*a), fp(*b), eps) == footprints_overlap(fp(*b), fp(*a), eps)


@settings(max_examples=300, deadline=None)
@given(boxes, boxes, st.floats(0, 3), st.floats(0, 3))
def test_epsilon_monotone(a, b, e1, e2):
    lo, hi = sorted((e1, e2))
    if footprints_overlap(fp(*a), fp(*b), hi):
        assert footprints_overlap(fp(*a), fp(*b), lo)


def _moved(box, theta, shift):
    x, y, l, w, deg = box
    r = oracles.rotation(theta)
    nx, ny = r @ np.array([x, y]) + shift
    return float(nx), float(ny), l, w, deg + theta


def test_rotation_invariance():
    rng = random.Random(11)
    for _ in range(500):
        a, b = random_box(rng), random_box(rng)
        theta, shift = rng.uniform(0, 360), np.array([rng.uniform(-50, 50), rng.uniform(-50, 50)])
        a2, b2 = _moved(a, theta, shift), _moved(b, theta, shift)
        assert footprints_overlap(fp(*a), fp(*b)) == footprints_overlap(fp(*a2), fp(*b2))
        assert min_footprint_distance(fp(*a), fp(*b)) == pytest.approx(
            min_footprint_distance(fp(*a2), fp(*b2)), abs=1e-6)


def test_sat_agrees_with_sampling_oracle_with_epsilon():
    rng = random.Random(3)
    for _ in range(300):
        a, b = random_box(rng), random_box(rng)
        want, estimate = oracles.sampled_overlap(a, b, epsilon=1.0)
        if estimate >= 0.5:
            assert footprints_overlap(fp(*a), fp(*b), 1.0) == want
