import random
from fractions import Fraction

import pytest

from conftest import FIXTURES, obj3d
from layoutforge.errors import EmptyScene
from layoutforge.layout import Room, Scene3D, parse_scene_file
from layoutforge.metrics import collision_rate, compute_metrics, out_of_bound_rate

ROOM = Room(100, 100, 160)


def test_three_obj_fixture():
    _, scene = parse_scene_file((FIXTURES / "three_obj.scene").read_text())
    rate, offenders = collision_rate(scene)
    assert rate == 2 / 3
    assert Fraction(len(offenders), len(scene.objects)) == Fraction(2, 3)
    assert offenders == [0, 1]


def test_four_obj_fixture():
    _, scene = parse_scene_file((FIXTURES / "four_obj.scene").read_text())
    rate, offenders = out_of_bound_rate(scene)
    assert rate == 0.25
    assert offenders == [0]


def test_all_interior():
    scene = Scene3D(ROOM, (obj3d("a", 10, 10, 10, 50, 50, 5),))
    assert out_of_bound_rate(scene) == (0.0, [])


def test_z_over_ceiling():
    scene = Scene3D(ROOM, (obj3d("tall", 10, 10, 20, 50, 50, 151),))  # z_hi = 161
    assert out_of_bound_rate(scene, 0.5) == (1.0, [0])


def test_stacked_lamp_not_colliding():
    scene = Scene3D(ROOM, (obj3d("table", 40, 40, 30, 50, 50, 15), obj3d("lamp", 10, 10, 20, 50, 50, 40)))
    assert collision_rate(scene) == (0.0, [])


def test_chain_counts_objects():
    scene = Scene3D(ROOM, (obj3d("a", 20, 10, 10, 20, 50, 5), obj3d("b", 20, 10, 10, 35, 50, 5),
                           obj3d("c", 20, 10, 10, 50, 50, 5)))
    assert collision_rate(scene) == (1.0, [0, 1, 2])


def test_empty_scene():
    with pytest.raises(EmptyScene):
        collision_rate(Scene3D(ROOM, ()))
    with pytest.raises(EmptyScene):
        out_of_bound_rate(Scene3D(ROOM, ()))


def test_rates_are_multiples_and_permutation_invariant():
    rng = random.Random(5)
    for _ in range(50):
        objs = [obj3d("o", rng.uniform(5, 40), rng.uniform(5, 40), rng.uniform(5, 60), rng.uniform(-10, 110),
                      rng.uniform(-10, 110), rng.uniform(0, 150), rng.uniform(0, 360)) for _ in range(rng.randint(1, 8))]
        scene = Scene3D(ROOM, tuple(objs))
        m = compute_metrics(scene)
        n = len(objs)
        assert m.collision_rate * n == len(m.offenders_collision)
        assert m.out_of_bound_rate * n == len(m.offenders_oob)
        perm = list(range(n))
        rng.shuffle(perm)
        m2 = compute_metrics(Scene3D(ROOM, tuple(objs[i] for i in perm)))
        assert m2.collision_rate == m.collision_rate
        assert sorted(perm[i] for i in m2.offenders_collision) == list(m.offenders_collision)
        assert sorted(perm[i] for i in m2.offenders_oob) == list(m.offenders_oob)


def test_report_dict():
    _, scene = parse_scene_file((FIXTURES / "three_obj.scene").read_text())
    d = compute_metrics(scene).to_dict()
    assert d["collision_fraction"] == "2/3"
    assert d["n_objects"] == 3
