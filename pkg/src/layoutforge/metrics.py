"""Out-of-bound and collision rates over a 3D scene.

Both rates count objects, not pairs: an object offends once no matter how
many partners it collides with.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from fractions import Fraction

from layoutforge.errors import EmptyScene
from layoutforge.geometry import (
    DEFAULT_COLLISION_EPS,
    DEFAULT_OOB_TOLERANCE,
    Box3D,
    Footprint,
    boxes_collide_3d,
    is_out_of_bound,
)
from layoutforge.layout import Scene3D


@dataclass(frozen=True)
class MetricsReport:
    n_objects: int
    out_of_bound_rate: float
    collision_rate: float
    offenders_oob: tuple[int, ...]
    offenders_collision: tuple[int, ...]
    tolerance: float
    epsilon: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["offenders_oob"] = list(self.offenders_oob)
        d["offenders_collision"] = list(self.offenders_collision)
        # exact fractions for reviewers; floats for machines
        d["out_of_bound_fraction"] = str(Fraction(len(self.offenders_oob), self.n_objects))
        d["collision_fraction"] = str(Fraction(len(self.offenders_collision), self.n_objects))
        return d


def out_of_bound_rate(scene: Scene3D, tolerance: float = DEFAULT_OOB_TOLERANCE) -> tuple[float, list[int]]:
    n = len(scene.objects)
    if n == 0:
        raise EmptyScene()
    offenders = [
        i for i, obj in enumerate(scene.objects)
        if is_out_of_bound(Footprint.from_object(obj), scene.room, tolerance)
        or obj.z_lo < -tolerance
        or obj.z_hi > scene.room.max_height + tolerance
    ]
    return len(offenders) / n, offenders


def collision_rate(scene: Scene3D, epsilon: float = DEFAULT_COLLISION_EPS) -> tuple[float, list[int]]:
    n = len(scene.objects)
    if n == 0:
        raise EmptyScene()
    boxes = [Box3D.from_object(o) for o in scene.objects]
    hit = [False] * n
    for i in range(n):
        for j in range(i + 1, n):
            if (not hit[i] or not hit[j]) and boxes_collide_3d(boxes[i], boxes[j], epsilon):
                hit[i] = hit[j] = True
    offenders = [i for i in range(n) if hit[i]]
    return len(offenders) / n, offenders


def compute_metrics(scene: Scene3D, tolerance: float = DEFAULT_OOB_TOLERANCE,
                    epsilon: float = DEFAULT_COLLISION_EPS) -> MetricsReport:
    oob, oob_idx = out_of_bound_rate(scene, tolerance)
    col, col_idx = collision_rate(scene, epsilon)
    return MetricsReport(len(scene.objects), oob, col, tuple(oob_idx), tuple(col_idx), tolerance, epsilon)
