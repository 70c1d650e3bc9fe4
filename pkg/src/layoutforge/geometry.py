"""Oriented-bounding-box kernel for footprints and 3D boxes.

Yaw convention: at yaw 0 the length runs along +x and the width along +y;
positive yaw rotates counterclockwise. Orientation degrees from the layout
DSL are converted with :func:`math.radians` and used as-is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from layoutforge.layout import BevObject, Room, SceneObject3D

Point = tuple[float, float]

DEFAULT_COLLISION_EPS = 1.0
DEFAULT_OOB_TOLERANCE = 0.5


@dataclass(frozen=True)
class Footprint:
    center: Point
    half_extents: Point
    yaw: float

    def __post_init__(self):
        if not (self.half_extents[0] > 0 and self.half_extents[1] > 0):
            raise ValueError(f"footprint half extents must be positive, got {self.half_extents}")

    @classmethod
    def from_object(cls, obj: BevObject) -> "Footprint":
        return cls((obj.center_x, obj.center_y), (obj.length / 2, obj.width / 2),
                   math.radians(obj.orientation))

    def axes(self) -> tuple[Point, Point]:
        """Unit vectors of the local length and width directions."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return (c, s), (-s, c)

    def to_local(self, p: Point) -> Point:
        (ux, uy), (vx, vy) = self.axes()
        dx, dy = p[0] - self.center[0], p[1] - self.center[1]
        return dx * ux + dy * uy, dx * vx + dy * vy


@dataclass(frozen=True)
class Box3D:
    footprint: Footprint
    z_interval: tuple[float, float]

    def __post_init__(self):
        if not self.z_interval[0] < self.z_interval[1]:
            raise ValueError(f"empty z interval {self.z_interval}")

    @classmethod
    def from_object(cls, obj: SceneObject3D) -> "Box3D":
        return cls(Footprint.from_object(obj), (obj.z_lo, obj.z_hi))


def footprint_corners(f: Footprint) -> list[Point]:
    """Corners in counterclockwise order, starting at local (+l/2, +w/2)."""
    (ux, uy), (vx, vy) = f.axes()
    hl, hw = f.half_extents
    cx, cy = f.center
    return [
        (cx + sl * hl * ux + sw * hw * vx, cy + sl * hl * uy + sw * hw * vy)
        for sl, sw in ((1, 1), (-1, 1), (-1, -1), (1, -1))
    ]


def _project(f: Footprint, half: Point, axis: Point) -> tuple[float, float]:
    (ux, uy), (vx, vy) = f.axes()
    c = f.center[0] * axis[0] + f.center[1] * axis[1]
    r = half[0] * abs(ux * axis[0] + uy * axis[1]) + half[1] * abs(vx * axis[0] + vy * axis[1])
    return c - r, c + r


def footprints_overlap(a: Footprint, b: Footprint, epsilon: float = DEFAULT_COLLISION_EPS) -> bool:
    """Separating-axis test on the two boxes shrunk by ``epsilon / 2`` per side.

    Touching (zero-measure contact) is not an overlap.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    shrink = epsilon / 2
    ha = (max(a.half_extents[0] - shrink, 0.0), max(a.half_extents[1] - shrink, 0.0))
    hb = (max(b.half_extents[0] - shrink, 0.0), max(b.half_extents[1] - shrink, 0.0))
    for axis in (*a.axes(), *b.axes()):
        lo_a, hi_a = _project(a, ha, axis)
        lo_b, hi_b = _project(b, hb, axis)
        if hi_a <= lo_b or hi_b <= lo_a:
            return False
    return True


def _point_segment_distance(p: Point, s0: Point, s1: Point) -> float:
    dx, dy = s1[0] - s0[0], s1[1] - s0[1]
    denom = dx * dx + dy * dy
    t = 0.0 if denom == 0 else max(0.0, min(1.0, ((p[0] - s0[0]) * dx + (p[1] - s0[1]) * dy) / denom))
    return math.hypot(p[0] - (s0[0] + t * dx), p[1] - (s0[1] + t * dy))


def _cross(o: Point, a: Point, b: Point) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _segments_intersect(p0: Point, p1: Point, q0: Point, q1: Point) -> bool:
    d1, d2 = _cross(q0, q1, p0), _cross(q0, q1, p1)
    d3, d4 = _cross(p0, p1, q0), _cross(p0, p1, q1)
    return d1 * d2 < 0 and d3 * d4 < 0


def segment_distance(p0: Point, p1: Point, q0: Point, q1: Point) -> float:
    if _segments_intersect(p0, p1, q0, q1):
        return 0.0
    return min(
        _point_segment_distance(p0, q0, q1),
        _point_segment_distance(p1, q0, q1),
        _point_segment_distance(q0, p0, p1),
        _point_segment_distance(q1, p0, p1),
    )


def contains_point(f: Footprint, p: Point) -> bool:
    u, v = f.to_local(p)
    return abs(u) <= f.half_extents[0] and abs(v) <= f.half_extents[1]


def min_footprint_distance(a: Footprint, b: Footprint) -> float:
    """Euclidean distance between the two filled rectangles (0 when they meet)."""
    ca, cb = footprint_corners(a), footprint_corners(b)
    if contains_point(a, cb[0]) or contains_point(b, ca[0]):
        return 0.0
    best = math.inf
    for i in range(4):
        for j in range(4):
            d = segment_distance(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4])
            if d < best:
                best = d
                if best == 0.0:
                    return 0.0
    return best


def is_out_of_bound(f: Footprint, room: Room, tolerance: float = DEFAULT_OOB_TOLERANCE) -> bool:
    if tolerance < 0:
        raise ValueError("tolerance must be non-negative")
    lo_x, hi_x = -tolerance, room.max_length + tolerance
    lo_y, hi_y = -tolerance, room.max_width + tolerance
    return any(not (lo_x <= x <= hi_x and lo_y <= y <= hi_y) for x, y in footprint_corners(f))


def z_overlap(a: tuple[float, float], b: tuple[float, float]) -> float:
    return min(a[1], b[1]) - max(a[0], b[0])


def boxes_collide_3d(a: Box3D, b: Box3D, epsilon: float = DEFAULT_COLLISION_EPS) -> bool:
    return footprints_overlap(a.footprint, b.footprint, epsilon) and z_overlap(a.z_interval, b.z_interval) > epsilon
