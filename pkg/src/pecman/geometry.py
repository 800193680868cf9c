"""Exact 2D primitives: points, wall segments, discs, intersection and raycasting.

The public functions operate on the small immutable types below. The ``_nb``
helpers are the same formulas compiled with numba and are what the planners,
the sensor and the coordinator call in their inner loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

# tolerance in normalized parametric coordinates
PARAM_EPS = 1e-9
# tolerance for comparing distances, in meters
DIST_EPS = 1e-6


@dataclass(frozen=True, slots=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def __iter__(self):
        yield self.x
        yield self.y

    def dist(self, other: Point2) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True, slots=True)
class WallSegment:
    a: Point2
    b: Point2
    id: int = 0

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError("degenerate wall segment (a == b)")

    @property
    def length(self) -> float:
        return self.a.dist(self.b)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.a.x, self.a.y, self.b.x, self.b.y)

    @classmethod
    def from_coords(cls, x1, y1, x2, y2, id=0) -> WallSegment:
        return cls(Point2(float(x1), float(y1)), Point2(float(x2), float(y2)), int(id))


@dataclass(frozen=True, slots=True)
class Disc:
    center: Point2
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disc radius must be positive")


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def seg_seg_intersect(s1: WallSegment, s2: WallSegment) -> Point2 | None:
    """Intersection point of two closed segments, or None.

    For collinear overlapping segments the overlap endpoint nearest ``s1.a`` is
    returned so the result is deterministic.
    """
    ax, ay, bx, by = s1.as_tuple()
    cx, cy, dx, dy = s2.as_tuple()
    d1x, d1y = bx - ax, by - ay
    d2x, d2y = dx - cx, dy - cy
    len1 = math.hypot(d1x, d1y)
    len2 = math.hypot(d2x, d2y)
    denom = _cross(d1x, d1y, d2x, d2y)
    wx, wy = cx - ax, cy - ay

    if abs(denom) <= PARAM_EPS * len1 * len2:
        # parallel; intersect only if collinear
        scale = max(len1, len2, math.hypot(wx, wy), 1.0)
        if abs(_cross(wx, wy, d1x, d1y)) > PARAM_EPS * len1 * scale:
            return None
        l2 = len1 * len1
        t0 = (wx * d1x + wy * d1y) / l2
        t1 = ((dx - ax) * d1x + (dy - ay) * d1y) / l2
        lo = max(0.0, min(t0, t1))
        hi = min(1.0, max(t0, t1))
        if lo > hi + PARAM_EPS:
            return None
        return Point2(ax + lo * d1x, ay + lo * d1y)

    t = _cross(wx, wy, d2x, d2y) / denom
    u = _cross(wx, wy, d1x, d1y) / denom
    if -PARAM_EPS <= t <= 1 + PARAM_EPS and -PARAM_EPS <= u <= 1 + PARAM_EPS:
        t = min(max(t, 0.0), 1.0)
        return Point2(ax + t * d1x, ay + t * d1y)
    return None


def point_seg_dist(p: Point2, s: WallSegment) -> float:
    return float(_point_seg_dist_nb(p.x, p.y, *s.as_tuple()))


def seg_disc_intersect(s: WallSegment, d: Disc) -> bool:
    """True iff the closed segment comes within ``d.radius`` of the disc center."""
    return point_seg_dist(d.center, s) <= d.radius


def raycast(origin: Point2, angle: float, walls, max_range: float) -> float:
    """Distance along the ray to the nearest wall, clamped to ``max_range``."""
    if not max_range > 0:
        raise ValueError("max_range must be positive")
    dx, dy = math.cos(angle), math.sin(angle)
    best = max_range
    for w in walls:
        t = _ray_seg_nb(origin.x, origin.y, dx, dy, *w.as_tuple())
        if t < best:
            best = t
    return float(best)


def walls_to_array(walls) -> np.ndarray:
    """(n, 4) float array of x1, y1, x2, y2 rows."""
    if len(walls) == 0:
        return np.zeros((0, 4))
    return np.array([w.as_tuple() for w in walls], dtype=np.float64)


# ---------------------------------------------------------------------------
# compiled scalar kernels


@njit(cache=True)
def _point_seg_dist_nb(px, py, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    l2 = dx * dx + dy * dy
    if l2 == 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / l2
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


@njit(cache=True)
def _segs_cross_nb(ax, ay, bx, by, cx, cy, dx, dy):
    d1x = bx - ax
    d1y = by - ay
    d2x = dx - cx
    d2y = dy - cy
    denom = d1x * d2y - d1y * d2x
    if denom == 0.0:
        return False
    wx = cx - ax
    wy = cy - ay
    t = (wx * d2y - wy * d2x) / denom
    u = (wx * d1y - wy * d1x) / denom
    return 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0


@njit(cache=True)
def _seg_seg_dist_nb(ax, ay, bx, by, cx, cy, dx, dy):
    """Minimum distance between two closed segments (0 when they cross)."""
    if _segs_cross_nb(ax, ay, bx, by, cx, cy, dx, dy):
        return 0.0
    d = _point_seg_dist_nb(ax, ay, cx, cy, dx, dy)
    d = min(d, _point_seg_dist_nb(bx, by, cx, cy, dx, dy))
    d = min(d, _point_seg_dist_nb(cx, cy, ax, ay, bx, by))
    d = min(d, _point_seg_dist_nb(dx, dy, ax, ay, bx, by))
    return d


@njit(cache=True)
def _ray_seg_nb(ox, oy, dx, dy, ax, ay, bx, by):
    """Ray parameter (distance, since (dx, dy) is unit) of the hit, or inf."""
    ex = bx - ax
    ey = by - ay
    denom = dx * ey - dy * ex
    wx = ax - ox
    wy = ay - oy
    if denom == 0.0:
        # parallel ray: only a collinear segment can be hit, at its nearest end
        if wx * dy - wy * dx != 0.0:
            return np.inf
        ta = wx * dx + wy * dy
        tb = (bx - ox) * dx + (by - oy) * dy
        if ta < 0.0 and tb < 0.0:
            return np.inf
        if ta < 0.0 or tb < 0.0:
            return 0.0
        return min(ta, tb)
    t = (wx * ey - wy * ex) / denom
    u = (wx * dy - wy * dx) / denom
    if t >= 0.0 and 0.0 <= u <= 1.0:
        return t
    return np.inf


@njit(cache=True)
def _ray_seg_param_nb(ox, oy, dx, dy, ax, ay, bx, by):
    """Like ``_ray_seg_nb`` but also returns the hit parameter along the segment."""
    ex = bx - ax
    ey = by - ay
    denom = dx * ey - dy * ex
    wx = ax - ox
    wy = ay - oy
    if denom == 0.0:
        if wx * dy - wy * dx != 0.0:
            return np.inf, 0.0
        ta = wx * dx + wy * dy
        tb = (bx - ox) * dx + (by - oy) * dy
        if ta < 0.0 and tb < 0.0:
            return np.inf, 0.0
        if ta >= 0.0 and tb >= 0.0:
            if ta <= tb:
                return ta, 0.0
            return tb, 1.0
        # origin lies on the segment
        return 0.0, ta / (ta - tb)
    t = (wx * ey - wy * ex) / denom
    u = (wx * dy - wy * dx) / denom
    if t >= 0.0 and 0.0 <= u <= 1.0:
        return t, u
    return np.inf, 0.0


@njit(cache=True)
def _ray_disc_nb(ox, oy, dx, dy, cx, cy, r):
    fx = ox - cx
    fy = oy - cy
    b = fx * dx + fy * dy
    c = fx * fx + fy * fy - r * r
    if c <= 0.0:
        return 0.0
    disc = b * b - c
    if disc < 0.0 or b > 0.0:
        return np.inf
    return -b - math.sqrt(disc)
