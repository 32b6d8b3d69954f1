"""Planar geometry helpers shared by the world, sensor, and planner modules.

Conventions: world coordinates in meters, angles in radians with 0 along +x
and counterclockwise positive, headings wrapped to (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TAU = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    r = math.remainder(theta, TAU)
    if r <= -math.pi:
        r += TAU
    return r


@dataclass
class Pose:
    """Position in world meters plus body heading (radians, wrapped)."""

    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        self.heading = wrap_angle(self.heading)

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Disc:
    cx: float
    cy: float
    radius: float


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle, min corner strictly below max corner."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax))


def dist(ax: float, ay: float, bx: float, by: float) -> float:
    return math.hypot(bx - ax, by - ay)


def bearing_to(ox: float, oy: float, tx: float, ty: float) -> float:
    """World-frame angle of the ray from (ox, oy) to (tx, ty)."""
    return math.atan2(ty - oy, tx - ox)


def point_segment_distance(px: float, py: float,
                           ax: float, ay: float,
                           bx: float, by: float) -> float:
    """Distance from point p to segment ab."""
    abx, aby = bx - ax, by - ay
    apx, apy = px - ax, py - ay
    denom = abx * abx + aby * aby
    if denom <= 0.0:
        return math.hypot(apx, apy)
    t = (apx * abx + apy * aby) / denom
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * abx), py - (ay + t * aby))


def closest_point_on_rect(px: float, py: float, rect: Rect) -> tuple[float, float]:
    return (min(max(px, rect.xmin), rect.xmax),
            min(max(py, rect.ymin), rect.ymax))


def dist_point_rect(px: float, py: float, rect: Rect) -> float:
    qx, qy = closest_point_on_rect(px, py, rect)
    return math.hypot(px - qx, py - qy)


def ray_disc_intersection(ox: float, oy: float, dx: float, dy: float,
                          disc: Disc) -> float:
    """Nearest nonnegative ray parameter hitting the disc boundary, or inf.

    The ray direction (dx, dy) must be unit length. An origin inside the
    disc reports the exit distance.
    """
    mx, my = ox - disc.cx, oy - disc.cy
    b = mx * dx + my * dy
    c = mx * mx + my * my - disc.radius * disc.radius
    discr = b * b - c
    if discr < 0.0:
        return math.inf
    root = math.sqrt(discr)
    t = -b - root
    if t < 0.0:
        t = -b + root
    return t if t >= 0.0 else math.inf


def ray_rect_intersection(ox: float, oy: float, dx: float, dy: float,
                          rect: Rect) -> float:
    """Nearest nonnegative ray parameter hitting the rect (slab method), or inf."""
    tmin, tmax = 0.0, math.inf
    for o, d, lo, hi in ((ox, dx, rect.xmin, rect.xmax),
                         (oy, dy, rect.ymin, rect.ymax)):
        if abs(d) < 1e-15:
            if o < lo or o > hi:
                return math.inf
        else:
            t1 = (lo - o) / d
            t2 = (hi - o) / d
            if t1 > t2:
                t1, t2 = t2, t1
            tmin = max(tmin, t1)
            tmax = min(tmax, t2)
            if tmin > tmax:
                return math.inf
    return tmin


def segment_rect_intersects(ax: float, ay: float, bx: float, by: float,
                            rect: Rect) -> bool:
    """True when segment ab touches the rectangle (either endpoint inside counts)."""
    if rect.contains(ax, ay) or rect.contains(bx, by):
        return True
    dx, dy = bx - ax, by - ay
    length = math.hypot(dx, dy)
    if length <= 0.0:
        return False
    t = ray_rect_intersection(ax, ay, dx / length, dy / length, rect)
    return t <= length


def polyline_length(points: list[tuple[float, float]]) -> float:
    total = 0.0
    for (ax, ay), (bx, by) in zip(points, points[1:]):
        total += math.hypot(bx - ax, by - ay)
    return total


def point_along_polyline(points: list[tuple[float, float]], s: float) -> tuple[float, float]:
    """Point at arc length s from the start; clamps to the endpoints."""
    if s <= 0.0 or len(points) == 1:
        return points[0]
    remaining = s
    for (ax, ay), (bx, by) in zip(points, points[1:]):
        seg = math.hypot(bx - ax, by - ay)
        if remaining <= seg and seg > 0.0:
            f = remaining / seg
            return (ax + f * (bx - ax), ay + f * (by - ay))
        remaining -= seg
    return points[-1]
