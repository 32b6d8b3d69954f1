"""Environmental perception: deterministic depth completion, semantic and
detection oracles standing in for the segmentation/detection networks,
distance-from-detection, and vision/ultrasonic fusion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Disc, Pose, Rect, wrap_angle
from .sensors import CameraConfig, DepthImage, UltrasonicArray, ray_ranges
from .world import (N_CLASSES, SemanticClass, TrafficLight, World,
                    dynamic_positions, light_phase)

DETECTABLE_CLASSES = frozenset({
    "person", "car", "bicycle", "bus", "motorbike", "traffic_sign", "traffic_light",
})

UNKNOWN_CLASS = "unknown"


class AllInvalidDepth(ValueError):
    """No valid pixel exists; caller falls back to ultrasonic-only estimates."""


@dataclass(frozen=True)
class PerceptionConfig:
    """Noise knobs replacing the learned models' error behavior."""

    mislabel_e: float = 0.05          # per-cell semantic corruption rate
    miss_rate: float = 0.05           # detection miss rate unless overridden
    miss_rates: dict = field(default_factory=dict)  # per-class overrides
    detection_max_m: float = 6.0
    bearing_tol_rad: float = math.radians(10.0)
    bbox_inner_fraction: float = 0.5
    min_valid_fraction: float = 0.3
    window_half_extent_m: float = 5.0

    def miss_rate_for(self, clazz: str) -> float:
        return float(self.miss_rates.get(clazz, self.miss_rate))


@dataclass
class SemanticObservation:
    """Square window of observed terrain classes centered on the agent.

    ``classes[iy, ix]`` is world grid cell ``(offset[0] + ix, offset[1] + iy)``;
    cells outside the world raster observe OFF_MAP.
    """

    classes: np.ndarray          # uint8 (n, n)
    offset: tuple[int, int]      # world cell index of window cell (0, 0)
    resolution: float
    origin: tuple[float, float]  # world origin of the underlying grid

    @property
    def size(self) -> int:
        return int(self.classes.shape[0])

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        wx = self.offset[0] + ix
        wy = self.offset[1] + iy
        return (self.origin[0] + (wx + 0.5) * self.resolution,
                self.origin[1] + (wy + 0.5) * self.resolution)


@dataclass(frozen=True)
class Detection:
    clazz: str
    col_min: int
    col_max: int
    bearing: float               # body frame, center-column ray
    confidence: float = 1.0
    phase: str | None = None     # observed phase, traffic lights only


@dataclass(frozen=True)
class ObstacleEstimate:
    bearing: float               # body frame
    distance: float
    clazz: str
    from_vision: bool
    from_ultrasonic: bool

    @property
    def sources(self) -> frozenset[str]:
        s = set()
        if self.from_vision:
            s.add("vision")
        if self.from_ultrasonic:
            s.add("ultrasonic")
        return frozenset(s)


def complete_depth(image: DepthImage) -> DepthImage:
    """Iterative safety-biased fill of invalid pixels.

    Each pass simultaneously assigns every invalid pixel with at least one
    valid 8-neighbor the minimum of its valid neighbors; passes repeat until
    the image is dense. Originally-valid pixels are returned bit-identical.
    """
    if not image.valid.any():
        raise AllInvalidDepth("depth image has no valid pixel")
    values = image.values.copy()
    valid = image.valid.copy()
    h, w = values.shape
    while not valid.all():
        padded = np.full((h + 2, w + 2), np.inf)
        padded[1:-1, 1:-1] = np.where(valid, values, np.inf)
        neighbor_min = np.full((h, w), np.inf)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                neighbor_min = np.minimum(
                    neighbor_min, padded[1 + dy:h + 1 + dy, 1 + dx:w + 1 + dx])
        grow = ~valid & np.isfinite(neighbor_min)
        values[grow] = neighbor_min[grow]
        valid |= grow
    return DepthImage(values=values, valid=valid, camera=image.camera)


def observe_semantics(world: World, pose: Pose, config: PerceptionConfig,
                      rng: np.random.Generator | None = None,
                      half_extent_m: float | None = None) -> SemanticObservation:
    """Ground-truth window around the agent with i.i.d. per-cell mislabels.

    A corrupted cell takes a uniformly random *different* class. With
    mislabel_e == 0 no rng draw is consumed.
    """
    grid = world.grid
    half = config.window_half_extent_m if half_extent_m is None else half_extent_m
    n = int(round(half / grid.resolution))
    cx, cy = grid.cell_index(pose.x, pose.y)
    size = 2 * n + 1
    window = np.full((size, size), SemanticClass.OFF_MAP, dtype=np.uint8)

    x0, y0 = cx - n, cy - n
    sx0, sy0 = max(0, x0), max(0, y0)
    sx1, sy1 = min(grid.width, x0 + size), min(grid.height, y0 + size)
    if sx0 < sx1 and sy0 < sy1:
        window[sy0 - y0:sy1 - y0, sx0 - x0:sx1 - x0] = grid.cells[sy0:sy1, sx0:sx1]

    e = config.mislabel_e
    if e > 0.0:
        if rng is None:
            raise ValueError("semantic mislabel noise requires an rng")
        flip = rng.random(window.shape) < e
        shift = rng.integers(1, N_CLASSES, size=window.shape, dtype=np.uint8)
        window = np.where(flip, (window + shift) % N_CLASSES, window).astype(np.uint8)

    return SemanticObservation(classes=window, offset=(x0, y0),
                               resolution=grid.resolution, origin=grid.origin)


def _entity_views(world: World, t: float):
    """(id, clazz, center, shape) for all static obstacles and dynamic agents."""
    views = []
    for o in world.obstacles:
        if isinstance(o.shape, Disc):
            center = (o.shape.cx, o.shape.cy)
        else:
            center = o.shape.center
        views.append((o.id, o.clazz, center, o.shape))
    for did, pos, r, cls in dynamic_positions(world, t):
        views.append((did, cls, pos, Disc(pos[0], pos[1], r)))
    return views


def _own_hit_distance(ox: float, oy: float, ux: float, uy: float,
                      shape: Disc | Rect, d_center: float) -> float:
    from .geometry import ray_disc_intersection, ray_rect_intersection
    if isinstance(shape, Disc):
        t = ray_disc_intersection(ox, oy, ux, uy, shape)
    else:
        t = ray_rect_intersection(ox, oy, ux, uy, shape)
    return t if math.isfinite(t) else d_center


def _nearest_light(world: World, point: tuple[float, float]) -> TrafficLight | None:
    best, best_d = None, math.inf
    for light in world.lights:
        cx, cy = light.zebra.center
        d = math.hypot(point[0] - cx, point[1] - cy)
        if d < best_d:
            best, best_d = light, d
    return best


def detect_objects(world: World, pose: Pose, camera: CameraConfig,
                   config: PerceptionConfig, t: float,
                   rng: np.random.Generator | None = None) -> list[Detection]:
    """Visibility oracle for the seven detectable traffic classes.

    An entity is reported when its center is inside the FOV, within detection
    range, and the nearest-hit ray toward its center reaches it (no occluder,
    including OFF_MAP walls). Each report survives its per-class miss rate.
    Traffic lights carry their true phase.
    """
    detections: list[Detection] = []
    for eid, clazz, center, shape in _entity_views(world, t):
        if clazz not in DETECTABLE_CLASSES:
            continue
        d = math.hypot(center[0] - pose.x, center[1] - pose.y)
        if d <= 0.0 or d > config.detection_max_m:
            continue
        world_bearing = math.atan2(center[1] - pose.y, center[0] - pose.x)
        rel = wrap_angle(world_bearing - pose.heading)
        if abs(rel) > 0.5 * camera.fov_rad:
            continue
        ux, uy = math.cos(world_bearing), math.sin(world_bearing)
        nearest = float(ray_ranges(world, pose, np.array([world_bearing]), t,
                                   config.detection_max_m)[0])
        own = _own_hit_distance(pose.x, pose.y, ux, uy, shape, d)
        if nearest < own - 1e-9:
            continue  # something else blocks the sight line
        miss = config.miss_rate_for(clazz)
        if miss > 0.0:
            if rng is None:
                raise ValueError("detection miss noise requires an rng")
            if rng.random() < miss:
                continue
        if isinstance(shape, Disc):
            halfw = math.atan(shape.radius / d) if d > shape.radius else 0.5 * camera.fov_rad
            lo_b, hi_b = rel - halfw, rel + halfw
        else:
            corner_bearings = [wrap_angle(math.atan2(y - pose.y, x - pose.x) - pose.heading)
                               for x, y in ((shape.xmin, shape.ymin), (shape.xmax, shape.ymin),
                                            (shape.xmax, shape.ymax), (shape.xmin, shape.ymax))]
            lo_b, hi_b = min(corner_bearings), max(corner_bearings)
        # columns fully covered by the target (inward rounding)
        col_lo = math.ceil(camera.bearing_column(hi_b))
        col_hi = math.floor(camera.bearing_column(lo_b))
        if col_lo > col_hi:
            col_lo = col_hi = round(camera.bearing_column(rel))
        col_lo = max(0, min(camera.width - 1, col_lo))
        col_hi = max(0, min(camera.width - 1, col_hi))
        phase = None
        if clazz == "traffic_light":
            light = _nearest_light(world, center)
            if light is not None:
                phase = light_phase(light, t)
        detections.append(Detection(clazz=clazz, col_min=int(col_lo),
                                    col_max=int(col_hi), bearing=rel, phase=phase))
    return detections


def distance_from_detection(det: Detection, depth: DepthImage,
                            config: PerceptionConfig,
                            completed: DepthImage | None = None) -> float | None:
    """Median range over the inner fraction of the detection's column interval.

    Falls back to the completed image when too few pixels are valid; None
    only when the whole image is invalid (ultrasonic-only handling).
    """
    span = det.col_max - det.col_min + 1
    inner_n = max(1, int(round(span * config.bbox_inner_fraction)))
    lo = det.col_min + (span - inner_n) // 2
    hi = lo + inner_n - 1
    block_valid = depth.valid[:, lo:hi + 1]
    block_values = depth.values[:, lo:hi + 1]
    frac = float(block_valid.mean()) if block_valid.size else 0.0
    if frac >= config.min_valid_fraction:
        return float(np.median(block_values[block_valid]))
    try:
        dense = completed if completed is not None else complete_depth(depth)
    except AllInvalidDepth:
        return None
    return float(np.median(dense.values[:, lo:hi + 1]))


def fuse_obstacles(detections: list[tuple[Detection, float | None]],
                   reading: list[float | None],
                   array: UltrasonicArray,
                   config: PerceptionConfig) -> list[ObstacleEstimate]:
    """Merge vision detections (with ranges) and ultrasonic echoes.

    A sensor matches a detection when its heading lies within the bearing
    tolerance. Matched pairs fuse to the minimum distance; detections without
    depth borrow a matched echo (keeping their class); unmatched echoes become
    ``unknown`` estimates at the sensor heading. Result sorted by distance.
    """
    matched = [False] * len(array.headings)
    estimates: list[ObstacleEstimate] = []
    for det, vdist in detections:
        echoes = []
        for i, h in enumerate(array.headings):
            if reading[i] is not None and abs(wrap_angle(h - det.bearing)) <= config.bearing_tol_rad:
                matched[i] = True
                echoes.append(reading[i])
        if vdist is not None:
            if echoes:
                estimates.append(ObstacleEstimate(det.bearing, min(vdist, min(echoes)),
                                                  det.clazz, True, True))
            else:
                estimates.append(ObstacleEstimate(det.bearing, vdist, det.clazz,
                                                  True, False))
        elif echoes:
            estimates.append(ObstacleEstimate(det.bearing, min(echoes), det.clazz,
                                              False, True))
    for i, h in enumerate(array.headings):
        if reading[i] is not None and not matched[i]:
            estimates.append(ObstacleEstimate(h, reading[i], UNKNOWN_CLASS, False, True))
    estimates.sort(key=lambda e: (e.distance, e.bearing, e.clazz))
    return estimates
