"""Simulated sensor suite: scanline RGB-D depth with invalid-pixel corruption,
a five-cone ultrasonic array, and GPS/IMU samples.

All operations are pure given an explicit numpy Generator; noise-off calls
consume no random draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Disc, Pose, Rect, ray_rect_intersection, wrap_angle
from .world import SemanticClass, World, dynamic_positions

# re-exported for callers assembling poses for sensor queries
__all__ = [
    "Pose", "CameraConfig", "DepthNoiseModel", "DepthImage", "UltrasonicArray",
    "NO_ECHO", "GpsFix", "ImuSample", "render_depth", "ping_ultrasonic",
    "sample_gps", "sample_imu", "depth_to_text", "depth_from_text",
]


@dataclass(frozen=True)
class CameraConfig:
    width: int = 64
    height: int = 40
    fov_rad: float = 1.518  # ~87 deg horizontal
    min_m: float = 0.3
    max_m: float = 6.0

    def column_bearing(self, col: float) -> float:
        """Body-frame bearing of a pixel column center; column 0 is leftmost (+)."""
        return self.fov_rad * (0.5 - (col + 0.5) / self.width)

    def bearing_column(self, bearing: float) -> float:
        """Fractional column whose center ray has the given body-frame bearing."""
        return (0.5 - bearing / self.fov_rad) * self.width - 0.5


@dataclass(frozen=True)
class DepthNoiseModel:
    """Invalid-pixel corruption: i.i.d. dropout plus contiguous circular holes."""

    dropout_p: float = 0.0
    hole_count: int = 0
    hole_radius_px: int = 3

    @property
    def enabled(self) -> bool:
        return self.dropout_p > 0.0 or self.hole_count > 0


@dataclass
class DepthImage:
    values: np.ndarray  # float64 (height, width), meaningful only where valid
    valid: np.ndarray   # bool (height, width)
    camera: CameraConfig

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    def copy(self) -> "DepthImage":
        return DepthImage(self.values.copy(), self.valid.copy(), self.camera)


@dataclass(frozen=True)
class UltrasonicArray:
    """Forward fan of range sensors; headings are body-frame radians."""

    headings: tuple[float, ...] = tuple(math.radians(a) for a in (-60, -30, 0, 30, 60))
    half_angle: float = math.radians(15.0)
    max_m: float = 4.0

    def __post_init__(self):
        if len(self.headings) != 5:
            raise ValueError("ultrasonic array needs exactly 5 sensors")
        if not (0.0 < self.half_angle < math.radians(45.0)):
            raise ValueError("cone half-angle must be in (0, 45) degrees")


NO_ECHO = None  # per-sensor reading when nothing echoes within max range


@dataclass(frozen=True)
class GpsFix:
    x: float
    y: float
    sigma_m: float


@dataclass(frozen=True)
class ImuSample:
    heading: float
    angular_rate: float
    speed: float

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_angle(self.heading))


def _entity_shapes(world: World, t: float) -> list[Disc | Rect]:
    shapes: list[Disc | Rect] = [o.shape for o in world.obstacles]
    for _id, (x, y), r, _cls in dynamic_positions(world, t):
        shapes.append(Disc(x, y, r))
    return shapes


def _disc_hits(ox, oy, dxs, dys, disc: Disc) -> np.ndarray:
    """Vectorized ray/disc boundary hit distances; inf where the ray misses."""
    mx = ox - disc.cx
    my = oy - disc.cy
    b = mx * dxs + my * dys
    c = mx * mx + my * my - disc.radius * disc.radius
    discr = b * b - c
    out = np.full(dxs.shape, np.inf)
    ok = discr >= 0.0
    root = np.sqrt(np.where(ok, discr, 0.0))
    t_near = -b - root
    t_far = -b + root
    t = np.where(t_near >= 0.0, t_near, t_far)
    np.copyto(out, t, where=ok & (t >= 0.0))
    return out


def _rect_hits(ox, oy, dxs, dys, rect: Rect) -> np.ndarray:
    """Vectorized slab-method ray/rect hit distances; inf where the ray misses."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_x = 1.0 / dxs
        inv_y = 1.0 / dys
        tx1 = (rect.xmin - ox) * inv_x
        tx2 = (rect.xmax - ox) * inv_x
        ty1 = (rect.ymin - oy) * inv_y
        ty2 = (rect.ymax - oy) * inv_y
    txmin = np.minimum(tx1, tx2)
    txmax = np.maximum(tx1, tx2)
    tymin = np.minimum(ty1, ty2)
    tymax = np.maximum(ty1, ty2)
    # rays parallel to an axis: inf*0 gives nan; treat by slab containment
    par_x = np.abs(dxs) < 1e-15
    if par_x.any():
        inside = (ox >= rect.xmin) & (ox <= rect.xmax)
        txmin = np.where(par_x, np.where(inside, -np.inf, np.inf), txmin)
        txmax = np.where(par_x, np.where(inside, np.inf, -np.inf), txmax)
    par_y = np.abs(dys) < 1e-15
    if par_y.any():
        inside = (oy >= rect.ymin) & (oy <= rect.ymax)
        tymin = np.where(par_y, np.where(inside, -np.inf, np.inf), tymin)
        tymax = np.where(par_y, np.where(inside, np.inf, -np.inf), tymax)
    tmin = np.maximum(np.maximum(txmin, tymin), 0.0)
    tmax = np.minimum(txmax, tymax)
    return np.where(tmin <= tmax, tmin, np.inf)


def _offmap_hits(world: World, ox: float, oy: float,
                 dxs: np.ndarray, dys: np.ndarray, max_m: float) -> np.ndarray:
    """Sampled march to the first OFF_MAP cell along each ray.

    Rays leaving the raster are treated as open space (no hit); only explicit
    OFF_MAP cells echo. Range is quantized to half a cell.
    """
    grid = world.grid
    if not bool((grid.cells == SemanticClass.OFF_MAP).any()):
        return np.full(dxs.shape, np.inf)
    step = grid.resolution * 0.5
    n = int(math.ceil(max_m / step))
    s = (np.arange(1, n + 1) * step)[:, None]          # (n, 1)
    px = ox + s * dxs[None, :]
    py = oy + s * dys[None, :]
    ix = np.floor((px - grid.origin[0]) / grid.resolution).astype(np.int64)
    iy = np.floor((py - grid.origin[1]) / grid.resolution).astype(np.int64)
    inb = (ix >= 0) & (ix < grid.width) & (iy >= 0) & (iy < grid.height)
    cls = grid.cells[iy.clip(0, grid.height - 1), ix.clip(0, grid.width - 1)]
    hit = inb & (cls == SemanticClass.OFF_MAP)
    any_hit = hit.any(axis=0)
    first = np.argmax(hit, axis=0)
    return np.where(any_hit, (first + 1) * step, np.inf)


def ray_ranges(world: World, pose: Pose, angles: np.ndarray, t: float,
               max_m: float, include_offmap: bool = True) -> np.ndarray:
    """Nearest-hit distance per world-frame ray angle; inf where nothing hits."""
    dxs = np.cos(angles)
    dys = np.sin(angles)
    best = np.full(angles.shape, np.inf)
    for shape in _entity_shapes(world, t):
        if isinstance(shape, Disc):
            best = np.minimum(best, _disc_hits(pose.x, pose.y, dxs, dys, shape))
        else:
            best = np.minimum(best, _rect_hits(pose.x, pose.y, dxs, dys, shape))
    if include_offmap:
        best = np.minimum(best, _offmap_hits(world, pose.x, pose.y, dxs, dys, max_m))
    return best


def render_depth(world: World, pose: Pose, camera: CameraConfig, t: float,
                 noise: DepthNoiseModel | None = None,
                 rng: np.random.Generator | None = None) -> DepthImage:
    """One ray per pixel column at a single scanline height.

    Every row of a column shares the column's range (planar world). Pixels
    whose nearest hit falls outside [min_m, max_m] are invalid; corruption
    then marks dropout pixels and hole blobs invalid. Noise-off renders are
    deterministic and consume no rng draws.
    """
    cols = np.arange(camera.width)
    bearings = camera.fov_rad * (0.5 - (cols + 0.5) / camera.width)
    ranges = ray_ranges(world, pose, pose.heading + bearings, t, camera.max_m)

    col_valid = (ranges >= camera.min_m) & (ranges <= camera.max_m)
    values = np.tile(np.where(col_valid, ranges, 0.0), (camera.height, 1))
    valid = np.tile(col_valid, (camera.height, 1))

    if noise is not None and noise.enabled:
        if rng is None:
            raise ValueError("depth corruption requires an rng")
        if noise.dropout_p > 0.0:
            valid &= rng.random(valid.shape) >= noise.dropout_p
        for _ in range(noise.hole_count):
            hc = int(rng.integers(0, camera.width))
            hr = int(rng.integers(0, camera.height))
            yy, xx = np.ogrid[:camera.height, :camera.width]
            hole = (xx - hc) ** 2 + (yy - hr) ** 2 <= noise.hole_radius_px ** 2
            valid &= ~hole
    values = np.where(valid, values, 0.0)
    return DepthImage(values=values, valid=valid, camera=camera)


def _wedge_min_to_disc(ox, oy, lo, hi, disc: Disc) -> float | None:
    """Min distance from (ox, oy) to disc surface points with bearing in [lo, hi].

    lo/hi are world angles with hi = lo + cone width; boundaries inclusive.
    """
    d = math.hypot(disc.cx - ox, disc.cy - oy)
    if d <= disc.radius:
        return None  # origin inside the disc; degenerate, no echo
    beta = math.atan2(disc.cy - oy, disc.cx - ox)
    best = math.inf
    half = 0.5 * (hi - lo)
    mid = lo + half
    if abs(wrap_angle(beta - mid)) <= half:
        best = d - disc.radius
    for phi in (lo, hi):
        delta = abs(wrap_angle(beta - phi))
        if delta < 0.5 * math.pi and d * math.sin(delta) <= disc.radius:
            best = min(best, d * math.cos(delta)
                       - math.sqrt(disc.radius ** 2 - (d * math.sin(delta)) ** 2))
    return best if math.isfinite(best) else None


def _wedge_min_to_rect(ox, oy, lo, hi, rect: Rect) -> float | None:
    """Min distance from (ox, oy) to rect surface points with bearing in [lo, hi]."""
    if rect.contains(ox, oy):
        return None
    half = 0.5 * (hi - lo)
    mid = lo + half
    corners = [(rect.xmin, rect.ymin), (rect.xmax, rect.ymin),
               (rect.xmax, rect.ymax), (rect.xmin, rect.ymax)]
    edges = list(zip(corners, corners[1:] + corners[:1]))
    best = math.inf
    for (ax, ay), (bx, by) in edges:
        # unconstrained closest point on the edge, kept if inside the wedge
        abx, aby = bx - ax, by - ay
        denom = abx * abx + aby * aby
        tt = ((ox - ax) * abx + (oy - ay) * aby) / denom
        tt = min(1.0, max(0.0, tt))
        qx, qy = ax + tt * abx, ay + tt * aby
        if abs(wrap_angle(math.atan2(qy - oy, qx - ox) - mid)) <= half:
            best = min(best, math.hypot(qx - ox, qy - oy))
    for phi in (lo, hi):
        thit = ray_rect_intersection(ox, oy, math.cos(phi), math.sin(phi), rect)
        if math.isfinite(thit):
            best = min(best, thit)
    return best if math.isfinite(best) else None


def ping_ultrasonic(world: World, pose: Pose, array: UltrasonicArray,
                    t: float) -> list[float | None]:
    """Per-sensor nearest surface distance within its cone, or NO_ECHO.

    Cone boundaries are inclusive: a surface exactly on the shared boundary
    of two sensors echoes in both.
    """
    shapes = _entity_shapes(world, t)
    readings: list[float | None] = []
    for h in array.headings:
        center = pose.heading + h
        lo = center - array.half_angle
        hi = center + array.half_angle
        best = math.inf
        for shape in shapes:
            if isinstance(shape, Disc):
                m = _wedge_min_to_disc(pose.x, pose.y, lo, hi, shape)
            else:
                m = _wedge_min_to_rect(pose.x, pose.y, lo, hi, shape)
            if m is not None and m > 0.0:
                best = min(best, m)
        readings.append(best if best <= array.max_m else NO_ECHO)
    return readings


def sample_gps(true_pos: tuple[float, float], sigma: float,
               rng: np.random.Generator | None = None) -> GpsFix:
    """Position estimate with independent per-axis Gaussian noise."""
    if sigma < 0:
        raise ValueError("gps sigma must be >= 0")
    if sigma == 0.0:
        return GpsFix(true_pos[0], true_pos[1], 0.0)
    if rng is None:
        raise ValueError("gps noise requires an rng")
    nx, ny = rng.normal(0.0, sigma, 2)
    return GpsFix(true_pos[0] + nx, true_pos[1] + ny, sigma)


def sample_imu(heading: float, angular_rate: float, speed: float) -> ImuSample:
    """Exact body heading/rate/speed of the simulated agent."""
    return ImuSample(heading=heading, angular_rate=angular_rate, speed=speed)


def depth_to_text(img: DepthImage) -> str:
    """Plain-text grid for fixtures; -1 marks invalid pixels."""
    lines = [f"openwalk-depth/1 {img.width} {img.height} "
             f"{img.camera.fov_rad!r} {img.camera.min_m!r} {img.camera.max_m!r}"]
    for r in range(img.height):
        cells = []
        for c in range(img.width):
            cells.append(repr(float(img.values[r, c])) if img.valid[r, c] else "-1")
        lines.append(" ".join(cells))
    return "\n".join(lines) + "\n"


def depth_from_text(text: str) -> DepthImage:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split()
    if head[0] != "openwalk-depth/1":
        raise ValueError(f"unknown depth fixture header {head[0]!r}")
    w, h = int(head[1]), int(head[2])
    camera = CameraConfig(width=w, height=h, fov_rad=float(head[3]),
                          min_m=float(head[4]), max_m=float(head[5]))
    values = np.zeros((h, w))
    valid = np.zeros((h, w), dtype=bool)
    for r, ln in enumerate(lines[1:]):
        for c, tok in enumerate(ln.split()):
            v = float(tok)
            if v >= 0:
                values[r, c] = v
                valid[r, c] = True
    return DepthImage(values=values, valid=valid, camera=camera)
