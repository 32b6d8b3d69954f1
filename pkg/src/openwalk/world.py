"""Static semantic map, scripted dynamic agents, traffic lights, and collision
queries. A loaded :class:`World` is immutable ground truth; every time-indexed
query is a pure function of ``(world, t)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .geometry import Disc, Pose, Rect, dist, dist_point_rect

WORLD_SCHEMA = "openwalk-world/1"
ROUTE_SCHEMA = "openwalk-route/1"


class WorldError(ValueError):
    """Raised on world/route document parse or invariant failures."""


class SemanticClass(IntEnum):
    BLIND_TRACK = 0
    SIDEWALK = 1
    ZEBRA_CROSSING = 2
    ROADWAY = 3
    OBSTACLE_FIXED = 4
    OFF_MAP = 5


CLASS_CHARS = {
    SemanticClass.BLIND_TRACK: "B",
    SemanticClass.SIDEWALK: "S",
    SemanticClass.ZEBRA_CROSSING: "Z",
    SemanticClass.ROADWAY: "R",
    SemanticClass.OBSTACLE_FIXED: "X",
    SemanticClass.OFF_MAP: ".",
}
CHAR_CLASSES = {c: k for k, c in CLASS_CHARS.items()}

WALKABLE = (SemanticClass.BLIND_TRACK, SemanticClass.SIDEWALK,
            SemanticClass.ZEBRA_CROSSING)

N_CLASSES = len(SemanticClass)


@dataclass
class SemanticGrid:
    """Row-major raster of terrain classes at a fixed metric resolution.

    ``cells[iy, ix]`` covers the square with min corner
    ``origin + (ix, iy) * resolution``; row 0 is the southernmost row.
    """

    cells: np.ndarray  # uint8 (height, width)
    resolution: float = 0.1
    origin: tuple[float, float] = (0.0, 0.0)

    @property
    def width(self) -> int:
        return int(self.cells.shape[1])

    @property
    def height(self) -> int:
        return int(self.cells.shape[0])

    def cell_index(self, x: float, y: float) -> tuple[int, int]:
        """(ix, iy) of the cell containing the world point; may be out of bounds."""
        ix = int(math.floor((x - self.origin[0]) / self.resolution))
        iy = int(math.floor((y - self.origin[1]) / self.resolution))
        return ix, iy

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (self.origin[0] + (ix + 0.5) * self.resolution,
                self.origin[1] + (iy + 0.5) * self.resolution)

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def class_at(self, x: float, y: float) -> SemanticClass:
        """Class of the cell containing (x, y); OFF_MAP outside the raster."""
        ix, iy = self.cell_index(x, y)
        if not self.in_bounds(ix, iy):
            return SemanticClass.OFF_MAP
        return SemanticClass(int(self.cells[iy, ix]))


@dataclass(frozen=True)
class ObstacleSpec:
    id: str
    clazz: str
    shape: Disc | Rect


@dataclass(frozen=True)
class DynamicAgentSpec:
    id: str
    clazz: str
    radius: float
    path: tuple[tuple[float, float], ...]
    speed: float
    start_time: float = 0.0
    loop: bool = False


@dataclass(frozen=True)
class TrafficLight:
    id: str
    zebra: Rect
    green_s: float
    red_s: float
    offset_s: float = 0.0

    @property
    def cycle_s(self) -> float:
        return self.green_s + self.red_s


@dataclass
class World:
    grid: SemanticGrid
    obstacles: list[ObstacleSpec] = field(default_factory=list)
    dynamics: list[DynamicAgentSpec] = field(default_factory=list)
    lights: list[TrafficLight] = field(default_factory=list)
    start: Pose = field(default_factory=lambda: Pose(0.0, 0.0, 0.0))
    goal: tuple[float, float] = (0.0, 0.0)


GREEN = "green"
RED = "red"


def light_phase(light: TrafficLight, t: float) -> str:
    """Phase at time t: green on [0, green) of each cycle, red on the rest.

    Negative (t - offset) wraps into [0, cycle).
    """
    phase = math.fmod(t - light.offset_s, light.cycle_s)
    if phase < 0.0:
        phase += light.cycle_s
    return GREEN if phase < light.green_s else RED


def _polyline_cumlen(path) -> list[float]:
    acc = [0.0]
    for (ax, ay), (bx, by) in zip(path, path[1:]):
        acc.append(acc[-1] + math.hypot(bx - ax, by - ay))
    return acc


def _point_at_arclen(path, cum, s: float) -> tuple[float, float]:
    total = cum[-1]
    if s <= 0.0:
        return path[0]
    if s >= total:
        return path[-1]
    for i in range(1, len(cum)):
        if s <= cum[i]:
            seg = cum[i] - cum[i - 1]
            f = (s - cum[i - 1]) / seg if seg > 0.0 else 0.0
            ax, ay = path[i - 1]
            bx, by = path[i]
            return (ax + f * (bx - ax), ay + f * (by - ay))
    return path[-1]


def dynamic_position(spec: DynamicAgentSpec, t: float) -> tuple[float, float]:
    """Constant-speed position along the agent's polyline at time t.

    Looping agents ping-pong: forward along the path, then back, period
    2 * path length. Non-looping agents rest at the final waypoint.
    """
    if len(spec.path) == 1 or t <= spec.start_time or spec.speed <= 0.0:
        return spec.path[0]
    cum = _polyline_cumlen(spec.path)
    total = cum[-1]
    if total <= 0.0:
        return spec.path[0]
    s = spec.speed * (t - spec.start_time)
    if spec.loop:
        s = math.fmod(s, 2.0 * total)
        if s > total:
            s = 2.0 * total - s
    return _point_at_arclen(spec.path, cum, s)


def dynamic_positions(world: World, t: float) -> list[tuple[str, tuple[float, float], float, str]]:
    """(id, center, radius, class) for every dynamic agent at time t."""
    return [(d.id, dynamic_position(d, t), d.radius, d.clazz)
            for d in world.dynamics]


def collision_check(cx: float, cy: float, radius: float,
                    world: World, t: float) -> list[str]:
    """Ids of static obstacles and dynamic agents overlapping the body disc.

    Overlap is strict: touching exactly at the boundary is not a contact.
    """
    hits: list[str] = []
    for obs in world.obstacles:
        if isinstance(obs.shape, Disc):
            if dist(cx, cy, obs.shape.cx, obs.shape.cy) < radius + obs.shape.radius:
                hits.append(obs.id)
        else:
            if dist_point_rect(cx, cy, obs.shape) < radius:
                hits.append(obs.id)
    for aid, (ax, ay), arad, _cls in dynamic_positions(world, t):
        if dist(cx, cy, ax, ay) < radius + arad:
            hits.append(aid)
    return hits


# --- document parsing -------------------------------------------------------

def _require(cond: bool, msg: str):
    if not cond:
        raise WorldError(msg)


def _parse_shape(doc: dict, locus: str) -> Disc | Rect:
    kind = doc.get("type")
    if kind == "disc":
        center = doc.get("center")
        radius = doc.get("radius")
        _require(isinstance(center, (list, tuple)) and len(center) == 2,
                 f"{locus}: disc center must be [x, y]")
        _require(isinstance(radius, (int, float)) and radius > 0,
                 f"{locus}: disc radius must be > 0")
        return Disc(float(center[0]), float(center[1]), float(radius))
    if kind == "rect":
        lo, hi = doc.get("min"), doc.get("max")
        _require(isinstance(lo, (list, tuple)) and len(lo) == 2 and
                 isinstance(hi, (list, tuple)) and len(hi) == 2,
                 f"{locus}: rect needs min [x, y] and max [x, y]")
        _require(lo[0] < hi[0] and lo[1] < hi[1],
                 f"{locus}: rect min must be < max componentwise")
        return Rect(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))
    raise WorldError(f"{locus}: unknown shape type {kind!r}")


def _parse_grid(doc: dict) -> SemanticGrid:
    _require(isinstance(doc, dict), "grid: missing section")
    res = float(doc.get("resolution", 0.1))
    _require(res > 0, "grid.resolution must be > 0")
    origin = doc.get("origin", [0.0, 0.0])
    _require(isinstance(origin, (list, tuple)) and len(origin) == 2,
             "grid.origin must be [x, y]")
    if "rows" in doc:
        rows = doc["rows"]
        _require(isinstance(rows, list) and rows, "grid.rows must be a non-empty list")
        width = len(rows[0])
        cells = np.empty((len(rows), width), dtype=np.uint8)
        # rows[0] is the northernmost row in the document; row 0 of the
        # array is the southernmost.
        for r, line in enumerate(rows):
            _require(len(line) == width, f"grid.rows[{r}]: ragged row width")
            iy = len(rows) - 1 - r
            for ix, ch in enumerate(line):
                cls = CHAR_CLASSES.get(ch)
                _require(cls is not None, f"grid.rows[{r}][{ix}]: unknown class char {ch!r}")
                cells[iy, ix] = cls
    else:
        width = doc.get("width")
        height = doc.get("height")
        fill = doc.get("fill", "S")
        _require(isinstance(width, int) and width > 0, "grid.width must be a positive int")
        _require(isinstance(height, int) and height > 0, "grid.height must be a positive int")
        cls = CHAR_CLASSES.get(fill)
        _require(cls is not None, f"grid.fill: unknown class char {fill!r}")
        cells = np.full((height, width), cls, dtype=np.uint8)
    return SemanticGrid(cells=cells, resolution=res,
                        origin=(float(origin[0]), float(origin[1])))


def _stamp_obstacles(grid: SemanticGrid, obstacles: list[ObstacleSpec]):
    """Mark cells whose center falls inside a static obstacle as OBSTACLE_FIXED."""
    res = grid.resolution
    ox, oy = grid.origin
    for obs in obstacles:
        s = obs.shape
        if isinstance(s, Disc):
            x0, y0, x1, y1 = s.cx - s.radius, s.cy - s.radius, s.cx + s.radius, s.cy + s.radius
        else:
            x0, y0, x1, y1 = s.xmin, s.ymin, s.xmax, s.ymax
        ix0 = max(0, int(math.floor((x0 - ox) / res)))
        iy0 = max(0, int(math.floor((y0 - oy) / res)))
        ix1 = min(grid.width - 1, int(math.floor((x1 - ox) / res)))
        iy1 = min(grid.height - 1, int(math.floor((y1 - oy) / res)))
        for iy in range(iy0, iy1 + 1):
            for ix in range(ix0, ix1 + 1):
                cx, cy = grid.cell_center(ix, iy)
                if isinstance(s, Disc):
                    inside = dist(cx, cy, s.cx, s.cy) <= s.radius
                else:
                    inside = s.contains(cx, cy)
                if inside:
                    grid.cells[iy, ix] = SemanticClass.OBSTACLE_FIXED


def load_world(document: dict | str) -> World:
    """Parse and validate an ``openwalk-world/1`` document.

    Static obstacle footprints are stamped into the grid as OBSTACLE_FIXED so
    the raster is the single semantic ground truth. Raises WorldError with a
    field locus on the first violated invariant.
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise WorldError(f"world document: invalid JSON at line {e.lineno}: {e.msg}") from e
    _require(isinstance(document, dict), "world document must be a JSON object")
    schema = document.get("schema")
    _require(schema == WORLD_SCHEMA, f"schema: expected {WORLD_SCHEMA!r}, got {schema!r}")

    grid = _parse_grid(document.get("grid"))

    obstacles = []
    seen = set()
    for i, odoc in enumerate(document.get("obstacles", [])):
        locus = f"obstacles[{i}]"
        oid = odoc.get("id", f"obs-{i}")
        _require(oid not in seen, f"{locus}: duplicate id {oid!r}")
        seen.add(oid)
        obstacles.append(ObstacleSpec(
            id=str(oid),
            clazz=str(odoc.get("class", "unknown")),
            shape=_parse_shape(odoc.get("shape", {}), locus),
        ))

    dynamics = []
    for i, ddoc in enumerate(document.get("dynamics", [])):
        locus = f"dynamics[{i}]"
        did = ddoc.get("id", f"dyn-{i}")
        _require(did not in seen, f"{locus}: duplicate id {did!r}")
        seen.add(did)
        path = ddoc.get("path")
        _require(isinstance(path, list) and len(path) >= 1,
                 f"{locus}: path needs at least one waypoint")
        speed = float(ddoc.get("speed", 0.0))
        _require(speed >= 0.0, f"{locus}: speed must be >= 0")
        radius = float(ddoc.get("radius", 0.3))
        _require(radius > 0.0, f"{locus}: radius must be > 0")
        dynamics.append(DynamicAgentSpec(
            id=str(did), clazz=str(ddoc.get("class", "person")), radius=radius,
            path=tuple((float(p[0]), float(p[1])) for p in path),
            speed=speed, start_time=float(ddoc.get("start_time", 0.0)),
            loop=bool(ddoc.get("loop", False)),
        ))

    lights = []
    for i, ldoc in enumerate(document.get("lights", [])):
        locus = f"lights[{i}]"
        zdoc = ldoc.get("zebra")
        _require(isinstance(zdoc, dict), f"{locus}: missing zebra rect")
        zebra = _parse_shape({"type": "rect", **zdoc}, f"{locus}.zebra")
        green = float(ldoc.get("green_s", 0.0))
        red = float(ldoc.get("red_s", 0.0))
        _require(green > 0 and red > 0, f"{locus}: green_s and red_s must be > 0")
        lights.append(TrafficLight(
            id=str(ldoc.get("id", f"light-{i}")), zebra=zebra,
            green_s=green, red_s=red, offset_s=float(ldoc.get("offset_s", 0.0)),
        ))

    sdoc = document.get("start")
    _require(isinstance(sdoc, dict) and isinstance(sdoc.get("position"), (list, tuple)),
             "start: needs {position: [x, y], heading}")
    start = Pose(float(sdoc["position"][0]), float(sdoc["position"][1]),
                 float(sdoc.get("heading", 0.0)))
    gdoc = document.get("goal")
    _require(isinstance(gdoc, (list, tuple)) and len(gdoc) == 2, "goal: must be [x, y]")
    goal = (float(gdoc[0]), float(gdoc[1]))

    _stamp_obstacles(grid, obstacles)

    _require(grid.class_at(start.x, start.y) in WALKABLE, "start not walkable")
    _require(grid.class_at(*goal) in WALKABLE, "goal not walkable")

    return World(grid=grid, obstacles=obstacles, dynamics=dynamics,
                 lights=lights, start=start, goal=goal)


def serialize_world(world: World) -> dict:
    """Document for :func:`load_world`; load(serialize(load(d))) is a fixed point."""
    grid = world.grid
    rows = []
    for iy in range(grid.height - 1, -1, -1):
        rows.append("".join(CLASS_CHARS[SemanticClass(int(c))] for c in grid.cells[iy]))
    obstacles = []
    for o in world.obstacles:
        if isinstance(o.shape, Disc):
            shape = {"type": "disc", "center": [o.shape.cx, o.shape.cy],
                     "radius": o.shape.radius}
        else:
            shape = {"type": "rect", "min": [o.shape.xmin, o.shape.ymin],
                     "max": [o.shape.xmax, o.shape.ymax]}
        obstacles.append({"id": o.id, "class": o.clazz, "shape": shape})
    dynamics = [{
        "id": d.id, "class": d.clazz, "radius": d.radius,
        "path": [[x, y] for x, y in d.path], "speed": d.speed,
        "start_time": d.start_time, "loop": d.loop,
    } for d in world.dynamics]
    lights = [{
        "id": l.id,
        "zebra": {"min": [l.zebra.xmin, l.zebra.ymin], "max": [l.zebra.xmax, l.zebra.ymax]},
        "green_s": l.green_s, "red_s": l.red_s, "offset_s": l.offset_s,
    } for l in world.lights]
    return {
        "schema": WORLD_SCHEMA,
        "grid": {"resolution": grid.resolution,
                 "origin": [grid.origin[0], grid.origin[1]],
                 "rows": rows},
        "obstacles": obstacles,
        "dynamics": dynamics,
        "lights": lights,
        "start": {"position": [world.start.x, world.start.y],
                  "heading": world.start.heading},
        "goal": [world.goal[0], world.goal[1]],
    }


def load_route(document: dict | str) -> list[tuple[float, float]]:
    """Parse an ``openwalk-route/1`` document into ordered waypoints."""
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise WorldError(f"route document: invalid JSON at line {e.lineno}: {e.msg}") from e
    _require(isinstance(document, dict), "route document must be a JSON object")
    schema = document.get("schema")
    _require(schema == ROUTE_SCHEMA, f"schema: expected {ROUTE_SCHEMA!r}, got {schema!r}")
    wps = document.get("waypoints")
    _require(isinstance(wps, list) and len(wps) >= 1, "waypoints: need at least one")
    return [(float(p[0]), float(p[1])) for p in wps]


def serialize_route(waypoints: list[tuple[float, float]]) -> dict:
    return {"schema": ROUTE_SCHEMA, "waypoints": [[x, y] for x, y in waypoints]}
