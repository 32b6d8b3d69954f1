"""Path planning over a local semantic costmap: class-cost rasterization with
obstacle blocking and inflation, 8-connected A* with a deterministic tie
order, local-goal selection from the global route, and the per-tick guidance
instruction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numba import njit
from scipy import ndimage

from .geometry import Pose, point_along_polyline, wrap_angle
from .perception import ObstacleEstimate, SemanticObservation
from .world import RED, SemanticClass, TrafficLight

BLOCKED = math.inf

DEFAULT_CLASS_COSTS = {
    SemanticClass.BLIND_TRACK: 1.0,
    SemanticClass.SIDEWALK: 1.2,
    SemanticClass.ZEBRA_CROSSING: 1.5,
    SemanticClass.ROADWAY: 50.0,
    SemanticClass.OBSTACLE_FIXED: BLOCKED,
    SemanticClass.OFF_MAP: BLOCKED,
}


class Instruction(Enum):
    GO_STRAIGHT = "go_straight"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    WAIT = "wait"
    STOP = "stop"
    ARRIVED = "arrived"


@dataclass(frozen=True)
class PlannerConfig:
    class_costs: dict = field(default_factory=lambda: dict(DEFAULT_CLASS_COSTS))
    inflation_radius_m: float = 0.4
    inflated_cost: float = 10.0
    window_half_extent_m: float = 5.0
    replan_period_s: float = 0.5
    straight_threshold_rad: float = math.radians(15.0)
    stop_distance_m: float = 1.0
    arrive_radius_m: float = 0.5
    footprint_radius_m: float = 0.3   # blocking radius around obstacle estimates
    lookahead_m: float = 1.0


@dataclass
class Costmap:
    """Traversal costs on the observation window; BLOCKED cells are +inf."""

    cost: np.ndarray             # float64 (n, n)
    offset: tuple[int, int]      # world cell index of window cell (0, 0)
    resolution: float
    origin: tuple[float, float]

    @property
    def size(self) -> int:
        return int(self.cost.shape[0])

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.cost.shape[1] and 0 <= iy < self.cost.shape[0]

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        ix = int(math.floor((x - self.origin[0]) / self.resolution)) - self.offset[0]
        iy = int(math.floor((y - self.origin[1]) / self.resolution)) - self.offset[1]
        return ix, iy

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (self.origin[0] + (self.offset[0] + ix + 0.5) * self.resolution,
                self.origin[1] + (self.offset[1] + iy + 0.5) * self.resolution)

    def is_blocked(self, ix: int, iy: int) -> bool:
        return not self.in_bounds(ix, iy) or math.isinf(self.cost[iy, ix])


@dataclass
class PlanPath:
    """A* result: 8-connected cell chain with its exact accumulated cost."""

    cells: list[tuple[int, int]]
    points: list[tuple[float, float]]
    total_cost: float


@dataclass
class RouteSpec:
    """Global waypoints (final waypoint is the world goal) plus progress index."""

    waypoints: list[tuple[float, float]]
    current_index: int = 0

    def current(self) -> tuple[float, float]:
        return self.waypoints[self.current_index]


def build_costmap(obs: SemanticObservation,
                  estimates: list[ObstacleEstimate],
                  light_states: list[tuple[TrafficLight, str]],
                  config: PlannerConfig,
                  pose: Pose) -> Costmap:
    """Rasterize observed classes, red-light gating, and obstacle estimates.

    Estimates (body-frame bearing/distance) are anchored at the pose and
    blocked within the footprint radius; non-blocked cells within the
    inflation radius of any blocked cell take max(base, inflated_cost).
    """
    lut = np.empty(len(SemanticClass))
    for cls in SemanticClass:
        lut[cls] = config.class_costs[cls]
    cost = lut[obs.classes]

    n = obs.size
    res = obs.resolution
    xs = obs.origin[0] + (obs.offset[0] + np.arange(n) + 0.5) * res
    ys = obs.origin[1] + (obs.offset[1] + np.arange(n) + 0.5) * res
    for light, phase in light_states:
        if phase != RED:
            continue
        z = light.zebra
        in_rect = ((xs >= z.xmin) & (xs <= z.xmax))[None, :] & \
                  ((ys >= z.ymin) & (ys <= z.ymax))[:, None]
        cost[in_rect & (obs.classes == SemanticClass.ZEBRA_CROSSING)] = BLOCKED

    rc = int(math.ceil(config.footprint_radius_m / res)) + 1
    for est in estimates:
        ang = pose.heading + est.bearing
        px = pose.x + est.distance * math.cos(ang)
        py = pose.y + est.distance * math.sin(ang)
        cx = int(math.floor((px - obs.origin[0]) / res)) - obs.offset[0]
        cy = int(math.floor((py - obs.origin[1]) / res)) - obs.offset[1]
        x0, x1 = max(0, cx - rc), min(n - 1, cx + rc)
        y0, y1 = max(0, cy - rc), min(n - 1, cy + rc)
        if x0 > x1 or y0 > y1:
            continue
        dx = xs[x0:x1 + 1] - px
        dy = ys[y0:y1 + 1] - py
        within = dx[None, :] ** 2 + dy[:, None] ** 2 <= config.footprint_radius_m ** 2
        cost[y0:y1 + 1, x0:x1 + 1][within] = BLOCKED

    blocked = np.isinf(cost)
    if blocked.any():
        dist_m = ndimage.distance_transform_edt(~blocked, sampling=res)
        ring = ~blocked & (dist_m <= config.inflation_radius_m + 1e-9)
        cost = np.where(ring, np.maximum(cost, config.inflated_cost), cost)

    return Costmap(cost=cost, offset=obs.offset, resolution=res, origin=obs.origin)


# neighbor order: E, NE, N, NW, W, SW, S, SE (also the f/g tie order)
_NB_DX = np.array([1, 1, 0, -1, -1, -1, 0, 1], dtype=np.int64)
_NB_DY = np.array([0, 1, 1, 1, 0, -1, -1, -1], dtype=np.int64)


@njit(cache=True)
def _astar_core(cost, sx, sy, gx, gy, res, h_scale, nb_dx, nb_dy):  # pragma: no cover - exercised via astar()
    hgt, wid = cost.shape
    n = hgt * wid
    diag = res * math.sqrt(2.0)

    g = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    expanded = np.full(2 * n, -1, dtype=np.int64)
    exp_count = 0

    cap = 8 * n + 16
    hf = np.empty(cap)
    hg = np.empty(cap)
    hseq = np.empty(cap, dtype=np.int64)
    hnode = np.empty(cap, dtype=np.int64)
    size = 0
    seq = 0

    start = sy * wid + sx
    goal = gy * wid + gx
    g[start] = 0.0

    dxm = (sx - gx) * res
    dym = (sy - gy) * res
    hf[0] = h_scale * math.sqrt(dxm * dxm + dym * dym)
    hg[0] = 0.0
    hseq[0] = seq
    hnode[0] = start
    size = 1
    seq += 1

    found = False
    total = np.inf
    while size > 0:
        # pop root
        pf = hf[0]
        pg = hg[0]
        pnode = hnode[0]
        size -= 1
        if size > 0:
            lf = hf[size]
            lg = hg[size]
            ls = hseq[size]
            ln = hnode[size]
            i = 0
            while True:
                left = 2 * i + 1
                if left >= size:
                    break
                right = left + 1
                c = left
                if right < size:
                    if (hf[right] < hf[left]
                            or (hf[right] == hf[left]
                                and (hg[right] > hg[left]
                                     or (hg[right] == hg[left] and hseq[right] < hseq[left])))):
                        c = right
                if (hf[c] < lf
                        or (hf[c] == lf
                            and (hg[c] > lg or (hg[c] == lg and hseq[c] < ls)))):
                    hf[i] = hf[c]
                    hg[i] = hg[c]
                    hseq[i] = hseq[c]
                    hnode[i] = hnode[c]
                    i = c
                else:
                    break
            hf[i] = lf
            hg[i] = lg
            hseq[i] = ls
            hnode[i] = ln

        if pg != g[pnode]:
            continue  # stale heap entry
        if exp_count < expanded.shape[0]:
            expanded[exp_count] = pnode
        exp_count += 1
        if pnode == goal:
            found = True
            total = pg
            break

        px = pnode % wid
        py = pnode // wid
        for k in range(8):
            nx = px + nb_dx[k]
            ny = py + nb_dy[k]
            if nx < 0 or nx >= wid or ny < 0 or ny >= hgt:
                continue
            c = cost[ny, nx]
            if not np.isfinite(c):
                continue
            step = diag if (nb_dx[k] != 0 and nb_dy[k] != 0) else res
            ng = pg + c * step
            nnode = ny * wid + nx
            if ng < g[nnode]:
                g[nnode] = ng
                parent[nnode] = pnode
                if size == cap:
                    cap2 = cap * 2
                    nf = np.empty(cap2)
                    ng2 = np.empty(cap2)
                    ns = np.empty(cap2, dtype=np.int64)
                    nn = np.empty(cap2, dtype=np.int64)
                    nf[:size] = hf[:size]
                    ng2[:size] = hg[:size]
                    ns[:size] = hseq[:size]
                    nn[:size] = hnode[:size]
                    hf = nf
                    hg = ng2
                    hseq = ns
                    hnode = nn
                    cap = cap2
                dxm = (nx - gx) * res
                dym = (ny - gy) * res
                f = ng + h_scale * math.sqrt(dxm * dxm + dym * dym)
                # sift up
                i = size
                hf[i] = f
                hg[i] = ng
                hseq[i] = seq
                hnode[i] = nnode
                size += 1
                seq += 1
                while i > 0:
                    up = (i - 1) // 2
                    if (hf[i] < hf[up]
                            or (hf[i] == hf[up]
                                and (hg[i] > hg[up]
                                     or (hg[i] == hg[up] and hseq[i] < hseq[up])))):
                        tf = hf[i]; hf[i] = hf[up]; hf[up] = tf
                        tg = hg[i]; hg[i] = hg[up]; hg[up] = tg
                        ts = hseq[i]; hseq[i] = hseq[up]; hseq[up] = ts
                        tn = hnode[i]; hnode[i] = hnode[up]; hnode[up] = tn
                        i = up
                    else:
                        break

    return found, total, parent, expanded[:min(exp_count, expanded.shape[0])]


def astar(costmap: Costmap, start: tuple[int, int], goal: tuple[int, int],
          collect_expanded: bool = False):
    """Optimal 8-connected path on the costmap, or None when unreachable.

    Step cost is destination-cell cost times step length; the heuristic is
    Euclidean distance times the map's minimum finite cost (shrunk by 1e-12
    so float rounding can never tip it inadmissible). Ties in f expand the
    larger g first, then the earlier-generated node (neighbor order E, NE,
    N, NW, W, SW, S, SE), so results are deterministic.

    With collect_expanded, returns (plan, expanded cells in pop order).
    """
    sx, sy = start
    gx, gy = goal
    if not costmap.in_bounds(sx, sy) or math.isinf(costmap.cost[sy, sx]):
        raise ValueError("astar start cell is blocked or out of the window")
    empty: list[tuple[int, int]] = []
    if not costmap.in_bounds(gx, gy) or math.isinf(costmap.cost[gy, gx]):
        return (None, empty) if collect_expanded else None
    if (sx, sy) == (gx, gy):
        plan = PlanPath(cells=[(sx, sy)], points=[costmap.cell_center(sx, sy)],
                        total_cost=0.0)
        return (plan, [(sx, sy)]) if collect_expanded else plan

    finite = costmap.cost[np.isfinite(costmap.cost)]
    h_scale = float(finite.min()) * (1.0 - 1e-12)
    found, total, parent, expanded = _astar_core(
        costmap.cost, sx, sy, gx, gy, costmap.resolution, h_scale, _NB_DX, _NB_DY)

    wid = costmap.cost.shape[1]
    if collect_expanded:
        exp_cells = [(int(nd % wid), int(nd // wid)) for nd in expanded]
    if not found:
        return (None, exp_cells) if collect_expanded else None

    cells = []
    node = gy * wid + gx
    while node >= 0:
        cells.append((int(node % wid), int(node // wid)))
        node = int(parent[node])
    cells.reverse()
    plan = PlanPath(cells=cells,
                    points=[costmap.cell_center(ix, iy) for ix, iy in cells],
                    total_cost=float(total))
    return (plan, exp_cells) if collect_expanded else plan


def clear_cell(costmap: Costmap, ix: int, iy: int, config: PlannerConfig):
    """Force a cell traversable (used for the agent's own cell before A*)."""
    if costmap.in_bounds(ix, iy) and math.isinf(costmap.cost[iy, ix]):
        costmap.cost[iy, ix] = config.inflated_cost


def select_local_goal(route: RouteSpec, pose: Pose, costmap: Costmap,
                      config: PlannerConfig) -> tuple[int, int] | None:
    """Window cell to plan toward for the current global waypoint.

    Advances the route index past waypoints already reached. A waypoint
    inside the window maps to its own cell; otherwise the non-blocked
    window-boundary cell nearest (cell center to waypoint) is chosen.
    Returns None when every boundary cell is blocked.
    """
    while (route.current_index < len(route.waypoints) - 1
           and math.hypot(route.waypoints[route.current_index][0] - pose.x,
                          route.waypoints[route.current_index][1] - pose.y)
           <= config.arrive_radius_m):
        route.current_index += 1
    tx, ty = route.current()
    cell = costmap.cell_of(tx, ty)
    if costmap.in_bounds(*cell):
        return cell
    n = costmap.size
    best = None
    best_d = math.inf
    for iy in range(n):
        if iy == 0 or iy == n - 1:
            cols = range(n)
        else:
            cols = (0, n - 1)
        for ix in cols:
            if math.isinf(costmap.cost[iy, ix]):
                continue
            cx, cy = costmap.cell_center(ix, iy)
            d = math.hypot(cx - tx, cy - ty)
            if d < best_d:
                best_d = d
                best = (ix, iy)
    return best


def make_instruction(plan: PlanPath | None, pose: Pose,
                     estimates: list[ObstacleEstimate],
                     wait_for_light: bool, config: PlannerConfig,
                     goal: tuple[float, float]) -> Instruction:
    """Exactly one instruction per planning tick.

    Priority: Arrived at the global goal; Wait when the route is gated by a
    red light; Stop when an estimate sits dead ahead inside the stop
    distance (or there is no path); otherwise steer toward the path point
    nearest to the lookahead arc length.
    """
    if math.hypot(goal[0] - pose.x, goal[1] - pose.y) <= config.arrive_radius_m:
        return Instruction.ARRIVED
    if wait_for_light:
        return Instruction.WAIT
    for est in estimates:
        if (abs(est.bearing) <= config.straight_threshold_rad
                and est.distance <= config.stop_distance_m):
            return Instruction.STOP
    if plan is None or not plan.points:
        return Instruction.STOP
    target = _lookahead_waypoint(plan.points, config.lookahead_m)
    dx, dy = target[0] - pose.x, target[1] - pose.y
    if math.hypot(dx, dy) < 1e-9:
        return Instruction.GO_STRAIGHT
    delta = wrap_angle(math.atan2(dy, dx) - pose.heading)
    if abs(delta) <= config.straight_threshold_rad:
        return Instruction.GO_STRAIGHT
    return Instruction.TURN_LEFT if delta > 0 else Instruction.TURN_RIGHT


def _lookahead_waypoint(points: list[tuple[float, float]], lookahead: float) -> tuple[float, float]:
    """Path waypoint whose arc length from the start is nearest the lookahead."""
    best = points[0]
    best_err = abs(0.0 - lookahead)
    s = 0.0
    for (ax, ay), (bx, by) in zip(points, points[1:]):
        s += math.hypot(bx - ax, by - ay)
        err = abs(s - lookahead)
        if err < best_err:
            best_err = err
            best = (bx, by)
        if s >= lookahead:
            break
    return best
