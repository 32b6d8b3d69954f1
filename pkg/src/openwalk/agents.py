"""Closed-loop episode execution: the sense-perceive-plan-instruct-move loop
for the instruction-following system agent and the white-cane baseline agent.

Episodes are pure functions of (world, route, config, seed): identical inputs
give bit-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Disc, Pose, Rect, closest_point_on_rect, segment_rect_intersects, wrap_angle
from .perception import (complete_depth, AllInvalidDepth, detect_objects,
                         distance_from_detection, fuse_obstacles, observe_semantics)
from .planner import (Costmap, Instruction, PlannerConfig, RouteSpec, astar,
                      build_costmap, clear_cell, make_instruction,
                      select_local_goal)
from .sensors import (CameraConfig, DepthNoiseModel, UltrasonicArray,
                      ping_ultrasonic, render_depth)
from .world import GREEN, RED, World, collision_check, dynamic_positions, light_phase


class ConfigError(ValueError):
    """Inconsistent episode configuration, reported before the loop starts."""


@dataclass(frozen=True)
class SystemAgentConfig:
    speed_mps: float = 0.4
    turn_rate_rps: float = 0.785          # ~45 deg/s
    reaction_latency_s: float = 0.3       # instructions apply after this delay
    body_radius_m: float = 0.3
    heading_noise_sigma: float = 0.02     # per straight tick


@dataclass(frozen=True)
class BaselineAgentConfig:
    cane_reach_m: float = 1.0
    cane_sweep_half_angle: float = math.radians(45.0)
    speed_mps: float = 0.1
    backoff_distance_m: float = 0.5
    heading_noise_sigma: float = 0.3
    body_radius_m: float = 0.3
    turn_away_min: float = math.radians(30.0)
    turn_away_max: float = math.radians(90.0)


@dataclass(frozen=True)
class TickSchedule:
    physics_step_s: float = 0.1
    plan_period_s: float = 0.5
    max_time_s: float = 300.0

    def __post_init__(self):
        ratio = self.plan_period_s / self.physics_step_s
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigError("plan period must be an integer multiple of the physics step")

    @property
    def ticks_per_plan(self) -> int:
        return int(round(self.plan_period_s / self.physics_step_s))


@dataclass
class EpisodeResult:
    success: bool
    elapsed_s: float
    trajectory: list[tuple[float, float, float, float]]   # (t, x, y, heading)
    contacts: list[tuple[float, str]]                     # interval-opening events
    instructions: list[tuple[float, Instruction]]
    distance_m: float
    avg_speed_mps: float
    seed: int
    agent: str


def _push_out_static(world: World, x: float, y: float, radius: float):
    """Slide the body disc out of static obstacle shapes; returns contacted ids."""
    hits: list[str] = []
    for _ in range(3):
        moved = False
        for obs in world.obstacles:
            s = obs.shape
            if isinstance(s, Disc):
                d = math.hypot(x - s.cx, y - s.cy)
                rsum = radius + s.radius
                if d < rsum:
                    if d > 1e-12:
                        ux, uy = (x - s.cx) / d, (y - s.cy) / d
                    else:
                        ux, uy = 1.0, 0.0
                    x, y = s.cx + ux * rsum, s.cy + uy * rsum
                    if obs.id not in hits:
                        hits.append(obs.id)
                    moved = True
            else:
                qx, qy = closest_point_on_rect(x, y, s)
                d = math.hypot(x - qx, y - qy)
                if d < radius:
                    if d > 1e-12:
                        ux, uy = (x - qx) / d, (y - qy) / d
                        x, y = qx + ux * radius, qy + uy * radius
                    else:
                        # center inside the rect: exit along the thinnest side
                        exits = [(x - s.xmin, -1.0, 0.0), (s.xmax - x, 1.0, 0.0),
                                 (y - s.ymin, 0.0, -1.0), (s.ymax - y, 0.0, 1.0)]
                        pen, ux, uy = min(exits)
                        x += ux * (pen + radius)
                        y += uy * (pen + radius)
                    if obs.id not in hits:
                        hits.append(obs.id)
                    moved = True
        if not moved:
            break
    return x, y, hits


def step_system_agent(pose: Pose, instruction: Instruction | None, dt: float,
                      config: SystemAgentConfig, world: World,
                      rng: np.random.Generator | None = None):
    """Advance one physics step under the active instruction.

    GoStraight translates at walking speed along the (noise-perturbed)
    heading; turns rotate in place; Wait/Stop/Arrived hold position. Motion
    into a static obstacle slides along the contact and reports the ids.
    """
    x, y, heading = pose.x, pose.y, pose.heading
    contacts: list[str] = []
    if instruction is Instruction.GO_STRAIGHT:
        if config.heading_noise_sigma > 0.0:
            if rng is None:
                raise ValueError("heading execution noise requires an rng")
            heading = wrap_angle(heading + rng.normal(0.0, config.heading_noise_sigma))
        x += config.speed_mps * dt * math.cos(heading)
        y += config.speed_mps * dt * math.sin(heading)
        x, y, contacts = _push_out_static(world, x, y, config.body_radius_m)
    elif instruction is Instruction.TURN_LEFT:
        heading = wrap_angle(heading + config.turn_rate_rps * dt)
    elif instruction is Instruction.TURN_RIGHT:
        heading = wrap_angle(heading - config.turn_rate_rps * dt)
    # Wait / Stop / Arrived / no instruction yet: hold position
    return Pose(x, y, heading), contacts


def _cane_scan(world: World, pose: Pose, config: BaselineAgentConfig, t: float):
    """Nearest entity surface within cane reach and sweep; (id, dist, rel bearing)."""
    best = None
    for obs in world.obstacles:
        s = obs.shape
        if isinstance(s, Disc):
            d = math.hypot(s.cx - pose.x, s.cy - pose.y) - s.radius
            bx, by = s.cx, s.cy
        else:
            qx, qy = closest_point_on_rect(pose.x, pose.y, s)
            d = math.hypot(qx - pose.x, qy - pose.y)
            bx, by = qx, qy
        rel = wrap_angle(math.atan2(by - pose.y, bx - pose.x) - pose.heading)
        if d <= config.cane_reach_m and abs(rel) <= config.cane_sweep_half_angle:
            if best is None or d < best[1]:
                best = (obs.id, d, rel)
    for did, (dx, dy), r, _cls in dynamic_positions(world, t):
        d = math.hypot(dx - pose.x, dy - pose.y) - r
        rel = wrap_angle(math.atan2(dy - pose.y, dx - pose.x) - pose.heading)
        if d <= config.cane_reach_m and abs(rel) <= config.cane_sweep_half_angle:
            if best is None or d < best[1]:
                best = (did, d, rel)
    return best


def step_baseline_agent(pose: Pose, world: World, t: float, dt: float,
                        config: BaselineAgentConfig, goal: tuple[float, float],
                        rng: np.random.Generator):
    """One step of the white-cane walker.

    Heads toward the goal bearing with heading noise; a cane detection turns
    the walker away from the detected side by a random 30-90 degrees (backing
    off when closer than the backoff distance). Never waits at lights.
    Returns (pose', cane-detected id or None, slide contact ids).
    """
    x, y, heading = pose.x, pose.y, pose.heading
    hit = _cane_scan(world, pose, config, t)
    step = config.speed_mps * dt
    if hit is not None:
        _id, d, rel = hit
        away = rng.uniform(config.turn_away_min, config.turn_away_max)
        if rel == 0.0:
            side = 1.0 if rng.random() < 0.5 else -1.0
        else:
            side = -math.copysign(1.0, rel)
        new_heading = wrap_angle(heading + side * away)
        if d < config.backoff_distance_m:
            # too close: retreat straight back before resuming
            x -= step * math.cos(heading)
            y -= step * math.sin(heading)
        else:
            x += step * math.cos(new_heading)
            y += step * math.sin(new_heading)
        heading = new_heading
    else:
        heading = math.atan2(goal[1] - y, goal[0] - x)
        if config.heading_noise_sigma > 0.0:
            heading += rng.normal(0.0, config.heading_noise_sigma)
        heading = wrap_angle(heading)
        x += step * math.cos(heading)
        y += step * math.sin(heading)
    x, y, contacts = _push_out_static(world, x, y, config.body_radius_m)
    cane_id = hit[0] if hit is not None else None
    return Pose(x, y, heading), cane_id, contacts


def _route_gated_by_red(world: World, pose: Pose, target: tuple[float, float],
                        t: float) -> bool:
    """True when the leg toward the current waypoint crosses a red-lit zebra.

    An agent already inside the zebra region is exempt (it should finish
    crossing, not stand in the roadway).
    """
    for light in world.lights:
        if light_phase(light, t) != RED:
            continue
        if light.zebra.contains(pose.x, pose.y):
            continue
        if segment_rect_intersects(pose.x, pose.y, target[0], target[1], light.zebra):
            return True
    return False


def _effective_light_states(world: World, pose: Pose, t: float):
    """Ground-truth phases, with red relaxed for a zebra the agent stands on."""
    states = []
    for light in world.lights:
        phase = light_phase(light, t)
        if phase == RED and light.zebra.contains(pose.x, pose.y):
            phase = GREEN
        states.append((light, phase))
    return states


@dataclass
class PipelineConfig:
    """Everything one system-agent planning tick needs."""

    camera: CameraConfig = field(default_factory=CameraConfig)
    depth_noise: DepthNoiseModel = field(default_factory=DepthNoiseModel)
    ultrasonic: UltrasonicArray = field(default_factory=UltrasonicArray)
    perception: "PerceptionConfig" = None  # type: ignore[assignment]
    planner: PlannerConfig = field(default_factory=PlannerConfig)

    def __post_init__(self):
        if self.perception is None:
            from .perception import PerceptionConfig
            self.perception = PerceptionConfig()


def plan_tick(world: World, pose: Pose, t: float, route: RouteSpec,
              cfg: PipelineConfig, rng: np.random.Generator):
    """One full perception + planning pass; returns (instruction, costmap, plan)."""
    depth = render_depth(world, pose, cfg.camera, t, cfg.depth_noise, rng)
    obs = observe_semantics(world, pose, cfg.perception, rng,
                            half_extent_m=cfg.planner.window_half_extent_m)
    dets = detect_objects(world, pose, cfg.camera, cfg.perception, t, rng)
    sonar = ping_ultrasonic(world, pose, cfg.ultrasonic, t)

    completed = None
    if dets and not depth.valid.all() and depth.valid.any():
        completed = complete_depth(depth)
    det_dists = [(d, distance_from_detection(d, depth, cfg.perception, completed))
                 for d in dets]
    estimates = fuse_obstacles(det_dists, sonar, cfg.ultrasonic, cfg.perception)

    light_states = _effective_light_states(world, pose, t)
    costmap = build_costmap(obs, estimates, light_states, cfg.planner, pose)
    start_cell = costmap.cell_of(pose.x, pose.y)
    clear_cell(costmap, start_cell[0], start_cell[1], cfg.planner)

    goal_cell = select_local_goal(route, pose, costmap, cfg.planner)
    wait_flag = _route_gated_by_red(world, pose, route.current(), t)
    plan = None
    if goal_cell is not None and not costmap.is_blocked(*start_cell):
        plan = astar(costmap, start_cell, goal_cell)
    instr = make_instruction(plan, pose, estimates, wait_flag, cfg.planner, world.goal)
    return instr, costmap, plan


def run_episode(world: World, waypoints: list[tuple[float, float]],
                pipeline: PipelineConfig, agent_cfg, schedule: TickSchedule,
                seed: int, agent: str = "system") -> EpisodeResult:
    """Execute one seeded closed-loop episode to success or timeout.

    The system agent replans every plan period and applies each instruction
    after its reaction latency; the baseline agent ignores the pipeline and
    walks by cane. Contact events open when a continuous body-overlap (or,
    for the baseline, cane-touch) interval starts.
    """
    if not waypoints:
        raise ConfigError("route must contain at least one waypoint")
    gx, gy = world.goal
    fx, fy = waypoints[-1]
    if math.hypot(fx - gx, fy - gy) > 1e-6:
        raise ConfigError("route must end at the world goal")
    if agent not in ("system", "baseline"):
        raise ConfigError(f"unknown agent kind {agent!r}")

    rng = np.random.default_rng(seed)
    pose = Pose(world.start.x, world.start.y, world.start.heading)
    route = RouteSpec(list(waypoints))
    dt = schedule.physics_step_s
    ticks_per_plan = schedule.ticks_per_plan
    max_ticks = int(round(schedule.max_time_s / dt))
    arrive = pipeline.planner.arrive_radius_m

    if agent == "system":
        latency_ticks = int(round(agent_cfg.reaction_latency_s / dt))
    body_radius = agent_cfg.body_radius_m

    trajectory = [(0.0, pose.x, pose.y, pose.heading)]
    contacts: list[tuple[float, str]] = []
    instructions: list[tuple[float, Instruction]] = []
    open_contacts: set[str] = set()
    distance = 0.0
    active: Instruction | None = None
    pending: tuple[int, Instruction] | None = None
    success = False
    elapsed = 0.0

    for i in range(max_ticks):
        t = i * dt
        cane_id = None
        if agent == "system":
            if i % ticks_per_plan == 0:
                t_plan = (i // ticks_per_plan) * schedule.plan_period_s
                instr, _cm, _plan = plan_tick(world, pose, t, route, pipeline, rng)
                instructions.append((t_plan, instr))
                pending = (i + latency_ticks, instr)
            if pending is not None and i >= pending[0]:
                active = pending[1]
                pending = None
            new_pose, slide_ids = step_system_agent(pose, active, dt, agent_cfg,
                                                    world, rng)
        else:
            new_pose, cane_id, slide_ids = step_baseline_agent(
                pose, world, t, dt, agent_cfg, world.goal, rng)

        t_next = (i + 1) * dt
        distance += math.hypot(new_pose.x - pose.x, new_pose.y - pose.y)
        pose = new_pose
        trajectory.append((t_next, pose.x, pose.y, pose.heading))

        touching = set(slide_ids)
        touching.update(collision_check(pose.x, pose.y, body_radius, world, t_next))
        if cane_id is not None:
            touching.add(cane_id)
        for eid in sorted(touching - open_contacts):
            contacts.append((t_next, eid))
        open_contacts = touching

        elapsed = t_next
        if math.hypot(pose.x - gx, pose.y - gy) <= arrive:
            success = True
            break

    avg_speed = distance / elapsed if elapsed > 0 else 0.0
    return EpisodeResult(success=success, elapsed_s=elapsed, trajectory=trajectory,
                         contacts=contacts, instructions=instructions,
                         distance_m=distance, avg_speed_mps=avg_speed,
                         seed=seed, agent=agent)
