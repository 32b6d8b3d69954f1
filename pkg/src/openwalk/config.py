"""Parsing and serialization of the ``openwalk-config/1`` document: sensor,
perception, planner, agent, and schedule blocks, plus the no-noise transform
used by reproducibility runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .agents import (BaselineAgentConfig, ConfigError, PipelineConfig,
                     SystemAgentConfig, TickSchedule)
from .perception import PerceptionConfig
from .planner import BLOCKED, PlannerConfig
from .sensors import CameraConfig, DepthNoiseModel, UltrasonicArray
from .world import SemanticClass

CONFIG_SCHEMA = "openwalk-config/1"

_CLASS_KEYS = {
    SemanticClass.BLIND_TRACK: "blind_track",
    SemanticClass.SIDEWALK: "sidewalk",
    SemanticClass.ZEBRA_CROSSING: "zebra_crossing",
    SemanticClass.ROADWAY: "roadway",
    SemanticClass.OBSTACLE_FIXED: "obstacle_fixed",
    SemanticClass.OFF_MAP: "off_map",
}
_KEY_CLASSES = {v: k for k, v in _CLASS_KEYS.items()}


@dataclass
class SimulationConfig:
    """Complete per-episode configuration bundle."""

    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    system: SystemAgentConfig = field(default_factory=SystemAgentConfig)
    baseline: BaselineAgentConfig = field(default_factory=BaselineAgentConfig)
    schedule: TickSchedule = field(default_factory=TickSchedule)
    gps_sigma_m: float = 0.0
    seed: int = 0

    def without_noise(self) -> "SimulationConfig":
        """Copy with every stochastic knob zeroed (runs consume no rng draws,
        except the baseline agent's behavioral turn-away draws)."""
        pipeline = PipelineConfig(
            camera=self.pipeline.camera,
            depth_noise=DepthNoiseModel(dropout_p=0.0, hole_count=0),
            ultrasonic=self.pipeline.ultrasonic,
            perception=replace(self.pipeline.perception, mislabel_e=0.0,
                               miss_rate=0.0, miss_rates={}),
            planner=self.pipeline.planner,
        )
        return SimulationConfig(
            pipeline=pipeline,
            system=replace(self.system, heading_noise_sigma=0.0),
            baseline=replace(self.baseline, heading_noise_sigma=0.0),
            schedule=self.schedule,
            gps_sigma_m=0.0,
            seed=self.seed,
        )


def _cost_to_json(v: float):
    return "blocked" if math.isinf(v) else v


def _cost_from_json(v) -> float:
    if v == "blocked" or v is None:
        return BLOCKED
    return float(v)


def config_to_dict(cfg: SimulationConfig) -> dict:
    cam = cfg.pipeline.camera
    noise = cfg.pipeline.depth_noise
    us = cfg.pipeline.ultrasonic
    per = cfg.pipeline.perception
    pl = cfg.pipeline.planner
    return {
        "schema": CONFIG_SCHEMA,
        "sensors": {
            "camera": {
                "width": cam.width, "height": cam.height,
                "fov_deg": math.degrees(cam.fov_rad),
                "min_m": cam.min_m, "max_m": cam.max_m,
                "dropout_p": noise.dropout_p,
                "holes": {"count": noise.hole_count, "radius_px": noise.hole_radius_px},
            },
            "ultrasonic": {
                "headings_deg": [math.degrees(h) for h in us.headings],
                "half_angle_deg": math.degrees(us.half_angle),
                "max_m": us.max_m,
            },
            "gps": {"sigma_m": cfg.gps_sigma_m},
            "seed": cfg.seed,
        },
        "perception": {
            "mislabel_e": per.mislabel_e,
            "miss_rate": per.miss_rate,
            "miss_rates": dict(per.miss_rates),
            "detection_max_m": per.detection_max_m,
            "bearing_tol_deg": math.degrees(per.bearing_tol_rad),
            "bbox_inner_fraction": per.bbox_inner_fraction,
            "min_valid_fraction": per.min_valid_fraction,
        },
        "planner": {
            "class_costs": {_CLASS_KEYS[c]: _cost_to_json(v)
                            for c, v in pl.class_costs.items()},
            "inflation_radius_m": pl.inflation_radius_m,
            "inflated_cost": pl.inflated_cost,
            "window_half_extent_m": pl.window_half_extent_m,
            "replan_period_s": pl.replan_period_s,
            "straight_threshold_deg": math.degrees(pl.straight_threshold_rad),
            "stop_distance_m": pl.stop_distance_m,
            "arrive_radius_m": pl.arrive_radius_m,
            "footprint_radius_m": pl.footprint_radius_m,
            "lookahead_m": pl.lookahead_m,
        },
        "agent": {
            "system": {
                "speed_mps": cfg.system.speed_mps,
                "turn_rate_rps": cfg.system.turn_rate_rps,
                "reaction_latency_s": cfg.system.reaction_latency_s,
                "body_radius_m": cfg.system.body_radius_m,
                "heading_noise_sigma": cfg.system.heading_noise_sigma,
            },
            "baseline": {
                "cane_reach_m": cfg.baseline.cane_reach_m,
                "cane_sweep_half_angle_deg": math.degrees(cfg.baseline.cane_sweep_half_angle),
                "speed_mps": cfg.baseline.speed_mps,
                "backoff_distance_m": cfg.baseline.backoff_distance_m,
                "heading_noise_sigma": cfg.baseline.heading_noise_sigma,
                "body_radius_m": cfg.baseline.body_radius_m,
            },
        },
        "schedule": {
            "physics_step_s": cfg.schedule.physics_step_s,
            "plan_period_s": cfg.schedule.plan_period_s,
            "max_time_s": cfg.schedule.max_time_s,
        },
    }


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def config_from_dict(doc: dict, base: SimulationConfig | None = None) -> SimulationConfig:
    """Build a SimulationConfig from a (possibly partial) document.

    Block values override the base configuration (package defaults when base
    is None). Raises ConfigError on malformed values.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    schema = doc.get("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise ConfigError(f"config schema: expected {CONFIG_SCHEMA!r}, got {schema!r}")
    merged = _merge(config_to_dict(base or SimulationConfig()), doc)
    try:
        sensors = merged["sensors"]
        cam = sensors["camera"]
        camera = CameraConfig(width=int(cam["width"]), height=int(cam["height"]),
                              fov_rad=math.radians(float(cam["fov_deg"])),
                              min_m=float(cam["min_m"]), max_m=float(cam["max_m"]))
        holes = cam.get("holes", {})
        noise = DepthNoiseModel(dropout_p=float(cam.get("dropout_p", 0.0)),
                                hole_count=int(holes.get("count", 0)),
                                hole_radius_px=int(holes.get("radius_px", 3)))
        usd = sensors["ultrasonic"]
        ultrasonic = UltrasonicArray(
            headings=tuple(math.radians(float(a)) for a in usd["headings_deg"]),
            half_angle=math.radians(float(usd["half_angle_deg"])),
            max_m=float(usd["max_m"]))
        perd = merged["perception"]
        perception = PerceptionConfig(
            mislabel_e=float(perd["mislabel_e"]),
            miss_rate=float(perd["miss_rate"]),
            miss_rates={str(k): float(v) for k, v in perd.get("miss_rates", {}).items()},
            detection_max_m=float(perd["detection_max_m"]),
            bearing_tol_rad=math.radians(float(perd["bearing_tol_deg"])),
            bbox_inner_fraction=float(perd["bbox_inner_fraction"]),
            min_valid_fraction=float(perd["min_valid_fraction"]),
            window_half_extent_m=float(merged["planner"]["window_half_extent_m"]))
        pld = merged["planner"]
        class_costs = {_KEY_CLASSES[k]: _cost_from_json(v)
                       for k, v in pld["class_costs"].items()}
        for cls in SemanticClass:
            class_costs.setdefault(cls, PlannerConfig().class_costs[cls])
        planner = PlannerConfig(
            class_costs=class_costs,
            inflation_radius_m=float(pld["inflation_radius_m"]),
            inflated_cost=float(pld["inflated_cost"]),
            window_half_extent_m=float(pld["window_half_extent_m"]),
            replan_period_s=float(pld["replan_period_s"]),
            straight_threshold_rad=math.radians(float(pld["straight_threshold_deg"])),
            stop_distance_m=float(pld["stop_distance_m"]),
            arrive_radius_m=float(pld["arrive_radius_m"]),
            footprint_radius_m=float(pld["footprint_radius_m"]),
            lookahead_m=float(pld["lookahead_m"]))
        agd = merged["agent"]
        system = SystemAgentConfig(
            speed_mps=float(agd["system"]["speed_mps"]),
            turn_rate_rps=float(agd["system"]["turn_rate_rps"]),
            reaction_latency_s=float(agd["system"]["reaction_latency_s"]),
            body_radius_m=float(agd["system"]["body_radius_m"]),
            heading_noise_sigma=float(agd["system"]["heading_noise_sigma"]))
        bsd = agd["baseline"]
        baseline = BaselineAgentConfig(
            cane_reach_m=float(bsd["cane_reach_m"]),
            cane_sweep_half_angle=math.radians(float(bsd["cane_sweep_half_angle_deg"])),
            speed_mps=float(bsd["speed_mps"]),
            backoff_distance_m=float(bsd["backoff_distance_m"]),
            heading_noise_sigma=float(bsd["heading_noise_sigma"]),
            body_radius_m=float(bsd["body_radius_m"]))
        scd = merged["schedule"]
        schedule = TickSchedule(physics_step_s=float(scd["physics_step_s"]),
                                plan_period_s=float(scd["plan_period_s"]),
                                max_time_s=float(scd["max_time_s"]))
        return SimulationConfig(
            pipeline=PipelineConfig(camera=camera, depth_noise=noise,
                                    ultrasonic=ultrasonic, perception=perception,
                                    planner=planner),
            system=system, baseline=baseline, schedule=schedule,
            gps_sigma_m=float(sensors["gps"]["sigma_m"]),
            seed=int(sensors.get("seed", 0)))
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"malformed config document: {e!r}") from e
