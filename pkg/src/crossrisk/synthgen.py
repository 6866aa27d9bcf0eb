"""Deterministic synthetic intersection scenarios.

Generates observation streams plus ground truth (crossing times, awareness
annotations, risk labels) for a reference T-intersection layout: an 11 m
crosswalk along x with two vehicle lanes crossing it. Labels are always
computed from the realized sampled kinematics, never from generator intent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InfeasibleSpec, ManifestError
from .geometry import (
    AreaMap,
    PixelPoint,
    TargetLine,
    TileGrid,
    WorldPoint,
    first_crossing_time,
    locate_area,
    pedestrian_line_name,
    tile_from_anchors,
    vehicle_line_name,
)
from .predictors.dataset import Awareness, Reaction
from .risk import RiskLevel
from .stream import AgentCategory, Direction, Observation, infer_direction

# --- reference site layout ------------------------------------------------------

CROSSWALK_START_X = 0.0
CROSSWALK_CENTER_X = 5.5
CROSSWALK_END_X = 11.0
BAND_Y_LO, BAND_Y_HI = -1.0, 3.0   # vertical extent of the walking corridor
VEHICLE_ZONE_Y_HI = 28.0
LANE_A_X = 2.75    # straight lane through conflict area 3.1
LANE_B_X = 8.25    # curved approach into conflict area 3.2

# Generator-internal ground-truth labeling rules (not engine thresholds):
# realized |PET| below this marks a severe conflict, and a smoothed speed
# change of at least 30% against the approach baseline marks evasive action.
LABEL_PET_SEVERE_S = 1.5
LABEL_SPEED_CHANGE = 0.30
INTERACTION_HORIZON_S = 60.0


def _rect(x0: float, x1: float, y0: float, y1: float) -> tuple[WorldPoint, ...]:
    return (
        WorldPoint(x0, y0),
        WorldPoint(x1, y0),
        WorldPoint(x1, y1),
        WorldPoint(x0, y1),
    )


def reference_area_map() -> AreaMap:
    """Synthetic site: approach/react zones left and right, two conflict
    areas over the vehicle lanes, and vehicle approach zones above. The
    react zones are 7 m deep so even fast cyclists spend well over a second
    there; zone 4.2 extends east to cover the curved approach."""
    areas = {
        "1.1": _rect(-11.0, -7.0, BAND_Y_LO, BAND_Y_HI),
        "2.1": _rect(-7.0, CROSSWALK_START_X, BAND_Y_LO, BAND_Y_HI),
        "3.1": _rect(CROSSWALK_START_X, CROSSWALK_CENTER_X, BAND_Y_LO, BAND_Y_HI),
        "3.2": _rect(CROSSWALK_CENTER_X, CROSSWALK_END_X, BAND_Y_LO, BAND_Y_HI),
        "2.2": _rect(CROSSWALK_END_X, 18.0, BAND_Y_LO, BAND_Y_HI),
        "1.2": _rect(18.0, 22.0, BAND_Y_LO, BAND_Y_HI),
        "4.1": _rect(CROSSWALK_START_X, CROSSWALK_CENTER_X, BAND_Y_HI, VEHICLE_ZONE_Y_HI),
        "4.2": _rect(CROSSWALK_CENTER_X, 18.0, BAND_Y_HI, VEHICLE_ZONE_Y_HI),
    }

    def vline(x: float, nx: float) -> TargetLine:
        return TargetLine(WorldPoint(x, BAND_Y_LO), WorldPoint(x, BAND_Y_HI), (nx, 0.0))

    def hline(y: float, x0: float, x1: float) -> TargetLine:
        return TargetLine(WorldPoint(x0, y), WorldPoint(x1, y), (0.0, -1.0))

    lines = {
        pedestrian_line_name("ltr", 0): vline(CROSSWALK_START_X, 1.0),
        pedestrian_line_name("ltr", 1): vline(CROSSWALK_CENTER_X, 1.0),
        pedestrian_line_name("ltr", 2): vline(CROSSWALK_END_X, 1.0),
        pedestrian_line_name("rtl", 0): vline(CROSSWALK_END_X, -1.0),
        pedestrian_line_name("rtl", 1): vline(CROSSWALK_CENTER_X, -1.0),
        pedestrian_line_name("rtl", 2): vline(CROSSWALK_START_X, -1.0),
        vehicle_line_name("3.1", True): hline(BAND_Y_HI, CROSSWALK_START_X, CROSSWALK_CENTER_X),
        vehicle_line_name("3.1", False): hline(BAND_Y_LO, CROSSWALK_START_X, CROSSWALK_CENTER_X),
        vehicle_line_name("3.2", True): hline(BAND_Y_HI, CROSSWALK_CENTER_X, CROSSWALK_END_X),
        vehicle_line_name("3.2", False): hline(BAND_Y_LO, CROSSWALK_CENTER_X, CROSSWALK_END_X),
    }
    center = (WorldPoint(CROSSWALK_CENTER_X, BAND_Y_LO), WorldPoint(CROSSWALK_CENTER_X, BAND_Y_HI))
    return AreaMap(areas, lines, center)


# Synthetic oblique camera used to derive the reference pixel grid. Chosen so
# the whole site projects with positive homogeneous scale and visible extent.
_CAMERA_WORLD_TO_PIXEL = np.array(
    [
        [38.0, -9.0, 640.0],
        [2.0, -26.0, 820.0],
        [0.0, -0.011, 1.0],
    ]
)


def reference_tile_grid(
    x_range: tuple[float, float] = (-12.0, 24.0),
    y_range: tuple[float, float] = (-2.0, 4.0),
    tile_m: float = 2.0,
) -> TileGrid:
    """Tiled calibration of the synthetic camera: one projective map per
    tile_m x tile_m world square, solved from its four corner anchors."""
    tiles = []
    nx = int(round((x_range[1] - x_range[0]) / tile_m))
    ny = int(round((y_range[1] - y_range[0]) / tile_m))
    for iy in range(ny):
        for ix in range(nx):
            x0 = x_range[0] + ix * tile_m
            y0 = y_range[0] + iy * tile_m
            world = _rect(x0, x0 + tile_m, y0, y0 + tile_m)
            pixel = []
            for corner in world:
                vec = _CAMERA_WORLD_TO_PIXEL @ np.array([corner.x, corner.y, 1.0])
                pixel.append(PixelPoint(float(vec[0] / vec[2]), float(vec[1] / vec[2])))
            tiles.append(tile_from_anchors(tuple(pixel), world))
    return TileGrid(tuple(tiles))


def camera_pixel_of(p: WorldPoint) -> PixelPoint:
    """Project a world point through the synthetic camera (world -> pixel)."""
    vec = _CAMERA_WORLD_TO_PIXEL @ np.array([p.x, p.y, 1.0])
    return PixelPoint(float(vec[0] / vec[2]), float(vec[1] / vec[2]))


# --- scenario specification -----------------------------------------------------


@dataclass(frozen=True)
class ScenarioSpec:
    """Knobs of the deterministic scenario generator."""

    seed: int = 0
    duration_s: float = 120.0
    fps: int = 30
    n_adults: int = 12
    n_kids: int = 4
    n_cyclists: int = 4
    adult_crossing_s: float = 5.49
    kid_crossing_s: float = 5.36
    cyclist_crossing_s: float = 3.01
    crossing_jitter: float = 0.06       # relative sd of per-agent crossing duration
    speed_noise: float = 0.02           # per-frame relative forward-speed noise
    lateral_noise_m: float = 0.01       # detector-style lateral jitter
    kid_lateral_sigma: float = 0.06     # OU lateral drive, closer half
    kid_lateral_sigma_further: float = 0.12
    rtl_fraction: float = 0.5
    vehicle_rate_per_min: float = 3.0   # background arrivals per lane
    vehicle_speed_mps: float = 8.0
    vehicle_speed_sd: float = 1.0
    notice_probability: float = 0.36
    decelerate_probability: float = 0.8
    reaction_delay_s: tuple[float, float] = (0.4, 1.0)
    conflict_probability: float = 0.75  # pedestrians given a dedicated vehicle
    risky_fraction: float = 0.5         # of dedicated vehicles, tightly timed

    def __post_init__(self) -> None:
        object.__setattr__(self, "reaction_delay_s", tuple(self.reaction_delay_s))
        if self.fps != 30:
            raise InfeasibleSpec("frame rate is fixed at 30 FPS")
        if self.duration_s <= 0:
            raise InfeasibleSpec("duration must be positive")
        for name in ("adult_crossing_s", "kid_crossing_s", "cyclist_crossing_s",
                     "vehicle_speed_mps"):
            if getattr(self, name) <= 0:
                raise InfeasibleSpec(f"{name} must be positive")
        if min(self.n_adults, self.n_kids, self.n_cyclists) < 0:
            raise InfeasibleSpec("agent counts must be non-negative")
        if self.vehicle_rate_per_min < 0:
            raise InfeasibleSpec("vehicle rate must be non-negative")

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ScenarioSpec":
        known = {k: v for k, v in doc.items() if k in cls.__dataclass_fields__}
        unknown = set(doc) - set(known)
        if unknown:
            raise ManifestError(f"unknown scenario spec fields: {sorted(unknown)}")
        return cls(**known)

    @classmethod
    def load(cls, path: str) -> "ScenarioSpec":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
            raise ManifestError(f"cannot read scenario spec {path}: {exc}") from exc


# --- ground truth ---------------------------------------------------------------


@dataclass
class AgentTruth:
    category: AgentCategory
    direction: str | None = None            # "ltr"/"rtl" for pedestrians
    awareness: Awareness = Awareness.DID_NOT_NOTICE
    reaction: Reaction = Reaction.NONE
    crossing_times: dict[str, float] = field(default_factory=dict)
    conflict_area: str | None = None         # vehicles: served area


@dataclass
class GroundTruth:
    fps: int
    agents: dict[str, AgentTruth] = field(default_factory=dict)
    risk: dict[tuple[str, str], RiskLevel] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "fps": self.fps,
            "agents": {
                agent_id: {
                    "category": int(truth.category),
                    "direction": truth.direction,
                    "awareness": int(truth.awareness),
                    "reaction": int(truth.reaction),
                    "crossing_times": truth.crossing_times,
                    "conflict_area": truth.conflict_area,
                }
                for agent_id, truth in self.agents.items()
            },
            "risk": [
                {"ped_id": ped_id, "area": role, "level": int(level)}
                for (ped_id, role), level in self.risk.items()
            ],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "GroundTruth":
        truth = cls(fps=int(doc["fps"]))
        for agent_id, raw in doc["agents"].items():
            truth.agents[agent_id] = AgentTruth(
                category=AgentCategory(int(raw["category"])),
                direction=raw.get("direction"),
                awareness=Awareness(int(raw.get("awareness", 0))),
                reaction=Reaction(int(raw.get("reaction", 0))),
                crossing_times={k: float(v) for k, v in raw.get("crossing_times", {}).items()},
                conflict_area=raw.get("conflict_area"),
            )
        for entry in doc.get("risk", []):
            truth.risk[(entry["ped_id"], entry["area"])] = RiskLevel(int(entry["level"]))
        return truth

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "GroundTruth":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"cannot read ground truth {path}: {exc}") from exc


# --- vehicle paths --------------------------------------------------------------

_LANE_A_SPAWN_Y = 34.0
_LANE_A_EXIT_Y = -8.0
_LANE_B_ARC_RADIUS = 5.0
_LANE_B_ARC_CENTER = (LANE_B_X + _LANE_B_ARC_RADIUS, 8.25)
_LANE_B_SPAWN_X = 30.0
_LANE_B_EXIT_Y = -8.0


def _lane_a_position(distance: float) -> tuple[float, float]:
    """Straight north-to-south path through conflict area 3.1."""
    return (LANE_A_X, _LANE_A_SPAWN_Y - distance)


_LANE_B_LEG1 = _LANE_B_SPAWN_X - _LANE_B_ARC_CENTER[0]
_LANE_B_LEG2 = math.pi / 2 * _LANE_B_ARC_RADIUS


def _lane_b_position(distance: float) -> tuple[float, float]:
    """Westbound approach that arcs south into conflict area 3.2."""
    cx, cy = _LANE_B_ARC_CENTER
    if distance <= _LANE_B_LEG1:
        return (_LANE_B_SPAWN_X - distance, cy + _LANE_B_ARC_RADIUS)
    if distance <= _LANE_B_LEG1 + _LANE_B_LEG2:
        phi = math.pi / 2 + (distance - _LANE_B_LEG1) / _LANE_B_ARC_RADIUS
        return (cx + _LANE_B_ARC_RADIUS * math.cos(phi), cy + _LANE_B_ARC_RADIUS * math.sin(phi))
    return (LANE_B_X, cy - (distance - _LANE_B_LEG1 - _LANE_B_LEG2))


def _lane_distance_to_enter(lane: str) -> float:
    """Path length from spawn to the conflict-area entry line (y = 3)."""
    if lane == "A":
        return _LANE_A_SPAWN_Y - BAND_Y_HI
    return _LANE_B_LEG1 + _LANE_B_LEG2 + (_LANE_B_ARC_CENTER[1] - BAND_Y_HI)


def _lane_total_length(lane: str) -> float:
    if lane == "A":
        return _LANE_A_SPAWN_Y - _LANE_A_EXIT_Y
    return _LANE_B_LEG1 + _LANE_B_LEG2 + (_LANE_B_ARC_CENTER[1] - _LANE_B_EXIT_Y)


# --- generation -----------------------------------------------------------------


@dataclass
class _PedPlan:
    agent_id: str
    category: AgentCategory
    direction: Direction
    start_t: float
    start_x: float
    lane_y: float
    speed: float
    awareness: Awareness
    reaction: Reaction
    reaction_delay: float = 0.6


@dataclass
class _VehPlan:
    agent_id: str
    lane: str
    speed: float
    spawn_t: float


def _plan_pedestrians(spec: ScenarioSpec, rng: np.random.Generator) -> list[_PedPlan]:
    plans: list[_PedPlan] = []
    specs = (
        [(AgentCategory.ADULT, spec.adult_crossing_s)] * spec.n_adults
        + [(AgentCategory.KID, spec.kid_crossing_s)] * spec.n_kids
        + [(AgentCategory.CYCLIST, spec.cyclist_crossing_s)] * spec.n_cyclists
    )
    walk_span = 34.0  # spawn margin to exit margin
    for idx, (category, target_s) in enumerate(specs):
        duration = target_s * max(0.5, 1.0 + spec.crossing_jitter * rng.standard_normal())
        speed = (CROSSWALK_END_X - CROSSWALK_START_X) / duration
        total_time = walk_span / speed + 2.0
        latest = max(1.0, spec.duration_s - total_time)
        start_t = float(rng.uniform(0.5, latest))
        rtl = rng.uniform() < spec.rtl_fraction
        direction = Direction.RIGHT_TO_LEFT if rtl else Direction.LEFT_TO_RIGHT
        start_x = float(rng.uniform(20.0, 21.0)) if rtl else float(rng.uniform(-10.0, -9.0))
        noticed = rng.uniform() < spec.notice_probability
        if noticed:
            decel = rng.uniform() < spec.decelerate_probability
            reaction = Reaction.DECELERATE if decel else Reaction.ACCELERATE
            awareness = Awareness.NOTICED
        else:
            awareness = Awareness.DID_NOT_NOTICE
            reaction = Reaction.NONE
        plans.append(
            _PedPlan(
                agent_id=f"p{idx:03d}",
                category=category,
                direction=direction,
                start_t=start_t,
                start_x=start_x,
                lane_y=float(rng.uniform(0.7, 1.3)),
                speed=speed,
                awareness=awareness,
                reaction=reaction,
                reaction_delay=float(rng.uniform(*spec.reaction_delay_s)),
            )
        )
    return plans


def _planned_occupancy(plan: _PedPlan, area: str) -> tuple[float, float]:
    """When the no-reaction plan enters and leaves a conflict area."""
    if plan.direction is Direction.LEFT_TO_RIGHT:
        edges = {
            "3.1": (CROSSWALK_START_X, CROSSWALK_CENTER_X),
            "3.2": (CROSSWALK_CENTER_X, CROSSWALK_END_X),
        }[area]
        enter = plan.start_t + (edges[0] - plan.start_x) / plan.speed
        leave = plan.start_t + (edges[1] - plan.start_x) / plan.speed
    else:
        edges = {
            "3.2": (CROSSWALK_END_X, CROSSWALK_CENTER_X),
            "3.1": (CROSSWALK_CENTER_X, CROSSWALK_START_X),
        }[area]
        enter = plan.start_t + (plan.start_x - edges[0]) / plan.speed
        leave = plan.start_t + (plan.start_x - edges[1]) / plan.speed
    return enter, leave


def _schedule_vehicles(
    spec: ScenarioSpec, plans: Sequence[_PedPlan], rng: np.random.Generator
) -> list[_VehPlan]:
    vehicles: list[_VehPlan] = []
    counter = 0

    def add(lane: str, enter_t: float, speed: float) -> None:
        nonlocal counter
        spawn_t = enter_t - _lane_distance_to_enter(lane) / speed
        if spawn_t < 0:
            return
        vehicles.append(_VehPlan(f"v{counter:03d}", lane, speed, spawn_t))
        counter += 1

    # dedicated vehicles timed against each pedestrian's no-reaction plan
    for plan in plans:
        if rng.uniform() > spec.conflict_probability:
            continue
        area = "3.1" if rng.uniform() < 0.5 else "3.2"
        lane = "A" if area == "3.1" else "B"
        speed = float(np.clip(rng.normal(spec.vehicle_speed_mps, spec.vehicle_speed_sd), 5.0, 12.0))
        enter, leave = _planned_occupancy(plan, area)
        transit = (BAND_Y_HI - BAND_Y_LO) / speed
        if rng.uniform() < spec.risky_fraction:
            enter_t = float(rng.uniform(enter - 0.4, leave + 1.2))
        elif rng.uniform() < 0.5:
            enter_t = leave + float(rng.uniform(2.5, 5.5))          # pedestrian first, wide gap
        else:
            enter_t = enter - transit - float(rng.uniform(2.5, 5.5))  # vehicle first, wide gap
        add(lane, enter_t, speed)

    # background traffic
    for lane in ("A", "B"):
        if spec.vehicle_rate_per_min <= 0:
            continue
        t = float(rng.exponential(60.0 / spec.vehicle_rate_per_min))
        while t < spec.duration_s:
            speed = float(np.clip(rng.normal(spec.vehicle_speed_mps, spec.vehicle_speed_sd), 5.0, 12.0))
            add(lane, t, speed)
            t += float(rng.exponential(60.0 / spec.vehicle_rate_per_min))
    return vehicles


def _simulate_vehicle(
    plan: _VehPlan, spec: ScenarioSpec
) -> list[Observation]:
    dt = 1.0 / spec.fps
    category = AgentCategory.VEHICLE_AREA_41 if plan.lane == "A" else AgentCategory.VEHICLE_AREA_42
    total = _lane_total_length(plan.lane)
    first_frame = max(0, int(math.ceil(plan.spawn_t * spec.fps)))
    out = []
    frame = first_frame
    while True:
        t = frame * dt
        if t > spec.duration_s:
            break
        distance = (t - plan.spawn_t) * plan.speed
        if distance > total:
            break
        x, y = _lane_a_position(distance) if plan.lane == "A" else _lane_b_position(distance)
        out.append(Observation(frame, t, plan.agent_id, category, WorldPoint(x, y)))
        frame += 1
    return out


def _vehicle_threat_times(
    vehicles: Sequence[_VehPlan], spec: ScenarioSpec
) -> dict[str, tuple[str, float, float]]:
    """veh_id -> (area, enter_t, leave_t) under the constant-speed plan."""
    out = {}
    for plan in vehicles:
        enter_t = plan.spawn_t + _lane_distance_to_enter(plan.lane) / plan.speed
        leave_t = enter_t + (BAND_Y_HI - BAND_Y_LO) / plan.speed
        area = "3.1" if plan.lane == "A" else "3.2"
        out[plan.agent_id] = (area, enter_t, leave_t)
    return out


def _simulate_pedestrian(
    plan: _PedPlan,
    spec: ScenarioSpec,
    threats: Mapping[str, tuple[str, float, float]],
    rng: np.random.Generator,
) -> list[Observation]:
    """Frame-by-frame walk with lateral jitter and (for aware pedestrians)
    a reaction when a vehicle is about to occupy the area ahead of them."""
    dt = 1.0 / spec.fps
    sign = 1.0 if plan.direction is Direction.LEFT_TO_RIGHT else -1.0
    x = plan.start_x
    lateral = 0.0
    speed = plan.speed
    target_speed = plan.speed
    exit_x = 22.3 if sign > 0 else -11.3
    first_frame = max(0, int(math.ceil(plan.start_t * spec.fps)))
    reacting = False
    react_at = None  # threat noticed, reaction pending after human latency
    release_t = 0.0
    pending_release = 0.0
    out = []
    frame = first_frame
    while True:
        t = frame * dt
        if t > spec.duration_s:
            break
        if (sign > 0 and x > exit_x) or (sign < 0 and x < exit_x):
            break

        if plan.awareness is Awareness.NOTICED and not reacting and react_at is None:
            # reactions happen in the react zone and beyond, never while the
            # pedestrian is still approaching through Area 1
            if sign > 0:
                facing_area = "3.1" if x < CROSSWALK_CENTER_X else "3.2"
                in_react_zone = -7.0 <= x < CROSSWALK_END_X
            else:
                facing_area = "3.2" if x > CROSSWALK_CENTER_X else "3.1"
                in_react_zone = CROSSWALK_START_X < x <= 18.0
            if in_react_zone:
                for area, enter_t, leave_t in threats.values():
                    if area != facing_area:
                        continue
                    if enter_t - 3.0 <= t <= leave_t + 0.5:
                        react_at = t + plan.reaction_delay
                        pending_release = leave_t + 0.3
                        break
        if react_at is not None and not reacting and t >= react_at:
            reacting = True
            # factors chosen well past the 30% labeling cutoff so a smoothed
            # speed profile still registers the evasive action
            if plan.reaction is Reaction.DECELERATE:
                target_speed = 0.2 * plan.speed
            else:
                target_speed = 1.5 * plan.speed
            release_t = max(pending_release, react_at + 0.5)
        if reacting and t >= release_t:
            reacting = False
            react_at = None
            target_speed = plan.speed

        # first-order speed lag plus small forward noise
        speed += (target_speed - speed) * min(1.0, dt / 0.35)
        step_speed = speed * (1.0 + spec.speed_noise * rng.standard_normal())
        x += sign * max(0.0, step_speed) * dt

        in_further = x > CROSSWALK_CENTER_X if sign > 0 else x < CROSSWALK_CENTER_X
        if plan.category is AgentCategory.KID:
            sigma = spec.kid_lateral_sigma_further if in_further else spec.kid_lateral_sigma
            lateral += -1.8 * lateral * dt + sigma * math.sqrt(dt) * rng.standard_normal()
            lateral = float(np.clip(lateral, -0.65, 0.65))
        y = plan.lane_y + lateral + spec.lateral_noise_m * rng.standard_normal()
        out.append(Observation(frame, t, plan.agent_id, plan.category, WorldPoint(x, y)))
        frame += 1
    return out


def _trajectory_arrays(trajectory: Sequence[Observation]) -> tuple[np.ndarray, np.ndarray]:
    positions = np.array([[o.position.x, o.position.y] for o in trajectory])
    times = np.array([o.t for o in trajectory])
    return positions, times


def _pedestrian_crossing_times(
    trajectory: Sequence[Observation], area_map: AreaMap, direction: Direction
) -> dict[str, float]:
    positions, times = _trajectory_arrays(trajectory)
    out = {}
    for q in (0, 1, 2):
        line = area_map.line(pedestrian_line_name(direction.value, q))
        t_cross = first_crossing_time(positions, times, line)
        if t_cross is not None:
            out[f"q{q}"] = t_cross
    return out


def _vehicle_crossing_times(
    trajectory: Sequence[Observation], area_map: AreaMap, area: str
) -> dict[str, float]:
    positions, times = _trajectory_arrays(trajectory)
    out = {}
    for key, enter in (("enter", True), ("leave", False)):
        t_cross = first_crossing_time(positions, times, area_map.line(vehicle_line_name(area, enter)))
        if t_cross is not None:
            out[key] = t_cross
    return out


def _realized_pet(
    ped_window: tuple[float, float], veh_window: tuple[float, float]
) -> float:
    """Realized post-encroachment gap; 0 when occupancies overlap."""
    ped_enter, ped_leave = ped_window
    veh_enter, veh_leave = veh_window
    if veh_enter >= ped_leave:
        return veh_enter - ped_leave
    if ped_enter >= veh_leave:
        return ped_enter - veh_leave
    return 0.0


def label_risk(
    trajectories: Mapping[str, Sequence[Observation]],
    area_map: AreaMap,
    fps: int = 30,
) -> dict[tuple[str, str], RiskLevel]:
    """Ground-truth risk per (pedestrian, closer/further area) from realized
    kinematics.

    Risk 0 when no vehicle crosses the area within the interaction horizon;
    Risk 2 when the realized |PET| is under the severe cutoff or the
    pedestrian took an evasive speed change with a vehicle around; else
    Risk 1.
    """
    vehicle_windows: dict[str, list[tuple[str, float, float]]] = {"3.1": [], "3.2": []}
    for agent_id, trajectory in trajectories.items():
        category = trajectory[0].category
        if not category.is_vehicle:
            continue
        area = category.conflict_area
        times = _vehicle_crossing_times(trajectory, area_map, area)
        if "enter" in times and "leave" in times:
            vehicle_windows[area].append((agent_id, times["enter"], times["leave"]))

    labels: dict[tuple[str, str], RiskLevel] = {}
    for agent_id, trajectory in trajectories.items():
        category = trajectory[0].category
        if not category.is_pedestrian:
            continue
        direction = infer_direction(trajectory)
        if direction is Direction.UNKNOWN:
            continue
        crossing = _pedestrian_crossing_times(trajectory, area_map, direction)
        if not all(k in crossing for k in ("q0", "q1", "q2")):
            continue
        closer, further = ("3.1", "3.2") if direction is Direction.LEFT_TO_RIGHT else ("3.2", "3.1")
        occupancy = {
            "closer": (crossing["q0"], crossing["q1"]),
            "further": (crossing["q1"], crossing["q2"]),
        }
        area_of_role = {"closer": closer, "further": further}

        evasive = _took_evasive_action(trajectory, area_map, fps)
        min_pet: dict[str, float | None] = {}
        for role in ("closer", "further"):
            ped_window = occupancy[role]
            pets = [
                _realized_pet(ped_window, (enter, leave))
                for _, enter, leave in vehicle_windows[area_of_role[role]]
                if enter <= ped_window[1] + INTERACTION_HORIZON_S
                and leave >= ped_window[0] - INTERACTION_HORIZON_S
            ]
            min_pet[role] = min((abs(p) for p in pets), default=None)

        evasive_role = None
        if evasive:
            candidates = [r for r in ("closer", "further") if min_pet[r] is not None]
            if candidates:
                evasive_role = min(candidates, key=lambda r: (min_pet[r], r != "closer"))
        for role in ("closer", "further"):
            if min_pet[role] is None:
                labels[(agent_id, role)] = RiskLevel.RISK0
            elif min_pet[role] < LABEL_PET_SEVERE_S or role == evasive_role:
                labels[(agent_id, role)] = RiskLevel.RISK2
            else:
                labels[(agent_id, role)] = RiskLevel.RISK1
    return labels


def _took_evasive_action(
    trajectory: Sequence[Observation], area_map: AreaMap, fps: int
) -> bool:
    """Detect a sustained >= 30% smoothed speed change against the approach
    baseline while the pedestrian was in the react or conflict zones."""
    if len(trajectory) < fps * 2:
        return False
    positions, times = _trajectory_arrays(trajectory)
    speed = np.hypot(*np.diff(positions, axis=0).T) / np.diff(times)
    kernel = np.ones(10) / 10.0
    smooth = np.convolve(speed, kernel, mode="valid")
    # indices of smoothed samples roughly align with trajectory[9:]
    areas = [locate_area(area_map, o.position) for o in trajectory[9:-1]]
    baseline_n = min(len(smooth), int(1.5 * fps))
    baseline = float(np.median(smooth[:baseline_n]))
    if baseline <= 0:
        return False
    active = np.array([a is not None and a.startswith(("2.", "3.")) for a in areas[: len(smooth)]])
    if not np.any(active):
        return False
    lo = float(np.min(smooth[active]))
    hi = float(np.max(smooth[active]))
    return lo < (1.0 - LABEL_SPEED_CHANGE) * baseline or hi > (1.0 + LABEL_SPEED_CHANGE) * baseline


def generate(spec: ScenarioSpec) -> tuple[dict[int, list[Observation]], GroundTruth]:
    """Produce the observation stream and its ground truth.

    Deterministic for a given seed: pedestrians, vehicles and noise each draw
    from their own child generator of the spec seed.
    """
    root = np.random.SeedSequence(spec.seed)
    plan_seed, veh_seed, walk_seed = root.spawn(3)
    plan_rng = np.random.default_rng(plan_seed)
    veh_rng = np.random.default_rng(veh_seed)

    ped_plans = _plan_pedestrians(spec, plan_rng)
    veh_plans = _schedule_vehicles(spec, ped_plans, veh_rng)
    threats = _vehicle_threat_times(veh_plans, spec)
    area_map = reference_area_map()

    trajectories: dict[str, list[Observation]] = {}
    walk_rngs = walk_seed.spawn(len(ped_plans))
    for plan, child in zip(ped_plans, walk_rngs):
        trajectory = _simulate_pedestrian(plan, spec, threats, np.random.default_rng(child))
        if trajectory:
            trajectories[plan.agent_id] = trajectory
    for plan in veh_plans:
        trajectory = _simulate_vehicle(plan, spec)
        if trajectory:
            trajectories[plan.agent_id] = trajectory

    truth = GroundTruth(fps=spec.fps)
    for plan in ped_plans:
        trajectory = trajectories.get(plan.agent_id)
        if not trajectory:
            continue
        direction = infer_direction(trajectory)
        truth.agents[plan.agent_id] = AgentTruth(
            category=plan.category,
            direction=direction.value if direction is not Direction.UNKNOWN else None,
            awareness=plan.awareness,
            reaction=plan.reaction,
            crossing_times=(
                _pedestrian_crossing_times(trajectory, area_map, direction)
                if direction is not Direction.UNKNOWN
                else {}
            ),
        )
    for plan in veh_plans:
        trajectory = trajectories.get(plan.agent_id)
        if not trajectory:
            continue
        area = "3.1" if plan.lane == "A" else "3.2"
        truth.agents[plan.agent_id] = AgentTruth(
            category=trajectory[0].category,
            crossing_times=_vehicle_crossing_times(trajectory, area_map, area),
            conflict_area=area,
        )

    truth.risk = label_risk(trajectories, area_map, spec.fps)

    frames: dict[int, list[Observation]] = {}
    for agent_id in sorted(trajectories):
        for obs in trajectories[agent_id]:
            frames.setdefault(obs.frame, []).append(obs)
    return frames, truth
