"""Streaming risk evaluation: threshold tests on predicted post-encroachment
times, per-area counters, and severe-risk scenario emission.

step_evaluate mutates one pedestrian's counters and must be called
frame-serialized per pedestrian; distinct pedestrians share only the
immutable config and can be evaluated concurrently within a frame.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Mapping, Sequence

import numpy as np

from .errors import ManifestError, MissingThreshold
from .geometry import WorldPoint
from .ppet import ConflictScenario, PPetVector
from .stream import AgentCategory, PedestrianState


class AreaRole(Enum):
    CLOSER = "closer"
    FURTHER = "further"
    MERGED = "merged"


class ThresholdMode(Enum):
    PER_AREA = "per_area"
    MERGED_AREA = "merged_area"


class RiskLevel(IntEnum):
    RISK0 = 0
    RISK1 = 1
    RISK2 = 2


@dataclass(frozen=True)
class ThresholdInterval:
    """Closed interval [alpha, beta] in seconds."""

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError("interval bounds must be finite")
        if self.alpha > self.beta:
            raise ValueError(f"alpha {self.alpha} must be <= beta {self.beta}")

    def contains(self, value: float) -> bool:
        return self.alpha <= value <= self.beta

    @property
    def width(self) -> float:
        return self.beta - self.alpha


@dataclass(frozen=True)
class CategoryThresholds:
    """Intervals and counter limits for one pedestrian category."""

    mode: ThresholdMode
    intervals: Mapping[tuple[AreaRole, ConflictScenario], ThresholdInterval]
    counters: Mapping[AreaRole, int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "intervals", dict(self.intervals))
        object.__setattr__(self, "counters", dict(self.counters))
        roles = (
            (AreaRole.CLOSER, AreaRole.FURTHER)
            if self.mode is ThresholdMode.PER_AREA
            else (AreaRole.MERGED,)
        )
        for role in roles:
            for scenario in ConflictScenario:
                if (role, scenario) not in self.intervals:
                    raise ValueError(f"missing interval for ({role.value}, {scenario.value})")
            if role not in self.counters:
                raise ValueError(f"missing counter limit for {role.value}")
        for limit in self.counters.values():
            if limit < 1:
                raise ValueError("counter limits must be >= 1")

    def interval(self, role: AreaRole, scenario: ConflictScenario) -> ThresholdInterval:
        try:
            return self.intervals[(role, scenario)]
        except KeyError:
            raise MissingThreshold(
                f"no interval for area {role.value}, scenario {scenario.value}"
            ) from None

    def counter_limit(self, role: AreaRole) -> int:
        try:
            return self.counters[role]
        except KeyError:
            raise MissingThreshold(f"no counter limit for area {role.value}") from None


@dataclass(frozen=True)
class RiskThresholdConfig:
    """Per-category thresholds; categories may mix per-area and merged modes."""

    categories: Mapping[AgentCategory, CategoryThresholds]

    def __post_init__(self) -> None:
        object.__setattr__(self, "categories", dict(self.categories))

    def for_category(self, category: AgentCategory) -> CategoryThresholds:
        try:
            return self.categories[category]
        except KeyError:
            raise MissingThreshold(f"no thresholds for category {int(category)}") from None

    @classmethod
    def default(cls) -> "RiskThresholdConfig":
        """Shipped defaults: per-area intervals for adults and cyclists, a
        single merged range for kids (better recall on erratic movers)."""
        pf, vf = ConflictScenario.PEDESTRIAN_FIRST, ConflictScenario.VEHICLE_FIRST
        closer, further, merged = AreaRole.CLOSER, AreaRole.FURTHER, AreaRole.MERGED
        adult = CategoryThresholds(
            ThresholdMode.PER_AREA,
            {
                (closer, pf): ThresholdInterval(-0.7, 0.1),
                (closer, vf): ThresholdInterval(0.1, 1.1),
                (further, pf): ThresholdInterval(-2.5, -1.5),
                (further, vf): ThresholdInterval(0.9, 2.4),
            },
            {closer: 3, further: 3},
        )
        cyclist = CategoryThresholds(
            ThresholdMode.PER_AREA,
            {
                (closer, pf): ThresholdInterval(-3.0, -2.6),
                (closer, vf): ThresholdInterval(1.4, 2.0),
                (further, pf): ThresholdInterval(-0.6, 0.2),
                (further, vf): ThresholdInterval(0.6, 1.6),
            },
            {closer: 5, further: 3},
        )
        kid = CategoryThresholds(
            ThresholdMode.MERGED_AREA,
            {
                (merged, pf): ThresholdInterval(-3.3, -3.1),
                (merged, vf): ThresholdInterval(1.0, 1.5),
            },
            {merged: 3},
        )
        return cls(
            {
                AgentCategory.ADULT: adult,
                AgentCategory.KID: kid,
                AgentCategory.CYCLIST: cyclist,
            }
        )

    # -- serialization -----------------------------------------------------------

    def to_dict(self) -> dict:
        doc: dict = {"categories": {}}
        for category, spec in sorted(self.categories.items(), key=lambda kv: int(kv[0])):
            intervals: dict = {}
            for (role, scenario), interval in spec.intervals.items():
                intervals.setdefault(role.value, {})[scenario.value] = [interval.alpha, interval.beta]
            doc["categories"][str(int(category))] = {
                "mode": spec.mode.value,
                "intervals": intervals,
                "counters": {role.value: limit for role, limit in spec.counters.items()},
            }
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping) -> "RiskThresholdConfig":
        categories = {}
        for key, raw in doc["categories"].items():
            intervals = {}
            for role_name, scenarios in raw["intervals"].items():
                for scenario_name, bounds in scenarios.items():
                    intervals[(AreaRole(role_name), ConflictScenario(scenario_name))] = (
                        ThresholdInterval(float(bounds[0]), float(bounds[1]))
                    )
            counters = {AreaRole(role): int(limit) for role, limit in raw["counters"].items()}
            categories[AgentCategory(int(key))] = CategoryThresholds(
                ThresholdMode(raw["mode"]), intervals, counters
            )
        return cls(categories)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "RiskThresholdConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"cannot read threshold config {path}: {exc}") from exc


@dataclass(frozen=True)
class RiskScenario:
    """Snapshot emitted when a pedestrian is flagged severe (Risk 2)."""

    ped_id: str
    ped_position: WorldPoint
    veh_id: str
    veh_position: WorldPoint
    t: float
    area: AreaRole

    def to_dict(self) -> dict:
        return {
            "ped_id": self.ped_id,
            "ped_position": [self.ped_position.x, self.ped_position.y],
            "veh_id": self.veh_id,
            "veh_position": [self.veh_position.x, self.veh_position.y],
            "t": self.t,
            "area": self.area.value,
        }


def select_conflict_vehicle(
    ped_position: WorldPoint, candidates: Sequence[tuple[str, WorldPoint]]
) -> str | None:
    """Nearest candidate vehicle by Euclidean world distance, or None.

    Ties resolve to the earliest candidate in the input order.
    """
    best_id: str | None = None
    best_dist = math.inf
    for veh_id, position in candidates:
        dist = ped_position.distance_to(position)
        if dist < best_dist:
            best_dist = dist
            best_id = veh_id
    return best_id


class DecisionKind(Enum):
    NO_CHANGE = "no_change"
    COUNTER_INCREMENTED = "counter_incremented"
    RISK2_FLAGGED = "risk2_flagged"


@dataclass(frozen=True)
class Decision:
    kind: DecisionKind
    area: AreaRole | None = None
    scenario: RiskScenario | None = None


@dataclass(frozen=True)
class FrameContext:
    """Per-frame facts step_evaluate needs to emit a risk scenario."""

    frame: int
    t: float
    ped_position: WorldPoint
    conflict_vehicles: Mapping[AreaRole, tuple[str, WorldPoint]] = field(default_factory=dict)


# Risk is evaluated only while the pedestrian is in the react or conflict
# zones; the approach zone is deliberately not assessed.
_EVAL_AREA_PREFIXES = ("2.", "3.")


def _role_hit(
    vector: PPetVector, component_role: AreaRole, thresholds: CategoryThresholds,
    interval_role: AreaRole,
) -> bool:
    """True when any available component of the area falls in its interval."""
    hit = False
    for scenario in ConflictScenario:
        interval = thresholds.interval(interval_role, scenario)
        value = vector.component(component_role.value, scenario)
        if value is not None and interval.contains(value):
            hit = True
    return hit


def step_evaluate(
    state: PedestrianState,
    vector: PPetVector,
    config: RiskThresholdConfig,
    context: FrameContext,
) -> list[Decision]:
    """Advance one pedestrian's risk counters with this frame's P-PET vector.

    Each conflict area contributes at most one increment per frame even when
    both of its scenario components are in range. A counter strictly
    exceeding its limit flags Risk 2 once per area and episode and emits the
    scenario snapshot.
    """
    thresholds = config.for_category(state.category)
    area = state.current_area
    if area is None or not any(area.startswith(p) for p in _EVAL_AREA_PREFIXES):
        return []

    merged = thresholds.mode is ThresholdMode.MERGED_AREA
    decisions: list[Decision] = []
    for role in (AreaRole.CLOSER, AreaRole.FURTHER):
        interval_role = AreaRole.MERGED if merged else role
        counter_role = AreaRole.MERGED if merged else role
        if not _role_hit(vector, role, thresholds, interval_role):
            continue
        count = state.risk_counters.get(counter_role.value, 0) + 1
        state.risk_counters[counter_role.value] = count
        decisions.append(Decision(DecisionKind.COUNTER_INCREMENTED, role))
        limit = thresholds.counter_limit(counter_role)
        if count > limit and not state.flagged_risk2.get(counter_role.value, False):
            state.flagged_risk2[counter_role.value] = True
            vehicle = context.conflict_vehicles.get(role)
            veh_id, veh_position = vehicle if vehicle is not None else ("", context.ped_position)
            decisions.append(
                Decision(
                    DecisionKind.RISK2_FLAGGED,
                    role,
                    RiskScenario(
                        ped_id=state.agent_id,
                        ped_position=context.ped_position,
                        veh_id=veh_id,
                        veh_position=veh_position,
                        t=context.t,
                        area=role,
                    ),
                )
            )
    return decisions


def classify_offline(
    trace: Sequence[PPetVector],
    category: AgentCategory,
    config: RiskThresholdConfig,
) -> dict[AreaRole, RiskLevel]:
    """Episode-level classification from a complete P-PET trace.

    Batch mirror of the streaming counters: an area is Risk 2 exactly when
    its count of in-interval frames strictly exceeds the counter limit. An
    empty trace is Risk 1 (never flagged). Merged mode aggregates both
    areas' in-range frames against the single limit and assigns the merged
    outcome to both areas.
    """
    thresholds = config.for_category(category)
    counts = {AreaRole.CLOSER: 0, AreaRole.FURTHER: 0}
    for role in (AreaRole.CLOSER, AreaRole.FURTHER):
        interval_role = AreaRole.MERGED if thresholds.mode is ThresholdMode.MERGED_AREA else role
        hits = np.zeros(len(trace), dtype=bool)
        for s in ConflictScenario:
            bounds = thresholds.interval(interval_role, s)
            values = np.full(len(trace), np.nan)
            for i, vec in enumerate(trace):
                component = vec.component(role.value, s)
                if component is not None:
                    values[i] = component
            with np.errstate(invalid="ignore"):
                hits |= (values >= bounds.alpha) & (values <= bounds.beta)
        counts[role] = int(np.count_nonzero(hits))

    if thresholds.mode is ThresholdMode.MERGED_AREA:
        total = counts[AreaRole.CLOSER] + counts[AreaRole.FURTHER]
        level = RiskLevel.RISK2 if total > thresholds.counter_limit(AreaRole.MERGED) else RiskLevel.RISK1
        return {AreaRole.CLOSER: level, AreaRole.FURTHER: level}
    return {
        role: (
            RiskLevel.RISK2
            if counts[role] > thresholds.counter_limit(role)
            else RiskLevel.RISK1
        )
        for role in (AreaRole.CLOSER, AreaRole.FURTHER)
    }
