"""End-to-end streaming risk evaluation: ingestion, arrival-time prediction,
predicted post-encroachment times, and the per-pedestrian risk state machine.

The CLI evaluate/replay commands are thin wrappers over this module, so a
file-driven run is exactly the composition of library calls.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import PredictionError
from .geometry import (
    AreaMap,
    WorldPoint,
    pedestrian_line_name,
    signed_distance_to_line,
    vehicle_line_name,
)
from .ppet import ArrivalEstimateSet, ConflictScenario, PPetVector, ppet
from .predictors import TrainedModelBundle
from .risk import (
    AreaRole,
    Decision,
    DecisionKind,
    FrameContext,
    RiskScenario,
    RiskThresholdConfig,
    select_conflict_vehicle,
    step_evaluate,
)
from .stream import (
    AgentCategory,
    Direction,
    LifecycleEvent,
    Observation,
    PedestrianStatus,
    StreamEngine,
    closer_further_assignment,
)

# Vehicle class that serves each conflict area (approach-zone association).
CONFLICT_AREA_VEHICLE = {
    "3.1": AgentCategory.VEHICLE_AREA_41,
    "3.2": AgentCategory.VEHICLE_AREA_42,
}

_EVAL_AREA_PREFIXES = ("2.", "3.")
_PF = ConflictScenario.PEDESTRIAN_FIRST
_VF = ConflictScenario.VEHICLE_FIRST


@dataclass(frozen=True)
class TraceRow:
    """One evaluated (frame, pedestrian, area) with that area's components."""

    frame: int
    ped_id: str
    veh_id: str
    area: AreaRole
    pf: float | None
    vf: float | None


@dataclass
class EvaluationResult:
    risk_scenarios: list[RiskScenario] = field(default_factory=list)
    trace: list[TraceRow] = field(default_factory=list)
    events: list[LifecycleEvent] = field(default_factory=list)
    vectors_by_ped: dict[str, list[PPetVector]] = field(default_factory=dict)
    prediction_ms: list[float] = field(default_factory=list)
    ppet_risk_ms: list[float] = field(default_factory=list)


class RiskPipeline:
    """Frame-serialized evaluator combining all library stages."""

    def __init__(
        self,
        area_map: AreaMap,
        thresholds: RiskThresholdConfig,
        bundle: TrainedModelBundle | None = None,
        fps: float = 30.0,
    ):
        self.area_map = area_map
        self.thresholds = thresholds
        self.bundle = bundle if bundle is not None else TrainedModelBundle.historical_average()
        self.fps = fps
        self.engine = StreamEngine(area_map, fps)
        self.result = EvaluationResult()

    # -- prediction helpers -------------------------------------------------------

    def _predict(self, category: AgentCategory, q: int, window, line) -> float | None:
        """Arrival seconds or None when the line is behind the agent or the
        predictor cannot produce an estimate."""
        if signed_distance_to_line(window.end.position, line) < 0.0:
            return None
        predictor = self.bundle.predictor_for(category, q)
        try:
            return predictor.predict(window, line).seconds
        except PredictionError:
            return None

    def _pedestrian_estimates(self, window, direction: Direction) -> list[float | None]:
        estimates: list[float | None] = []
        for q in (0, 1, 2):
            line = self.area_map.line(pedestrian_line_name(direction.value, q))
            estimates.append(self._predict(window.category, q, window, line))
        # enforce physical ordering across the three lines
        running = None
        for i, value in enumerate(estimates):
            if value is None:
                continue
            if running is not None and value < running:
                estimates[i] = running
            running = estimates[i]
        return estimates

    def _vehicle_estimates(
        self, veh_id: str, area_id: str, cache: dict
    ) -> tuple[float | None, float | None]:
        key = (veh_id, area_id)
        if key in cache:
            return cache[key]
        if not self.engine.window_ready(veh_id):
            cache[key] = (None, None)
            return cache[key]
        window = self.engine.window(veh_id)
        enter = self._predict(
            window.category, 0, window, self.area_map.line(vehicle_line_name(area_id, True))
        )
        leave = self._predict(
            window.category, 1, window, self.area_map.line(vehicle_line_name(area_id, False))
        )
        cache[key] = (enter, leave)
        return cache[key]

    def _conflict_vehicle(
        self, ped_position: WorldPoint, area_id: str,
        snapshot: Mapping[AgentCategory, list[tuple[str, WorldPoint, str]]],
    ) -> tuple[str, WorldPoint] | None:
        serving = CONFLICT_AREA_VEHICLE[area_id]
        candidates = [(veh_id, pos) for veh_id, pos, _ in snapshot.get(serving, [])]
        veh_id = select_conflict_vehicle(ped_position, candidates)
        if veh_id is None:
            return None
        for cand_id, pos in candidates:
            if cand_id == veh_id:
                return veh_id, pos
        return None

    # -- frame loop ----------------------------------------------------------------

    def process_frame(self, frame: int, observations: Sequence[Observation]) -> list[Decision]:
        """Ingest one frame and evaluate every ready target pedestrian."""
        events = self.engine.ingest_frame(frame, observations)
        self.result.events.extend(events)
        t = frame / self.fps
        decisions_out: list[Decision] = []

        t0 = time.perf_counter()
        # one vehicle snapshot per frame, shared across pedestrians
        snapshot = {
            category: self.engine.agents_in_areas([category], ("3.", "4."))
            for category in (AgentCategory.VEHICLE_AREA_41, AgentCategory.VEHICLE_AREA_42)
        }
        vehicle_cache: dict = {}
        evaluations = []
        for ped_id, state in self.engine.pedestrians.items():
            if state.status is not PedestrianStatus.TARGET:
                continue
            area = state.current_area
            if area is None or not any(area.startswith(p) for p in _EVAL_AREA_PREFIXES):
                continue
            if not self.engine.window_ready(ped_id) or state.direction is Direction.UNKNOWN:
                continue
            window = self.engine.window(ped_id)
            closer_id, further_id = closer_further_assignment(state.direction)
            ped_est = self._pedestrian_estimates(window, state.direction)
            ped_position = window.end.position

            vehicles: dict[AreaRole, tuple[str, WorldPoint]] = {}
            veh_est = {}
            for role, area_id in ((AreaRole.CLOSER, closer_id), (AreaRole.FURTHER, further_id)):
                found = self._conflict_vehicle(ped_position, area_id, snapshot)
                if found is None:
                    veh_est[role] = (None, None)
                    continue
                vehicles[role] = found
                veh_est[role] = self._vehicle_estimates(found[0], area_id, vehicle_cache)

            est = ArrivalEstimateSet(
                ped_q0=ped_est[0],
                ped_q1=ped_est[1],
                ped_q2=ped_est[2],
                veh_closer_enter=veh_est[AreaRole.CLOSER][0],
                veh_closer_leave=veh_est[AreaRole.CLOSER][1],
                veh_further_enter=veh_est[AreaRole.FURTHER][0],
                veh_further_leave=veh_est[AreaRole.FURTHER][1],
            )
            evaluations.append((state, est, ped_position, vehicles))
        prediction_ms = (time.perf_counter() - t0) * 1000.0

        t1 = time.perf_counter()
        for state, est, ped_position, vehicles in evaluations:
            vector = ppet(est)
            context = FrameContext(frame, t, ped_position, vehicles)
            decisions = step_evaluate(state, vector, self.thresholds, context)
            decisions_out.extend(decisions)
            for decision in decisions:
                if decision.kind is DecisionKind.RISK2_FLAGGED and decision.scenario is not None:
                    self.result.risk_scenarios.append(decision.scenario)
            self.result.vectors_by_ped.setdefault(state.agent_id, []).append(vector)
            for role in (AreaRole.CLOSER, AreaRole.FURTHER):
                veh_id = vehicles.get(role, ("", None))[0]
                self.result.trace.append(
                    TraceRow(
                        frame=frame,
                        ped_id=state.agent_id,
                        veh_id=veh_id,
                        area=role,
                        pf=vector.component(role.value, _PF),
                        vf=vector.component(role.value, _VF),
                    )
                )
        ppet_risk_ms = (time.perf_counter() - t1) * 1000.0

        self.result.prediction_ms.append(prediction_ms)
        self.result.ppet_risk_ms.append(ppet_risk_ms)
        return decisions_out

    def run(self, frames: Mapping[int, Sequence[Observation]]) -> EvaluationResult:
        """Process a whole stream (contiguous frame range, empty frames included)."""
        if frames:
            first, last = min(frames), max(frames)
            for frame in range(first, last + 1):
                self.process_frame(frame, frames.get(frame, []))
        return self.result


# --- output files ---------------------------------------------------------------

TRACE_HEADER = ["frame", "ped_id", "veh_id", "area", "c_pf", "c_vf", "f_pf", "f_vf"]


def _cell(value: float | None) -> str:
    return "" if value is None else repr(value)


def write_trace_csv(path: str, trace: Sequence[TraceRow]) -> None:
    """P-PET trace: one row per evaluated (frame, pedestrian, area); the
    columns of the other area stay empty."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for row in trace:
            if row.area is AreaRole.CLOSER:
                cells = [_cell(row.pf), _cell(row.vf), "", ""]
            else:
                cells = ["", "", _cell(row.pf), _cell(row.vf)]
            writer.writerow([row.frame, row.ped_id, row.veh_id, row.area.value] + cells)


def read_trace_csv(path: str) -> dict[str, list[PPetVector]]:
    """Rebuild per-pedestrian P-PET vector sequences from a trace file."""
    per_key: dict[tuple[str, int], dict[str, float | None]] = {}
    order: list[tuple[str, int]] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            key = (row["ped_id"], int(row["frame"]))
            if key not in per_key:
                per_key[key] = {"c_pf": None, "c_vf": None, "f_pf": None, "f_vf": None}
                order.append(key)
            if row["area"] == AreaRole.CLOSER.value:
                per_key[key]["c_pf"] = float(row["c_pf"]) if row["c_pf"] else None
                per_key[key]["c_vf"] = float(row["c_vf"]) if row["c_vf"] else None
            else:
                per_key[key]["f_pf"] = float(row["f_pf"]) if row["f_pf"] else None
                per_key[key]["f_vf"] = float(row["f_vf"]) if row["f_vf"] else None
    vectors: dict[str, list[PPetVector]] = {}
    for ped_id, frame in order:
        parts = per_key[(ped_id, frame)]
        vectors.setdefault(ped_id, []).append(PPetVector(**parts))
    return vectors


def write_risk_scenarios(path: str, scenarios: Sequence[RiskScenario]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for scenario in scenarios:
            fh.write(json.dumps(scenario.to_dict(), sort_keys=True))
            fh.write("\n")


@dataclass(frozen=True)
class LatencyReport:
    """Per-frame latency of the safety-evaluation path, in milliseconds."""

    transform_mean_ms: float
    transform_std_ms: float
    prediction_mean_ms: float
    prediction_std_ms: float
    ppet_risk_mean_ms: float
    ppet_risk_std_ms: float
    safety_eval_mean_ms: float
    frames: int
    unit: str = "frame"

    def to_dict(self) -> dict:
        return {
            "unit": self.unit,
            "frames": self.frames,
            "transform_ms": {"mean": self.transform_mean_ms, "std": self.transform_std_ms},
            "prediction_ms": {"mean": self.prediction_mean_ms, "std": self.prediction_std_ms},
            "ppet_risk_ms": {"mean": self.ppet_risk_mean_ms, "std": self.ppet_risk_std_ms},
            "safety_evaluation_mean_ms": self.safety_eval_mean_ms,
        }


def latency_report(
    prediction_ms: Sequence[float],
    ppet_risk_ms: Sequence[float],
    transform_ms: Sequence[float] = (),
) -> LatencyReport:
    def stats(values: Sequence[float]) -> tuple[float, float]:
        if not values:
            return 0.0, 0.0
        arr = np.asarray(values)
        return float(arr.mean()), float(arr.std())

    t_mean, t_std = stats(transform_ms)
    p_mean, p_std = stats(prediction_ms)
    r_mean, r_std = stats(ppet_risk_ms)
    return LatencyReport(
        transform_mean_ms=t_mean,
        transform_std_ms=t_std,
        prediction_mean_ms=p_mean,
        prediction_std_ms=p_std,
        ppet_risk_mean_ms=r_mean,
        ppet_risk_std_ms=r_std,
        safety_eval_mean_ms=p_mean + r_mean,
        frames=len(prediction_ms),
    )
