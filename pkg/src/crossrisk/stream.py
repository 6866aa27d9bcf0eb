"""Per-frame observation ingestion, trajectory buffering, sliding windows,
and the target-pedestrian lifecycle.

The engine is a single-writer state machine: ingest_frame calls must arrive
serialized in frame order. Snapshot queries are read-only.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    DuplicateAgentInFrame,
    InsufficientHistory,
    ManifestError,
    OutOfOrderFrame,
    UnknownDirection,
)
from .geometry import AreaMap, PixelPoint, TileGrid, WorldPoint, locate_area, transform_point

WINDOW_SIZE = 30           # points per sliding window (1 s at 30 FPS)
MIN_TRAJECTORY_LENGTH = 30  # prediction gate; coincides with the window size
MAX_INTERPOLATED_GAP = 5    # missed frames repaired by linear interpolation
DIRECTION_DEAD_BAND_M = 0.2


class AgentCategory(IntEnum):
    """Agent classes; vehicle classes are split by approach zone."""

    ADULT = 0
    KID = 1
    CYCLIST = 2
    VEHICLE_AREA_41 = 3
    VEHICLE_AREA_42 = 4

    @property
    def is_pedestrian(self) -> bool:
        return self in (AgentCategory.ADULT, AgentCategory.KID, AgentCategory.CYCLIST)

    @property
    def is_vehicle(self) -> bool:
        return not self.is_pedestrian

    @property
    def conflict_area(self) -> str | None:
        """Conflict area served by this vehicle class (None for pedestrians)."""
        if self is AgentCategory.VEHICLE_AREA_41:
            return "3.1"
        if self is AgentCategory.VEHICLE_AREA_42:
            return "3.2"
        return None


@dataclass(frozen=True)
class Observation:
    """One time-stamped world-coordinate point of one agent."""

    frame: int
    t: float
    agent_id: str
    category: AgentCategory
    position: WorldPoint


@dataclass(frozen=True)
class SlidingWindowTrajectory:
    """Exactly WINDOW_SIZE consecutive observations of a single agent."""

    observations: tuple[Observation, ...]

    def __post_init__(self) -> None:
        obs = self.observations
        if len(obs) != WINDOW_SIZE:
            raise ValueError(f"window must hold {WINDOW_SIZE} points, got {len(obs)}")
        ids = {o.agent_id for o in obs}
        if len(ids) != 1:
            raise ValueError(f"window mixes agents {sorted(ids)}")
        for prev, cur in zip(obs, obs[1:]):
            if cur.frame != prev.frame + 1:
                raise ValueError("window frames must be consecutive")

    @property
    def agent_id(self) -> str:
        return self.observations[0].agent_id

    @property
    def category(self) -> AgentCategory:
        return self.observations[0].category

    @property
    def end(self) -> Observation:
        return self.observations[-1]

    def positions(self) -> np.ndarray:
        return np.array([[o.position.x, o.position.y] for o in self.observations])

    def times(self) -> np.ndarray:
        return np.array([o.t for o in self.observations])


class TrajectoryBuffer:
    """Ring of recent observations for one agent with gap repair.

    Gaps of up to MAX_INTERPOLATED_GAP missed frames are filled by linear
    interpolation; anything longer resets the buffer because the window
    would be semantically stale.
    """

    def __init__(self, agent_id: str, category: AgentCategory, capacity: int = WINDOW_SIZE):
        if capacity < WINDOW_SIZE:
            raise ValueError(f"capacity must be >= {WINDOW_SIZE}")
        self.agent_id = agent_id
        self.category = category
        self._ring: deque[Observation] = deque(maxlen=capacity)
        self.total_observed = 0

    def __len__(self) -> int:
        return len(self._ring)

    @property
    def last(self) -> Observation | None:
        return self._ring[-1] if self._ring else None

    def clear(self) -> None:
        self._ring.clear()
        self.total_observed = 0

    def append(self, obs: Observation) -> None:
        last = self.last
        if last is None:
            self._ring.append(obs)
            self.total_observed = 1
            return
        gap = obs.frame - last.frame
        if gap <= 0:
            raise OutOfOrderFrame(
                f"agent {self.agent_id}: frame {obs.frame} after {last.frame}"
            )
        if gap > MAX_INTERPOLATED_GAP + 1:
            self.clear()
            self._ring.append(obs)
            self.total_observed = 1
            return
        for step in range(1, gap):
            frac = step / gap
            self._ring.append(
                Observation(
                    frame=last.frame + step,
                    t=last.t + frac * (obs.t - last.t),
                    agent_id=obs.agent_id,
                    category=obs.category,
                    position=WorldPoint(
                        last.position.x + frac * (obs.position.x - last.position.x),
                        last.position.y + frac * (obs.position.y - last.position.y),
                    ),
                )
            )
        self._ring.append(obs)
        self.total_observed += gap

    @property
    def window_ready(self) -> bool:
        return len(self._ring) >= WINDOW_SIZE

    def observations(self) -> tuple[Observation, ...]:
        return tuple(self._ring)


def window(buffer: TrajectoryBuffer) -> SlidingWindowTrajectory:
    """Most recent full sliding window of the buffer."""
    if len(buffer) < WINDOW_SIZE:
        raise InsufficientHistory(
            f"agent {buffer.agent_id}: {len(buffer)} of {WINDOW_SIZE} points buffered"
        )
    return SlidingWindowTrajectory(buffer.observations()[-WINDOW_SIZE:])


class Direction(Enum):
    LEFT_TO_RIGHT = "ltr"
    RIGHT_TO_LEFT = "rtl"
    UNKNOWN = "unknown"


def infer_direction(observations: Sequence[Observation]) -> Direction:
    """Crossing direction from net x displacement, with a jitter dead band."""
    if len(observations) < 2:
        return Direction.UNKNOWN
    dx = observations[-1].position.x - observations[0].position.x
    if dx > DIRECTION_DEAD_BAND_M:
        return Direction.LEFT_TO_RIGHT
    if dx < -DIRECTION_DEAD_BAND_M:
        return Direction.RIGHT_TO_LEFT
    return Direction.UNKNOWN


def closer_further_assignment(direction: Direction) -> tuple[str, str]:
    """Which conflict area the pedestrian reaches first and second."""
    if direction is Direction.LEFT_TO_RIGHT:
        return ("3.1", "3.2")
    if direction is Direction.RIGHT_TO_LEFT:
        return ("3.2", "3.1")
    raise UnknownDirection("closer/further assignment needs a known direction")


class PedestrianStatus(Enum):
    NON_TARGET = "non_target"
    TARGET = "target"
    EXITED = "exited"


@dataclass
class PedestrianState:
    """Mutable lifecycle state of one pedestrian episode."""

    agent_id: str
    category: AgentCategory
    status: PedestrianStatus = PedestrianStatus.NON_TARGET
    current_area: str | None = None
    direction: Direction = Direction.UNKNOWN
    episode: int = 0
    risk_counters: dict[str, int] = field(default_factory=dict)
    flagged_risk2: dict[str, bool] = field(default_factory=dict)

    def reset_counters(self) -> None:
        self.risk_counters.clear()
        self.flagged_risk2.clear()


class LifecycleEventKind(Enum):
    BECAME_TARGET = "became_target"
    BECAME_NON_TARGET = "became_non_target"
    ENTERED_AREA = "entered_area"
    WINDOW_READY = "window_ready"


@dataclass(frozen=True)
class LifecycleEvent:
    kind: LifecycleEventKind
    agent_id: str
    frame: int
    area: str | None = None


# Areas that promote a pedestrian to Target.
_TARGET_ENTRY_PREFIXES = ("1.", "2.", "3.")


class StreamEngine:
    """Frame-ordered ingestion plus the Target/NonTarget pedestrian lifecycle.

    Pedestrians become Target when they enter Area 1 (or are first seen
    already inside Areas 2-3); a Target leaving Area 3 exits the episode and
    its trajectory buffer is cleared. Vehicles are buffered without lifecycle.
    """

    def __init__(self, area_map: AreaMap, fps: float = 30.0):
        self.area_map = area_map
        self.fps = fps
        self.buffers: dict[str, TrajectoryBuffer] = {}
        self.pedestrians: dict[str, PedestrianState] = {}
        self.last_frame: int | None = None
        self._window_signaled: dict[str, bool] = {}

    def buffer(self, agent_id: str) -> TrajectoryBuffer:
        return self.buffers[agent_id]

    def window_ready(self, agent_id: str) -> bool:
        buf = self.buffers.get(agent_id)
        return buf is not None and buf.window_ready

    def window(self, agent_id: str) -> SlidingWindowTrajectory:
        return window(self.buffers[agent_id])

    def agents_in_areas(
        self, categories: Iterable[AgentCategory], prefixes: Sequence[str]
    ) -> list[tuple[str, WorldPoint, str]]:
        """(agent_id, position, area) for agents of the given categories whose
        current position lies in an area matching one of the name prefixes."""
        wanted = set(categories)
        found = []
        for agent_id, buf in self.buffers.items():
            if buf.category not in wanted or buf.last is None:
                continue
            area = locate_area(self.area_map, buf.last.position)
            if area is not None and any(area.startswith(p) for p in prefixes):
                found.append((agent_id, buf.last.position, area))
        return found

    def ingest_frame(self, frame: int, observations: Sequence[Observation]) -> list[LifecycleEvent]:
        """Feed one frame of observations; returns lifecycle events in order."""
        if self.last_frame is not None and frame != self.last_frame + 1:
            raise OutOfOrderFrame(f"expected frame {self.last_frame + 1}, got {frame}")
        seen: set[str] = set()
        for obs in observations:
            if obs.frame != frame:
                raise OutOfOrderFrame(
                    f"observation for agent {obs.agent_id} carries frame "
                    f"{obs.frame}, expected {frame}"
                )
            if obs.agent_id in seen:
                raise DuplicateAgentInFrame(f"agent {obs.agent_id} twice in frame {frame}")
            seen.add(obs.agent_id)
        self.last_frame = frame

        events: list[LifecycleEvent] = []
        for obs in observations:
            buf = self.buffers.get(obs.agent_id)
            if buf is None:
                buf = TrajectoryBuffer(obs.agent_id, obs.category)
                self.buffers[obs.agent_id] = buf
            before = buf.total_observed
            buf.append(obs)
            if before > 0 and buf.total_observed == 1:
                # long gap reset happened
                self._window_signaled[obs.agent_id] = False
            if buf.window_ready and not self._window_signaled.get(obs.agent_id, False):
                self._window_signaled[obs.agent_id] = True
                events.append(LifecycleEvent(LifecycleEventKind.WINDOW_READY, obs.agent_id, frame))

            if obs.category.is_pedestrian:
                events.extend(self._step_pedestrian(obs, buf))
        return events

    def _step_pedestrian(self, obs: Observation, buf: TrajectoryBuffer) -> list[LifecycleEvent]:
        events: list[LifecycleEvent] = []
        area = locate_area(self.area_map, obs.position)
        state = self.pedestrians.get(obs.agent_id)
        if state is None:
            state = PedestrianState(obs.agent_id, obs.category)
            self.pedestrians[obs.agent_id] = state

        prev_area = state.current_area
        if area is not None and area != prev_area:
            events.append(
                LifecycleEvent(LifecycleEventKind.ENTERED_AREA, obs.agent_id, obs.frame, area)
            )
        state.current_area = area
        state.direction = infer_direction(buf.observations())

        if state.status is PedestrianStatus.TARGET:
            left_conflict = (
                prev_area is not None
                and prev_area.startswith("3.")
                and (area is None or not area.startswith("3."))
            )
            if left_conflict:
                state.status = PedestrianStatus.EXITED
                state.reset_counters()
                buf.clear()
                self._window_signaled[obs.agent_id] = False
                events.append(
                    LifecycleEvent(LifecycleEventKind.BECAME_NON_TARGET, obs.agent_id, obs.frame)
                )
            return events

        # NonTarget (or exited, starting a fresh episode) entering the crossing
        enters = area is not None and area.startswith(_TARGET_ENTRY_PREFIXES)
        if state.status is PedestrianStatus.EXITED:
            enters = area is not None and area.startswith("1.")
        if enters:
            state.status = PedestrianStatus.TARGET
            state.episode += 1
            state.reset_counters()
            events.append(
                LifecycleEvent(LifecycleEventKind.BECAME_TARGET, obs.agent_id, obs.frame)
            )
        return events


# --- stream files -------------------------------------------------------------

STREAM_HEADER_WORLD = ["frame", "t", "id", "category", "x", "y"]
STREAM_HEADER_PIXEL = ["frame", "t", "id", "category", "u", "v"]


def write_stream_csv(path: str, frames: Iterable[Sequence[Observation]]) -> None:
    """Write frames of observations as the world-coordinate stream format."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(STREAM_HEADER_WORLD)
        for frame_obs in frames:
            for o in frame_obs:
                writer.writerow(
                    [o.frame, repr(o.t), o.agent_id, int(o.category), repr(o.position.x), repr(o.position.y)]
                )


def read_stream_csv(path: str, tile_grid: TileGrid | None = None) -> dict[int, list[Observation]]:
    """Read a stream CSV into frame -> observations.

    Accepts the world-coordinate header (x, y) or the pixel variant (u, v);
    the pixel variant requires a tile grid to transform on ingest.
    """
    frames: dict[int, list[Observation]] = {}
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header == STREAM_HEADER_WORLD:
                pixel = False
            elif header == STREAM_HEADER_PIXEL:
                pixel = True
                if tile_grid is None:
                    raise ManifestError(f"{path} is a pixel stream; a tile grid is required")
            else:
                raise ManifestError(f"{path}: unrecognized stream header {header}")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    frame = int(row[0])
                    t = float(row[1])
                    agent_id = row[2]
                    category = AgentCategory(int(row[3]))
                    a, b = float(row[4]), float(row[5])
                except (IndexError, ValueError) as exc:
                    raise ManifestError(f"{path}:{lineno}: bad stream row {row}: {exc}") from exc
                if pixel:
                    position = transform_point(tile_grid, PixelPoint(a, b))
                else:
                    position = WorldPoint(a, b)
                frames.setdefault(frame, []).append(
                    Observation(frame, t, agent_id, category, position)
                )
    except OSError as exc:
        raise ManifestError(f"cannot read stream {path}: {exc}") from exc
    return frames


def iter_frames(frames: dict[int, list[Observation]]) -> Iterator[tuple[int, list[Observation]]]:
    """Iterate the full contiguous frame range, yielding empty frames too."""
    if not frames:
        return
    first, last = min(frames), max(frames)
    for frame in range(first, last + 1):
        yield frame, frames.get(frame, [])
