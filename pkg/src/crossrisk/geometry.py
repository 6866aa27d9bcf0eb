"""Planar geometry: pixel-to-world projective maps over a tile grid, zone
membership for the intersection layout, and target-line distance helpers.

All world coordinates are meters on the ground plane. Every type here is
immutable after construction and every operation is a pure function, so the
whole module is safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateAnchors,
    ManifestError,
    OutsideCalibratedRegion,
    ProjectiveSingularity,
)

# Homogeneous scale below this is treated as a projective singularity.
W_TOLERANCE = 1e-12


@dataclass(frozen=True)
class PixelPoint:
    """Image-plane point in pixels (u right, v down)."""

    u: float
    v: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise ValueError(f"pixel point must be finite, got ({self.u}, {self.v})")


@dataclass(frozen=True)
class WorldPoint:
    """Ground-plane point in meters."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"world point must be finite, got ({self.x}, {self.y})")

    def distance_to(self, other: "WorldPoint") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


def _collinearity_scale(points: Sequence[tuple[float, float]]) -> float:
    return max(1.0, max(abs(c) for p in points for c in p))


def _any_degenerate(points: Sequence[tuple[float, float]]) -> bool:
    """True when any two points coincide or any three are collinear."""
    scale = _collinearity_scale(points)
    ids = range(len(points))
    for i in ids:
        for j in ids:
            if j <= i:
                continue
            dx = points[i][0] - points[j][0]
            dy = points[i][1] - points[j][1]
            if math.hypot(dx, dy) < 1e-9 * scale:
                return True
    for i in ids:
        for j in ids:
            for k in ids:
                if not (i < j < k):
                    continue
                ax, ay = points[j][0] - points[i][0], points[j][1] - points[i][1]
                bx, by = points[k][0] - points[i][0], points[k][1] - points[i][1]
                if abs(ax * by - ay * bx) < 1e-9 * scale * scale:
                    return True
    return False


def solve_homography(
    pixel_pts: Sequence[PixelPoint], world_pts: Sequence[WorldPoint]
) -> np.ndarray:
    """Solve the 3x3 projective map sending four pixel anchors to four world
    anchors.

    The eight unknowns are solved exactly from the linear system built from
    the four correspondences (LU with partial pivoting); the bottom-right
    entry is fixed at 1. Raises DegenerateAnchors when either quadruple has
    duplicate or collinear points, or when the system is singular anyway.
    """
    if len(pixel_pts) != 4 or len(world_pts) != 4:
        raise DegenerateAnchors("exactly four anchor pairs are required")
    px = [(p.u, p.v) for p in pixel_pts]
    wd = [(p.x, p.y) for p in world_pts]
    if _any_degenerate(px):
        raise DegenerateAnchors(f"degenerate pixel anchors: {px}")
    if _any_degenerate(wd):
        raise DegenerateAnchors(f"degenerate world anchors: {wd}")

    a = np.zeros((8, 8))
    b = np.zeros(8)
    for k, ((u, v), (x, y)) in enumerate(zip(px, wd)):
        a[2 * k] = [u, v, 1.0, 0.0, 0.0, 0.0, -x * u, -x * v]
        a[2 * k + 1] = [0.0, 0.0, 0.0, u, v, 1.0, -y * u, -y * v]
        b[2 * k] = x
        b[2 * k + 1] = y
    try:
        h = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise DegenerateAnchors(f"anchor system is singular: {exc}") from exc
    matrix = np.append(h, 1.0).reshape(3, 3)
    if not np.all(np.isfinite(matrix)):
        raise DegenerateAnchors("anchor system produced non-finite matrix")
    return matrix


def project_point(matrix: np.ndarray, u: float, v: float) -> tuple[float, float]:
    """Apply a 3x3 projective matrix to (u, v) with homogeneous normalization."""
    vec = matrix @ np.array([u, v, 1.0])
    w = vec[2]
    if abs(w) < W_TOLERANCE:
        raise ProjectiveSingularity(f"homogeneous scale {w!r} at ({u}, {v})")
    return float(vec[0] / w), float(vec[1] / w)


def _on_segment(x: float, y: float, ax: float, ay: float, bx: float, by: float) -> bool:
    cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax)
    length = math.hypot(bx - ax, by - ay)
    if abs(cross) > 1e-9 * max(1.0, length):
        return False
    dot = (x - ax) * (bx - ax) + (y - ay) * (by - ay)
    return -1e-12 <= dot <= length * length + 1e-12


def point_in_polygon(x: float, y: float, vertices: Sequence[tuple[float, float]]) -> bool:
    """Winding-number membership test; boundary points count as inside."""
    wn = 0
    n = len(vertices)
    for i in range(n):
        ax, ay = vertices[i]
        bx, by = vertices[(i + 1) % n]
        if _on_segment(x, y, ax, ay, bx, by):
            return True
        if ay <= y:
            if by > y and (bx - ax) * (y - ay) - (by - ay) * (x - ax) > 0:
                wn += 1
        elif by <= y and (bx - ax) * (y - ay) - (by - ay) * (x - ax) < 0:
            wn -= 1
    return wn != 0


def _distance_to_segment(x: float, y: float, ax: float, ay: float, bx: float, by: float) -> float:
    vx, vy = bx - ax, by - ay
    ll = vx * vx + vy * vy
    if ll < 1e-18:
        return math.hypot(x - ax, y - ay)
    t = ((x - ax) * vx + (y - ay) * vy) / ll
    t = min(1.0, max(0.0, t))
    return math.hypot(x - (ax + t * vx), y - (ay + t * vy))


@dataclass(frozen=True, eq=False)
class HomographyTile:
    """One calibrated square: a pixel quadrilateral and its projective map.

    world_region, when given, is the declared world quadrilateral in the same
    corner order; construction then verifies the anchor round trip to 1e-6 m.
    """

    pixel_region: tuple[PixelPoint, ...]
    matrix: np.ndarray
    world_region: tuple[WorldPoint, ...] | None = None

    def __post_init__(self) -> None:
        if len(self.pixel_region) != 4:
            raise ValueError("tile pixel region must have exactly 4 corners")
        matrix = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", matrix)
        if matrix.shape != (3, 3):
            raise ValueError(f"tile matrix must be 3x3, got {matrix.shape}")
        if abs(np.linalg.det(matrix)) < 1e-15:
            raise ValueError("tile matrix is singular")
        if self.world_region is not None:
            if len(self.world_region) != 4:
                raise ValueError("tile world region must have exactly 4 corners")
            for corner, expect in zip(self.pixel_region, self.world_region):
                x, y = project_point(matrix, corner.u, corner.v)
                if math.hypot(x - expect.x, y - expect.y) > 1e-6:
                    raise ValueError(
                        f"tile matrix maps corner ({corner.u}, {corner.v}) to "
                        f"({x}, {y}), expected ({expect.x}, {expect.y})"
                    )

    def contains(self, p: PixelPoint) -> bool:
        return point_in_polygon(p.u, p.v, [(c.u, c.v) for c in self.pixel_region])

    def distance_to(self, p: PixelPoint) -> float:
        if self.contains(p):
            return 0.0
        corners = [(c.u, c.v) for c in self.pixel_region]
        return min(
            _distance_to_segment(p.u, p.v, *corners[i], *corners[(i + 1) % 4])
            for i in range(4)
        )

    def transform(self, p: PixelPoint) -> WorldPoint:
        x, y = project_point(self.matrix, p.u, p.v)
        return WorldPoint(x, y)


def tile_from_anchors(
    pixel_pts: Sequence[PixelPoint], world_pts: Sequence[WorldPoint]
) -> HomographyTile:
    matrix = solve_homography(pixel_pts, world_pts)
    return HomographyTile(tuple(pixel_pts), matrix, tuple(world_pts))


class FallbackPolicy(Enum):
    """What transform_point does for pixels outside every tile."""

    NEAREST_TILE = "nearest_tile"
    REJECT = "reject"


@dataclass(frozen=True, eq=False)
class TileGrid:
    """Ordered tiles covering the calibrated image region.

    Tile order is meaningful: a pixel on a shared edge belongs to the first
    tile in the list that contains it, which makes every lookup deterministic.
    """

    tiles: tuple[HomographyTile, ...]
    fallback_policy: FallbackPolicy = FallbackPolicy.NEAREST_TILE

    def __post_init__(self) -> None:
        if not self.tiles:
            raise ValueError("tile grid must contain at least one tile")
        # cheap overlap guard: a tile center must not sit inside another tile
        centers = [
            (sum(c.u for c in t.pixel_region) / 4.0, sum(c.v for c in t.pixel_region) / 4.0)
            for t in self.tiles
        ]
        for i, (cu, cv) in enumerate(centers):
            for j, tile in enumerate(self.tiles):
                if i != j and point_in_polygon(cu, cv, [(c.u, c.v) for c in tile.pixel_region]):
                    raise ValueError(f"tile {i} overlaps tile {j} beyond a shared edge")


def transform_point(grid: TileGrid, p: PixelPoint) -> WorldPoint:
    """Map a pixel point to world coordinates through its owning tile.

    The owning tile is the first one containing the point. Misses follow the
    grid fallback policy: nearest tile by pixel distance, or rejection.
    """
    for tile in grid.tiles:
        if tile.contains(p):
            return tile.transform(p)
    if grid.fallback_policy is FallbackPolicy.REJECT:
        raise OutsideCalibratedRegion(f"pixel ({p.u}, {p.v}) not covered by any tile")
    best = min(grid.tiles, key=lambda tile: tile.distance_to(p))
    return best.transform(p)


@dataclass(frozen=True)
class TargetLine:
    """Oriented target segment with a unit inward normal.

    The inward normal points where crossing agents are headed; signed
    distances are positive on the approach side.
    """

    p0: WorldPoint
    p1: WorldPoint
    normal: tuple[float, float]

    def __post_init__(self) -> None:
        nx, ny = self.normal
        norm = math.hypot(nx, ny)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"target line normal must be unit length, got {norm}")

    @classmethod
    def from_direction(cls, p0: WorldPoint, p1: WorldPoint, toward: tuple[float, float]) -> "TargetLine":
        """Build a line normalizing the given inward direction."""
        nx, ny = toward
        norm = math.hypot(nx, ny)
        if norm < 1e-12:
            raise ValueError("inward direction must be nonzero")
        return cls(p0, p1, (nx / norm, ny / norm))


def signed_distance_to_line(p: WorldPoint, line: TargetLine) -> float:
    """Distance from p to the target line, positive on the approach side."""
    nx, ny = line.normal
    return (line.p0.x - p.x) * nx + (line.p0.y - p.y) * ny


def first_crossing_time(
    positions: np.ndarray, times: np.ndarray, line: TargetLine
) -> float | None:
    """First time the sampled path crosses the line from its approach side.

    positions is (N, 2); the crossing instant is linearly interpolated between
    the straddling samples. Returns None when the path never reaches the line
    (or started past it).
    """
    nx, ny = line.normal
    d = (line.p0.x - positions[:, 0]) * nx + (line.p0.y - positions[:, 1]) * ny
    if d[0] <= 0.0:
        return float(times[0]) if d[0] == 0.0 else None
    below = np.nonzero(d <= 0.0)[0]
    if below.size == 0:
        return None
    k = int(below[0])
    d0, d1 = d[k - 1], d[k]
    t0, t1 = times[k - 1], times[k]
    return float(t0 + (t1 - t0) * d0 / (d0 - d1))


def _segments_properly_intersect(
    a: tuple[float, float], b: tuple[float, float],
    c: tuple[float, float], d: tuple[float, float],
) -> bool:
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    o1, o2 = orient(a, b, c), orient(a, b, d)
    o3, o4 = orient(c, d, a), orient(c, d, b)
    return (o1 * o2 < 0) and (o3 * o4 < 0)


def _polygon_is_simple(vertices: Sequence[tuple[float, float]]) -> bool:
    n = len(vertices)
    for i in range(n):
        a, b = vertices[i], vertices[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            c, d = vertices[j], vertices[(j + 1) % n]
            if _segments_properly_intersect(a, b, c, d):
                return False
    return True


# Boundary points resolve to the first match in this order: conflict areas
# take precedence (fail toward caution), then react, vehicle, approach zones.
AREA_PRIORITY = ("3.1", "3.2", "2.1", "2.2", "4.1", "4.2", "1.1", "1.2")


@dataclass(frozen=True, eq=False)
class AreaMap:
    """Named world-coordinate polygons plus the target lines they imply.

    areas maps names like "3.1" to polygon vertex tuples. target_lines holds
    the pedestrian lines per crossing direction (ped_ltr_q0..q2, ped_rtl_q0..q2)
    and vehicle lines per conflict area (veh_<area>_enter / veh_<area>_leave).
    """

    areas: Mapping[str, tuple[WorldPoint, ...]]
    target_lines: Mapping[str, TargetLine]
    center_line: tuple[WorldPoint, WorldPoint]

    def __post_init__(self) -> None:
        object.__setattr__(self, "areas", dict(self.areas))
        object.__setattr__(self, "target_lines", dict(self.target_lines))
        for name, poly in self.areas.items():
            if len(poly) < 3:
                raise ValueError(f"area {name} needs at least 3 vertices")
            if not _polygon_is_simple([(p.x, p.y) for p in poly]):
                raise ValueError(f"area {name} polygon self-intersects")
        self._check_conflict_areas_disjoint()
        order = [name for name in AREA_PRIORITY if name in self.areas]
        order += [name for name in self.areas if name not in AREA_PRIORITY]
        object.__setattr__(self, "_lookup_order", tuple(order))

    def _check_conflict_areas_disjoint(self) -> None:
        if "3.1" not in self.areas or "3.2" not in self.areas:
            return
        a = [(p.x, p.y) for p in self.areas["3.1"]]
        b = [(p.x, p.y) for p in self.areas["3.2"]]
        for (x, y) in a:
            if point_in_polygon(x, y, b) and not any(
                _on_segment(x, y, *b[i], *b[(i + 1) % len(b)]) for i in range(len(b))
            ):
                raise ValueError("conflict areas 3.1 and 3.2 overlap")
        for i in range(len(a)):
            for j in range(len(b)):
                if _segments_properly_intersect(
                    a[i], a[(i + 1) % len(a)], b[j], b[(j + 1) % len(b)]
                ):
                    raise ValueError("conflict areas 3.1 and 3.2 overlap")

    def line(self, name: str) -> TargetLine:
        try:
            return self.target_lines[name]
        except KeyError:
            raise KeyError(f"area map has no target line {name!r}") from None


def pedestrian_line_name(direction_code: str, q: int) -> str:
    """Target-line key for a pedestrian: direction code is "ltr" or "rtl"."""
    return f"ped_{direction_code}_q{q}"


def vehicle_line_name(area: str, enter: bool) -> str:
    """Target-line key for a vehicle serving a conflict area."""
    return f"veh_{area}_{'enter' if enter else 'leave'}"


def locate_area(area_map: AreaMap, p: WorldPoint) -> str | None:
    """Name of the area containing p, or None when outside all polygons."""
    for name in area_map._lookup_order:
        poly = area_map.areas[name]
        if point_in_polygon(p.x, p.y, [(q.x, q.y) for q in poly]):
            return name
    return None


# --- file formats -------------------------------------------------------------

def load_tile_grid(path: str, fallback_policy: FallbackPolicy = FallbackPolicy.NEAREST_TILE) -> TileGrid:
    """Read a tile-grid JSON file (list of {"pixel": ..., "world": ...}).

    Entries may carry a precomputed "matrix"; otherwise the map is solved
    from the anchor pairs.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read tile grid {path}: {exc}") from exc
    if not isinstance(raw, list) or not raw:
        raise ManifestError(f"tile grid {path} must be a non-empty JSON array")
    tiles = []
    for idx, entry in enumerate(raw):
        try:
            pixel = tuple(PixelPoint(float(u), float(v)) for u, v in entry["pixel"])
            world = tuple(WorldPoint(float(x), float(y)) for x, y in entry["world"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"tile {idx} in {path} is malformed: {exc}") from exc
        if "matrix" in entry:
            tiles.append(HomographyTile(pixel, np.asarray(entry["matrix"], dtype=float), world))
        else:
            tiles.append(tile_from_anchors(pixel, world))
    return TileGrid(tuple(tiles), fallback_policy)


def save_tile_grid(path: str, grid: TileGrid, include_matrix: bool = True) -> None:
    entries = []
    for tile in grid.tiles:
        entry: dict = {
            "pixel": [[c.u, c.v] for c in tile.pixel_region],
            "world": [[c.x, c.y] for c in tile.world_region] if tile.world_region else None,
        }
        if include_matrix:
            entry["matrix"] = tile.matrix.tolist()
        entries.append(entry)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(entries, fh, indent=2)
        fh.write("\n")


def load_area_map(path: str) -> AreaMap:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        areas = {
            name: tuple(WorldPoint(float(x), float(y)) for x, y in poly)
            for name, poly in raw["areas"].items()
        }
        lines = {
            name: TargetLine(
                WorldPoint(*map(float, spec["p0"])),
                WorldPoint(*map(float, spec["p1"])),
                (float(spec["normal"][0]), float(spec["normal"][1])),
            )
            for name, spec in raw["target_lines"].items()
        }
        center = tuple(WorldPoint(float(x), float(y)) for x, y in raw["center_line"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"cannot read area map {path}: {exc}") from exc
    return AreaMap(areas, lines, (center[0], center[1]))


def save_area_map(path: str, area_map: AreaMap) -> None:
    doc = {
        "areas": {name: [[p.x, p.y] for p in poly] for name, poly in area_map.areas.items()},
        "target_lines": {
            name: {"p0": [ln.p0.x, ln.p0.y], "p1": [ln.p1.x, ln.p1.y], "normal": list(ln.normal)}
            for name, ln in area_map.target_lines.items()
        },
        "center_line": [[p.x, p.y] for p in area_map.center_line],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
