"""Threshold tuning by exhaustive grid enumeration with k-fold
cross-validation, plus the four evaluation metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import EmptyGrid, TooFewEpisodes
from .ppet import ConflictScenario, PPetVector
from .risk import (
    AreaRole,
    CategoryThresholds,
    RiskLevel,
    RiskThresholdConfig,
    ThresholdInterval,
    ThresholdMode,
    classify_offline,
)
from .stream import AgentCategory


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary confusion counts; the positive class is Risk 2."""

    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MetricsReport:
    """Accuracy, precision, recall and F1; None marks an undefined metric
    (zero denominator), which is reported as undefined rather than 0."""

    accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def metrics(c: ConfusionCounts) -> MetricsReport:
    """Exact classification metrics from confusion counts."""
    accuracy = (c.tp + c.tn) / c.total if c.total > 0 else None
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) > 0 else None
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) > 0 else None
    if precision is None or recall is None or (precision + recall) == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return MetricsReport(accuracy, precision, recall, f1)


@dataclass(frozen=True)
class Episode:
    """One pedestrian crossing: its per-frame P-PET trace and true labels."""

    ped_id: str
    category: AgentCategory
    trace: tuple[PPetVector, ...]
    labels: Mapping[AreaRole, RiskLevel]

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", dict(self.labels))


def kfold_split(
    episodes: Sequence[Episode], k: int = 10, seed: int = 0
) -> list[list[Episode]]:
    """Seeded episode-level partition into k folds of near-equal size.

    Splitting is always per episode, never per frame, so one pedestrian's
    frames can never leak across folds.
    """
    if len(episodes) < k:
        raise TooFewEpisodes(f"{len(episodes)} episodes for {k} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(episodes))
    base, extra = divmod(len(episodes), k)
    folds: list[list[Episode]] = []
    start = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append([episodes[j] for j in order[start : start + size]])
        start += size
    return folds


@dataclass(frozen=True)
class IntervalGrid:
    """Candidate [alpha, beta] pairs from two stepped ranges (alpha <= beta)."""

    alpha_lo: float
    alpha_hi: float
    alpha_step: float
    beta_lo: float
    beta_hi: float
    beta_step: float

    def __post_init__(self) -> None:
        if self.alpha_step <= 0 or self.beta_step <= 0:
            raise ValueError("grid steps must be positive")

    @staticmethod
    def _values(lo: float, hi: float, step: float) -> list[float]:
        n = int(math.floor((hi - lo) / step + 1e-9))
        return [round(lo + i * step, 9) for i in range(n + 1)]

    def pairs(self) -> list[ThresholdInterval]:
        out = []
        for a in self._values(self.alpha_lo, self.alpha_hi, self.alpha_step):
            for b in self._values(self.beta_lo, self.beta_hi, self.beta_step):
                if a <= b:
                    out.append(ThresholdInterval(a, b))
        return out


@dataclass(frozen=True)
class GridSpec:
    """Search space: interval grids per (area, scenario) and counter candidates
    per area."""

    axes: Mapping[tuple[AreaRole, ConflictScenario], IntervalGrid]
    theta: Mapping[AreaRole, tuple[int, ...]]

    def __post_init__(self) -> None:
        object.__setattr__(self, "axes", dict(self.axes))
        object.__setattr__(self, "theta", dict(self.theta))

    @classmethod
    def default(cls) -> "GridSpec":
        """Covers every shipped interval: alpha, beta in [-4, 3] step 0.1 and
        counter limits 1..6. Exhaustive search over this full joint grid is
        enormous; narrow it for practical runs."""
        grid = IntervalGrid(-4.0, 3.0, 0.1, -4.0, 3.0, 0.1)
        axes = {
            (role, scenario): grid
            for role in (AreaRole.CLOSER, AreaRole.FURTHER, AreaRole.MERGED)
            for scenario in ConflictScenario
        }
        thetas = tuple(range(1, 7))
        return cls(axes, {role: thetas for role in AreaRole})

    @classmethod
    def from_dict(cls, doc: Mapping) -> "GridSpec":
        axes = {}
        for role_name, scenarios in doc["axes"].items():
            for scenario_name, ranges in scenarios.items():
                a_lo, a_hi, a_step = (float(v) for v in ranges["alpha"])
                b_lo, b_hi, b_step = (float(v) for v in ranges["beta"])
                axes[(AreaRole(role_name), ConflictScenario(scenario_name))] = IntervalGrid(
                    a_lo, a_hi, a_step, b_lo, b_hi, b_step
                )
        theta = {
            AreaRole(role_name): tuple(int(v) for v in values)
            for role_name, values in doc["theta"].items()
        }
        return cls(axes, theta)

    def configs_for_role(
        self, role: AreaRole
    ) -> Iterator[tuple[ThresholdInterval, ThresholdInterval, int]]:
        """Lexicographic enumeration: PF interval, then VF interval, then theta."""
        pf_axis = self.axes.get((role, ConflictScenario.PEDESTRIAN_FIRST))
        vf_axis = self.axes.get((role, ConflictScenario.VEHICLE_FIRST))
        thetas = self.theta.get(role, ())
        if pf_axis is None or vf_axis is None or not thetas:
            raise EmptyGrid(f"grid has no axes for area {role.value}")
        pf_pairs = pf_axis.pairs()
        vf_pairs = vf_axis.pairs()
        if not pf_pairs or not vf_pairs:
            raise EmptyGrid(f"grid enumerates no intervals for area {role.value}")
        for pf in pf_pairs:
            for vf in vf_pairs:
                for theta in thetas:
                    yield pf, vf, theta


@dataclass(frozen=True)
class GridPointRow:
    """One evaluated grid point, for the per-point accuracy CSV."""

    category: AgentCategory
    role: AreaRole
    pf: ThresholdInterval
    vf: ThresholdInterval
    theta: int
    cv_accuracy: float


@dataclass(frozen=True)
class CalibrationResult:
    config: RiskThresholdConfig
    cv_accuracy: Mapping[tuple[AgentCategory, AreaRole], float]
    test_metrics: MetricsReport
    seed: int
    rows: tuple[GridPointRow, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "cv_accuracy", dict(self.cv_accuracy))


def _component_matrix(
    episodes: Sequence[Episode], role: AreaRole, scenario: ConflictScenario
) -> list[np.ndarray]:
    # NaN marks unavailable components; NaN never satisfies interval membership.
    out = []
    for e in episodes:
        vals = np.full(len(e.trace), np.nan)
        for i, vec in enumerate(e.trace):
            v = vec.component(role.value, scenario)
            if v is not None:
                vals[i] = v
        out.append(vals)
    return out


def _hits_for_config(
    pf_vals: Sequence[np.ndarray], vf_vals: Sequence[np.ndarray],
    pf: ThresholdInterval, vf: ThresholdInterval,
) -> np.ndarray:
    """Per-episode count of frames with any in-interval component."""
    counts = np.zeros(len(pf_vals), dtype=int)
    for i, (pv, vv) in enumerate(zip(pf_vals, vf_vals)):
        with np.errstate(invalid="ignore"):
            hits = ((pv >= pf.alpha) & (pv <= pf.beta)) | ((vv >= vf.alpha) & (vv <= vf.beta))
        counts[i] = int(np.count_nonzero(hits))
    return counts


def confusion_from_labels(
    pairs: Iterable[tuple[RiskLevel, RiskLevel]]
) -> ConfusionCounts:
    """Confusion counts from (predicted, truth) level pairs; Risk 2 positive."""
    tp = tn = fp = fn = 0
    for predicted, truth in pairs:
        pred_pos = predicted is RiskLevel.RISK2 or predicted == RiskLevel.RISK2
        true_pos = truth is RiskLevel.RISK2 or truth == RiskLevel.RISK2
        if pred_pos and true_pos:
            tp += 1
        elif pred_pos:
            fp += 1
        elif true_pos:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, tn, fp, fn)


def _search_role(
    episodes: Sequence[Episode],
    grid: GridSpec,
    role: AreaRole,
    mode: ThresholdMode,
    k: int,
    seed: int,
    rows: list[GridPointRow],
) -> tuple[ThresholdInterval, ThresholdInterval, int, float]:
    """Exhaustively score every (PF, VF, theta) point for one area role.

    Returns the argmax of mean cross-validated accuracy; ties prefer the
    narrower summed interval width, then the earlier enumeration order.
    """
    folds = kfold_split(episodes, k, seed)
    fold_of: dict[str, int] = {}
    for fi, fold in enumerate(folds):
        for e in fold:
            fold_of[e.ped_id] = fi
    fold_index = np.array([fold_of[e.ped_id] for e in episodes])

    merged = mode is ThresholdMode.MERGED_AREA
    if merged:
        pf_closer = _component_matrix(episodes, AreaRole.CLOSER, ConflictScenario.PEDESTRIAN_FIRST)
        vf_closer = _component_matrix(episodes, AreaRole.CLOSER, ConflictScenario.VEHICLE_FIRST)
        pf_further = _component_matrix(episodes, AreaRole.FURTHER, ConflictScenario.PEDESTRIAN_FIRST)
        vf_further = _component_matrix(episodes, AreaRole.FURTHER, ConflictScenario.VEHICLE_FIRST)
        truth = np.array(
            [
                [e.labels[AreaRole.CLOSER] == RiskLevel.RISK2 for e in episodes],
                [e.labels[AreaRole.FURTHER] == RiskLevel.RISK2 for e in episodes],
            ]
        )
    else:
        pf_vals = _component_matrix(episodes, role, ConflictScenario.PEDESTRIAN_FIRST)
        vf_vals = _component_matrix(episodes, role, ConflictScenario.VEHICLE_FIRST)
        truth = np.array([[e.labels[role] == RiskLevel.RISK2 for e in episodes]])

    best: tuple[ThresholdInterval, ThresholdInterval, int] | None = None
    best_acc = -1.0
    best_width = math.inf
    n_folds = len(folds)
    category = episodes[0].category

    found_any = False
    for pf, vf, theta in grid.configs_for_role(role):
        found_any = True
        if merged:
            counts = _hits_for_config(pf_closer, vf_closer, pf, vf) + _hits_for_config(
                pf_further, vf_further, pf, vf
            )
        else:
            counts = _hits_for_config(pf_vals, vf_vals, pf, vf)
        predicted = counts > theta
        correct = predicted[None, :] == truth  # (areas, episodes)
        fold_acc = np.array(
            [correct[:, fold_index == fi].mean() for fi in range(n_folds)]
        )
        acc = float(fold_acc.mean())
        rows.append(GridPointRow(category, role, pf, vf, theta, acc))
        width = pf.width + vf.width
        if acc > best_acc + 1e-12 or (
            abs(acc - best_acc) <= 1e-12 and width < best_width - 1e-12
        ):
            best = (pf, vf, theta)
            best_acc = acc
            best_width = width
    if not found_any or best is None:
        raise EmptyGrid(f"no grid points for area {role.value}")
    return best[0], best[1], best[2], best_acc


def grid_search(
    episodes: Sequence[Episode],
    grid: GridSpec,
    k: int = 10,
    seed: int = 0,
    mode: ThresholdMode = ThresholdMode.PER_AREA,
    test_fraction: float = 0.2,
) -> CalibrationResult:
    """Exhaustive threshold search with episode-level cross-validation.

    A seeded, label-independent shuffle reserves test_fraction of the
    episodes for final metrics; the grid only ever sees the remaining search
    set. Every category found in the search set is calibrated independently.
    Grid points are independent of each other, so the enumeration could run
    in parallel; results here are reduced in grid order, which keeps the
    outcome identical either way.
    """
    if not episodes:
        raise TooFewEpisodes("no episodes to calibrate on")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(episodes))
    n_test = int(round(test_fraction * len(episodes)))
    test_set = [episodes[i] for i in order[:n_test]]
    search_set = [episodes[i] for i in order[n_test:]]
    if not search_set:
        raise TooFewEpisodes("test fraction leaves no episodes to search on")

    rows: list[GridPointRow] = []
    cv_accuracy: dict[tuple[AgentCategory, AreaRole], float] = {}
    categories: dict[AgentCategory, CategoryThresholds] = {}
    for category in sorted({e.category for e in search_set}, key=int):
        cat_episodes = [e for e in search_set if e.category == category]
        intervals: dict[tuple[AreaRole, ConflictScenario], ThresholdInterval] = {}
        counters: dict[AreaRole, int] = {}
        roles = (
            (AreaRole.MERGED,)
            if mode is ThresholdMode.MERGED_AREA
            else (AreaRole.CLOSER, AreaRole.FURTHER)
        )
        for role in roles:
            pf, vf, theta, acc = _search_role(cat_episodes, grid, role, mode, k, seed, rows)
            intervals[(role, ConflictScenario.PEDESTRIAN_FIRST)] = pf
            intervals[(role, ConflictScenario.VEHICLE_FIRST)] = vf
            counters[role] = theta
            cv_accuracy[(category, role)] = acc
        categories[category] = CategoryThresholds(mode, intervals, counters)

    config = RiskThresholdConfig(categories)
    pairs: list[tuple[RiskLevel, RiskLevel]] = []
    for e in test_set:
        if e.category not in categories:
            continue
        outcome = classify_offline(e.trace, e.category, config)
        for area_role in (AreaRole.CLOSER, AreaRole.FURTHER):
            pairs.append((outcome[area_role], e.labels[area_role]))
    test_metrics = metrics(confusion_from_labels(pairs)) if pairs else MetricsReport(None, None, None, None)
    return CalibrationResult(config, cv_accuracy, test_metrics, seed, tuple(rows))
