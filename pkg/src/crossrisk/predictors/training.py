"""Training loop for the recurrent regressor and validation-MAE model selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from ..errors import DatasetTooSmall, DivergedLoss, EmptyCandidates, PredictionError
from ..geometry import TargetLine
from ..stream import SlidingWindowTrajectory
from .base import ARRIVAL_TIME_CAP_S, ArrivalPrediction
from .dataset import Awareness, LabeledSample
from .historical import HistoricalAveragePredictor
from .recurrent import RecurrentRegressor, window_features

log = logging.getLogger(__name__)

MIN_TRAINING_SAMPLES = 50
TRAIN_FRACTION = 0.8
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class ArrivalTimePredictor(Protocol):
    name: str

    def predict(self, window: SlidingWindowTrajectory, line: TargetLine) -> ArrivalPrediction: ...


@dataclass(frozen=True)
class TrainingConfig:
    seed: int = 0
    hidden_size: int = 32
    learning_rate: float = 0.01
    epochs: int = 200
    patience: int = 15
    batch_size: int = 32

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.patience < 0 or self.batch_size < 1:
            raise ValueError("epochs, patience and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


def usable_samples(samples: Sequence[LabeledSample]) -> list[LabeledSample]:
    """Training pool: only pedestrians/vehicles that did not notice a threat,
    which keeps the models tuned to the worst-case (unaware) behavior."""
    return [s for s in samples if s.awareness is Awareness.DID_NOT_NOTICE]


def split_samples(
    samples: Sequence[LabeledSample], seed: int
) -> tuple[list[LabeledSample], list[LabeledSample]]:
    """Deterministic seeded 8:2 shuffle split."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    cut = int(round(TRAIN_FRACTION * len(samples)))
    train = [samples[i] for i in order[:cut]]
    val = [samples[i] for i in order[cut:]]
    return train, val


def _features_and_targets(samples: Sequence[LabeledSample]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([window_features(s.window) for s in samples])
    y = np.array([s.arrival_time for s in samples])
    return x, y


def train(
    model: RecurrentRegressor,
    samples: Sequence[LabeledSample],
    config: TrainingConfig,
) -> tuple[RecurrentRegressor, float]:
    """Fit the regressor with Adam on MAE loss; returns best-epoch weights.

    Deterministic given the config seed: the 8:2 split, batch order and
    weight updates all draw from one seeded generator. Stops early when the
    validation MAE has not improved for `patience` epochs.
    """
    pool = usable_samples(samples)
    if len(pool) < MIN_TRAINING_SAMPLES:
        raise DatasetTooSmall(
            f"{len(pool)} unaware samples available, need {MIN_TRAINING_SAMPLES}"
        )
    train_set, val_set = split_samples(pool, config.seed)
    x_train, y_train = _features_and_targets(train_set)
    x_val, y_val = _features_and_targets(val_set)

    mean = x_train.reshape(-1, x_train.shape[-1]).mean(axis=0)
    std = x_train.reshape(-1, x_train.shape[-1]).std(axis=0)
    std = np.where(std > 1e-8, std, 1.0)
    model.set_normalization(mean, std)

    rng = np.random.default_rng(config.seed + 1)
    m_state = {k: np.zeros_like(v) for k, v in model.params.items()}
    v_state = {k: np.zeros_like(v) for k, v in model.params.items()}
    step = 0

    initial_mae = model.batch_mae(x_val, y_val)
    best_mae = initial_mae
    best_params = model.copy_params()
    stale = 0

    for epoch in range(config.epochs):
        order = rng.permutation(len(train_set))
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            _, grads = model.loss_and_gradients(x_train[batch], y_train[batch])
            step += 1
            for name, grad in grads.items():
                m_state[name] = ADAM_BETA1 * m_state[name] + (1 - ADAM_BETA1) * grad
                v_state[name] = ADAM_BETA2 * v_state[name] + (1 - ADAM_BETA2) * grad * grad
                m_hat = m_state[name] / (1 - ADAM_BETA1**step)
                v_hat = v_state[name] / (1 - ADAM_BETA2**step)
                model.params[name] -= config.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)

        val_mae = model.batch_mae(x_val, y_val)
        if val_mae > 10.0 * max(initial_mae, 1e-6):
            raise DivergedLoss(
                f"validation MAE {val_mae:.4f} exceeded 10x initial {initial_mae:.4f}"
            )
        if val_mae < best_mae - 1e-12:
            best_mae = val_mae
            best_params = model.copy_params()
            stale = 0
        else:
            stale += 1
            if stale > config.patience:
                log.debug("early stop at epoch %d (best val MAE %.4f)", epoch, best_mae)
                break

    model.set_params(best_params)
    return model, best_mae


def evaluate_mae(
    predictor: ArrivalTimePredictor, samples: Sequence[LabeledSample]
) -> float:
    """Mean absolute error of a predictor on labeled samples.

    Failed predictions (agent past the line, no approach, ...) count as the
    cap value, the maximally wrong answer, so a fragile predictor cannot win
    selection by silently skipping hard samples.
    """
    if not samples:
        raise ValueError("cannot evaluate on an empty sample list")
    errors = []
    for s in samples:
        try:
            predicted = predictor.predict(s.window, s.q.line).seconds
        except PredictionError:
            predicted = ARRIVAL_TIME_CAP_S
        errors.append(abs(predicted - s.arrival_time))
    return float(np.mean(errors))


def select_model(
    candidates: Sequence[ArrivalTimePredictor],
    validation_samples: Sequence[LabeledSample],
) -> tuple[ArrivalTimePredictor, float]:
    """Pick the candidate with the lowest validation MAE.

    Ties resolve toward the earliest declared candidate.
    """
    if not candidates:
        raise EmptyCandidates("no predictors to select from")
    maes = [evaluate_mae(c, validation_samples) for c in candidates]
    best = int(np.argmin(maes))
    return candidates[best], maes[best]


def train_and_select(
    samples: Sequence[LabeledSample],
    config: TrainingConfig,
    hidden_sizes: Sequence[int] = (16, 32),
) -> tuple[ArrivalTimePredictor, float]:
    """Train the recurrent candidates and pick among {baseline, trained GRUs}
    by validation MAE on a shared split."""
    pool = usable_samples(samples)
    if len(pool) < MIN_TRAINING_SAMPLES:
        raise DatasetTooSmall(
            f"{len(pool)} unaware samples available, need {MIN_TRAINING_SAMPLES}"
        )
    _, val_set = split_samples(pool, config.seed)
    candidates: list[ArrivalTimePredictor] = [HistoricalAveragePredictor()]
    for size in hidden_sizes:
        model = RecurrentRegressor.initialize(size, np.random.default_rng(config.seed))
        trained, _ = train(model, samples, config)
        candidates.append(trained)
    return select_model(candidates, val_set)
