import math

import numpy as np
import pytest

from crossrisk.errors import NonFiniteGradient, NonFiniteParameters
from crossrisk.predictors.recurrent import (
    PARAM_NAMES,
    RecurrentRegressor,
    window_features,
)

from conftest import constant_velocity_window


def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def cell_oracle(model: RecurrentRegressor, features: np.ndarray) -> float:
    """Hand-rolled scalar evaluation of the gate equations, one unit at a time."""
    p = model.params
    h_size = model.hidden_size
    x = (features - model.feat_mean) / model.feat_std
    h = [0.0] * h_size
    for t in range(x.shape[0]):
        z = [0.0] * h_size
        r = [0.0] * h_size
        c = [0.0] * h_size
        for j in range(h_size):
            az = p["b_z"][j] + sum(x[t, i] * p["w_xz"][i, j] for i in range(3))
            ar = p["b_r"][j] + sum(x[t, i] * p["w_xr"][i, j] for i in range(3))
            for i in range(h_size):
                az += h[i] * p["w_hz"][i, j]
                ar += h[i] * p["w_hr"][i, j]
            z[j] = _sigmoid(az)
            r[j] = _sigmoid(ar)
        for j in range(h_size):
            ac = p["b_c"][j] + sum(x[t, i] * p["w_xc"][i, j] for i in range(3))
            for i in range(h_size):
                ac += r[i] * h[i] * p["w_hc"][i, j]
            c[j] = math.tanh(ac)
        h = [(1.0 - z[j]) * h[j] + z[j] * c[j] for j in range(h_size)]
    s = p["b_out"][0] + sum(h[j] * p["w_out"][j] for j in range(h_size))
    return math.log1p(math.exp(s)) if s < 30 else s


class TestForward:
    def test_zero_weights_give_log_two(self):
        model = RecurrentRegressor.zeros(8)
        w = constant_velocity_window((0.0, 0.0), (1.2, -0.4))
        out = model.predict(w)
        assert out.seconds == pytest.approx(math.log(2.0), rel=1e-12)
        assert out.produced_by == "gru8"

    def test_deterministic_across_runs(self):
        w = constant_velocity_window((1.0, 2.0), (0.8, 0.1))
        outs = set()
        for _ in range(3):
            model = RecurrentRegressor.initialize(16, np.random.default_rng(42))
            outs.add(model.predict(w).seconds)
        assert len(outs) == 1

    def test_matches_scalar_cell_oracle(self):
        rng = np.random.default_rng(9)
        model = RecurrentRegressor.initialize(5, rng)
        model.set_normalization(np.array([0.01, 0.0, 0.5]), np.array([0.2, 0.2, 0.4]))
        for _ in range(10):
            features = rng.normal(0, 0.5, (6, 3))
            got = model.predict_features(features)
            expect = cell_oracle(model, features)
            assert got == pytest.approx(expect, rel=1e-10)

    def test_non_finite_parameters_rejected(self):
        model = RecurrentRegressor.zeros(4)
        model.params["w_out"][0] = np.nan
        w = constant_velocity_window((0.0, 0.0), (1.0, 0.0))
        with pytest.raises(NonFiniteParameters):
            model.predict(w)

    def test_translation_invariant_features(self):
        w1 = constant_velocity_window((0.0, 0.0), (1.1, 0.3))
        w2 = constant_velocity_window((40.0, -12.0), (1.1, 0.3))
        assert np.allclose(window_features(w1), window_features(w2))
        model = RecurrentRegressor.initialize(8, np.random.default_rng(1))
        # identical up to float rounding of the coordinate differences
        assert model.predict(w1).seconds == pytest.approx(model.predict(w2).seconds, rel=1e-9)


def relative_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


class TestBackward:
    def _toy(self, seed=0, n=3, t=4, hidden=6):
        rng = np.random.default_rng(seed)
        model = RecurrentRegressor.initialize(hidden, rng)
        model.set_normalization(np.array([0.0, 0.0, 1.0]), np.array([0.5, 0.5, 0.8]))
        features = rng.normal(0, 0.6, (n, t, 3))
        targets = rng.uniform(0.5, 4.0, n)
        return model, features, targets

    def test_gradients_match_central_finite_differences(self):
        model, features, targets = self._toy()
        _, grads = model.loss_and_gradients(features, targets)
        eps = 1e-5
        worst = 0.0
        for name in PARAM_NAMES:
            flat = model.params[name].reshape(-1)
            grad_flat = grads[name].reshape(-1)
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + eps
                loss_plus, _ = model.loss_and_gradients(features, targets)
                flat[idx] = orig - eps
                loss_minus, _ = model.loss_and_gradients(features, targets)
                flat[idx] = orig
                numeric = (loss_plus - loss_minus) / (2 * eps)
                worst = max(worst, relative_error(grad_flat[idx], numeric))
        assert worst < 1e-4

    def test_exact_prediction_contributes_zero_gradient(self):
        model = RecurrentRegressor.zeros(4)
        features = np.zeros((1, 5, 3))
        target = np.array([math.log(2.0)])  # exactly the model output
        loss, grads = model.loss_and_gradients(features, target)
        assert loss == 0.0
        for g in grads.values():
            assert np.all(g == 0.0)

    def test_batch_gradient_is_mean_of_per_sample(self):
        model, features, targets = self._toy(seed=3, n=4)
        _, batch_grads = model.loss_and_gradients(features, targets)
        accum = {k: np.zeros_like(v) for k, v in batch_grads.items()}
        for i in range(features.shape[0]):
            _, g = model.loss_and_gradients(features[i : i + 1], targets[i : i + 1])
            for k in accum:
                accum[k] += g[k] / features.shape[0]
        for k in accum:
            assert np.allclose(batch_grads[k], accum[k], atol=1e-12)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_gradient_detected(self):
        model, features, targets = self._toy()
        features = features.copy()
        features[0, 0, 0] = np.inf
        with pytest.raises((NonFiniteGradient, NonFiniteParameters)):
            model.loss_and_gradients(features, targets)
