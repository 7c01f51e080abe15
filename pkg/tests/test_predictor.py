"""Predictor contracts: widths, determinism, tape gradients, oracles."""

import numpy as np
import pytest

from bflow import continuous as cts
from bflow.numerics import Rng
from bflow.predictor import (
    MLP,
    ConstantPredictor,
    CtsDatumPredictor,
    CtsPosteriorPredictor,
    DiscreteOneHotPredictor,
    PredictorSpec,
    time_features,
)


class TestSpecWidths:
    def test_continuous(self):
        s = PredictorSpec("continuous", D=5)
        assert (s.state_width, s.output_width) == (5, 5)

    def test_discretised(self):
        s = PredictorSpec("discretised", D=5)
        assert (s.state_width, s.output_width) == (5, 10)

    def test_discrete(self):
        s = PredictorSpec("discrete", D=4, K=3)
        assert (s.state_width, s.output_width) == (12, 12)

    def test_discrete_binary(self):
        s = PredictorSpec("discrete", D=4, K=2)
        assert (s.state_width, s.output_width) == (4, 4)

    def test_fourier_width_independent_of_head(self):
        raw = PredictorSpec("continuous", D=3, time_feature="raw")
        four = PredictorSpec("continuous", D=3, time_feature="fourier")
        assert raw.output_width == four.output_width
        assert four.input_width == 3 + 16

    def test_invalid(self):
        with pytest.raises(ValueError):
            PredictorSpec("images", D=3)
        with pytest.raises(ValueError):
            PredictorSpec("discrete", D=3, K=1)


class TestTimeFeatures:
    def test_raw(self):
        s = PredictorSpec("continuous", D=1, time_feature="raw")
        np.testing.assert_allclose(time_features(s, 0.3), [[0.3]])

    def test_fourier_shape_and_values(self):
        s = PredictorSpec("continuous", D=1)
        f = time_features(s, 0.5)
        assert f.shape == (1, 16)
        assert f[0, 0] == pytest.approx(np.sin(np.pi * 0.5))
        assert f[0, 8] == pytest.approx(np.cos(np.pi * 0.5))


class TestMLP:
    def test_zero_params_zero_output(self):
        mlp = MLP(PredictorSpec("continuous", D=3, hidden=(4,)), seed=0)
        mlp.params = np.zeros_like(mlp.params)
        np.testing.assert_array_equal(mlp.forward(np.ones(3), 0.5), np.zeros(3))

    def test_deterministic(self):
        spec = PredictorSpec("continuous", D=3, hidden=(8, 8))
        a = MLP(spec, seed=7)
        b = MLP(spec, seed=7)
        x = np.array([0.1, -0.2, 0.4])
        assert np.array_equal(a.forward(x, 0.3), b.forward(x, 0.3))
        assert np.array_equal(a.params, b.params)

    def test_wrong_input_width(self):
        mlp = MLP(PredictorSpec("continuous", D=3, hidden=(4,)), seed=0)
        with pytest.raises(ValueError):
            mlp.forward(np.zeros(5), 0.1)

    def test_backward_requires_forward(self):
        mlp = MLP(PredictorSpec("continuous", D=2, hidden=(4,)), seed=1)
        with pytest.raises(ValueError):
            mlp.backward_batch(np.zeros((1, 2)))

    def test_linear_layer_gradient_analytic(self):
        # single linear layer: grad of sum(out * up) is input (x) outer up
        spec = PredictorSpec("continuous", D=2, hidden=(), time_feature="raw")
        mlp = MLP(spec, seed=3)
        x = np.array([[0.5, -1.0]])
        t = np.array([0.25])
        mlp.forward_batch(x, t, record=True)
        up = np.array([[2.0, -3.0]])
        grad = mlp.backward_batch(up)
        w = {name: grad[off : off + int(np.prod(shape))].reshape(shape) for name, shape, off in mlp.layout}
        inp = np.array([0.5, -1.0, 0.25])
        np.testing.assert_allclose(w["W0"], np.outer(inp, up[0]), atol=1e-14)
        np.testing.assert_allclose(w["b0"], up[0], atol=1e-14)

    def test_zero_upstream_zero_gradient(self):
        mlp = MLP(PredictorSpec("discretised", D=3, hidden=(8,)), seed=4)
        mlp.forward_batch(np.ones((2, 3)), np.array([0.2, 0.8]), record=True)
        grad = mlp.backward_batch(np.zeros((2, 6)))
        assert np.all(grad == 0.0)

    @pytest.mark.parametrize("activation", ["silu", "tanh"])
    def test_tape_gradient_vs_finite_differences(self, activation):
        spec = PredictorSpec("continuous", D=3, hidden=(6, 5), activation=activation)
        mlp = MLP(spec, seed=5)
        rng = np.random.default_rng(0)
        X = rng.normal(size=(4, 3))
        t = rng.uniform(size=4)
        up = rng.normal(size=(4, 3))
        mlp.forward_batch(X, t, record=True)
        grad = mlp.backward_batch(up)
        h = 1e-6
        idxs = rng.choice(mlp.n_params, size=40, replace=False)
        for j in idxs:
            saved = mlp.params[j]
            mlp.params[j] = saved + h
            up_plus = float(np.sum(mlp.forward_batch(X, t) * up))
            mlp.params[j] = saved - h
            up_minus = float(np.sum(mlp.forward_batch(X, t) * up))
            mlp.params[j] = saved
            fd = (up_plus - up_minus) / (2 * h)
            assert abs(grad[j] - fd) <= 1e-5 * max(1.0, abs(fd))


class TestOracles:
    def test_constant(self):
        p = ConstantPredictor(np.array([1.0, 2.0]))
        np.testing.assert_array_equal(p.forward(np.zeros(9), 0.9), [1.0, 2.0])

    def test_discrete_one_hot_softmaxes_to_one_hot(self):
        p = DiscreteOneHotPredictor(np.array([2, 1]), 3)
        logits = p.forward(None, 0.5).reshape(2, 3)
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        sm = e / e.sum(axis=1, keepdims=True)
        assert abs(sm[0, 1] - 1.0) < 1e-6
        assert abs(sm[1, 0] - 1.0) < 1e-6

    def test_posterior_oracle_single_atom(self):
        cfg = cts.CtsConfig(sigma1=0.02, D=2)
        c = np.array([[0.3, -0.1]])
        oracle = CtsPosteriorPredictor(c, cfg.sigma1)
        p = cts.flow_sample(Rng(0), cfg, c[0], 0.4)
        np.testing.assert_allclose(cts.output_prediction(oracle, cfg, p, 0.4), c[0], atol=1e-10)

    def test_posterior_oracle_symmetry(self):
        cfg = cts.CtsConfig(sigma1=0.02, D=1)
        data = np.array([[-0.6], [0.6]])
        oracle = CtsPosteriorPredictor(data, cfg.sigma1)
        assert oracle.posterior_mean(np.array([0.0]), 0.5)[0] == pytest.approx(0.0, abs=1e-12)

    def test_posterior_oracle_enumeration(self):
        # brute-force posterior mean over 8 atoms
        rng = np.random.default_rng(1)
        data = rng.uniform(-1, 1, size=(8, 3))
        sigma1 = 0.05
        oracle = CtsPosteriorPredictor(data, sigma1)
        t = 0.35
        g = 1 - sigma1 ** (2 * t)
        mean = np.array([0.2, -0.3, 0.05])
        w = np.exp(-np.sum((mean - g * data) ** 2, axis=1) / (2 * g * (1 - g)))
        w /= w.sum()
        ref = w @ data
        np.testing.assert_allclose(oracle.posterior_mean(mean, t), ref, atol=1e-10)

    def test_datum_oracle_perfect_recovery(self):
        cfg = cts.CtsConfig(sigma1=0.02, D=1)
        x = np.array([0.7])
        oracle = CtsDatumPredictor(x, cfg.sigma1)
        p = cts.flow_sample(Rng(2), cfg, x, 0.8)
        np.testing.assert_allclose(cts.output_prediction(oracle, cfg, p, 0.8), x, atol=1e-12)
