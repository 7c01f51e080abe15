"""Optimizer, EMA, head gradients, the loop and checkpoint round-trips."""

import numpy as np
import pytest

from bflow import training
from bflow.numerics import Rng
from bflow.predictor import MLP
from bflow.training import TrainConfig, adamw_step


class TestAdamW:
    def test_zero_grad_no_decay_is_identity(self):
        p = np.array([1.0, -2.0])
        p2, m, v = adamw_step(p, np.zeros(2), np.zeros(2), np.zeros(2), 1, 1e-3, 0.0, 0.9, 0.98)
        np.testing.assert_array_equal(p2, p)

    def test_zero_grad_decay_scales(self):
        p = np.array([1.0, -2.0])
        lr, wd = 1e-2, 0.1
        p2, _, _ = adamw_step(p, np.zeros(2), np.zeros(2), np.zeros(2), 1, lr, wd, 0.9, 0.98)
        np.testing.assert_allclose(p2, p * (1 - lr * wd), rtol=1e-15)

    def test_three_step_hand_trace(self):
        # single scalar parameter, constant gradient, no decay; the oracle
        # below replays the update rule by hand
        lr, b1, b2, eps = 0.1, 0.9, 0.98, 1e-8
        g = 0.5
        p = np.array([1.0])
        m = np.zeros(1)
        v = np.zeros(1)
        p_ref, m_ref, v_ref = 1.0, 0.0, 0.0
        for step in (1, 2, 3):
            p, m, v = adamw_step(p, np.array([g]), m, v, step, lr, 0.0, b1, b2, eps)
            m_ref = b1 * m_ref + (1 - b1) * g
            v_ref = b2 * v_ref + (1 - b2) * g * g
            mh = m_ref / (1 - b1**step)
            vh = v_ref / (1 - b2**step)
            p_ref = p_ref - lr * mh / (np.sqrt(vh) + eps)
            assert p[0] == pytest.approx(p_ref, rel=1e-14)
        # first step moves by about -lr regardless of gradient scale
        first = adamw_step(np.array([0.0]), np.array([g]), np.zeros(1), np.zeros(1), 1, lr, 0.0, b1, b2, eps)[0]
        assert first[0] == pytest.approx(-lr, rel=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adamw_step(np.zeros(2), np.zeros(3), np.zeros(2), np.zeros(2), 1, 1e-3, 0.0, 0.9, 0.98)


def _make_config(modality, **kw):
    base = dict(
        modality=modality,
        D=3,
        batch_size=4,
        steps=5,
        learning_rate=1e-3,
        seed=11,
        hidden=(8, 8),
    )
    if modality == "continuous":
        base["sigma1"] = 0.02
    elif modality == "discretised":
        base["sigma1"] = 0.2
        base["K"] = 8
    else:
        base["beta1"] = 2.0
        base["K"] = 4
    base.update(kw)
    return TrainConfig(**base)


def _random_batch(rng, config):
    if config.modality == "discrete":
        return rng.integers(1, config.K + 1, size=(config.batch_size, config.D))
    return rng.uniform(size=(config.batch_size, config.D)) * 1.6 - 0.8


class TestHeadGradients:
    @pytest.mark.parametrize("modality", ["continuous", "discretised", "discrete"])
    def test_matches_central_finite_differences(self, modality):
        config = _make_config(modality)
        mlp = MLP(config.predictor_spec(), seed=3)
        r = Rng(100)
        x = _random_batch(r, config)
        state = training.sample_head_state(r, config, x)
        _, grad = training.batch_loss_and_grad(mlp, config, state)
        h = 1e-5
        rng = np.random.default_rng(0)
        idxs = rng.choice(mlp.n_params, size=50, replace=False)
        for j in idxs:
            saved = mlp.params[j]
            mlp.params[j] = saved + h
            lp = training.batch_loss(mlp, config, state)
            mlp.params[j] = saved - h
            lm = training.batch_loss(mlp, config, state)
            mlp.params[j] = saved
            fd = (lp - lm) / (2 * h)
            denom = max(abs(fd), abs(grad[j]), 1e-6)
            assert abs(grad[j] - fd) / denom < 1e-5

    def test_binary_discrete_head(self):
        config = _make_config("discrete", K=2)
        mlp = MLP(config.predictor_spec(), seed=4)
        r = Rng(200)
        x = _random_batch(r, config)
        state = training.sample_head_state(r, config, x)
        _, grad = training.batch_loss_and_grad(mlp, config, state)
        h = 1e-5
        rng = np.random.default_rng(1)
        for j in rng.choice(mlp.n_params, size=25, replace=False):
            saved = mlp.params[j]
            mlp.params[j] = saved + h
            lp = training.batch_loss(mlp, config, state)
            mlp.params[j] = saved - h
            lm = training.batch_loss(mlp, config, state)
            mlp.params[j] = saved
            fd = (lp - lm) / (2 * h)
            denom = max(abs(fd), abs(grad[j]), 1e-6)
            assert abs(grad[j] - fd) / denom < 1e-5

    def test_head_matches_sampling_op(self):
        # the head's loss must equal the sampling op evaluated at the same
        # (t, flow state) for the continuous modality
        from bflow import continuous as cts

        config = _make_config("continuous")
        mlp = MLP(config.predictor_spec(), seed=5)
        r = Rng(300)
        x = _random_batch(r, config)
        state = training.sample_head_state(r, config, x)
        out = mlp.forward_batch(state["state_in"], state["t"])
        loss_vec, _ = training.head_loss_and_grad(config, state, out)
        cfg = config.cts_config()
        for b in range(config.batch_size):
            p = cts.CtsParams(mean=state["mu"][b], precision=1.0)
            x_hat = cts.output_prediction(mlp, cfg, p, float(state["t"][b]))
            resid = x[b] - x_hat
            w = -np.log(cfg.sigma1) * cfg.sigma1 ** (-2 * state["t"][b])
            assert loss_vec[b] == pytest.approx(w * resid @ resid, rel=1e-12)

    def test_discretised_head_matches_sampling_op(self):
        from bflow import continuous as cts
        from bflow import discretised as dsc

        config = _make_config("discretised")
        mlp = MLP(config.predictor_spec(), seed=6)
        r = Rng(301)
        x = _random_batch(r, config)
        state = training.sample_head_state(r, config, x)
        out = mlp.forward_batch(state["state_in"], state["t"])
        loss_vec, _ = training.head_loss_and_grad(config, state, out)
        cfg = config.cts_config()
        for b in range(config.batch_size):
            p = cts.CtsParams(mean=state["mu"][b], precision=1.0)
            probs = dsc.output_distribution(mlp, cfg, p, float(state["t"][b]), config.K)
            resid = x[b] - dsc.k_hat(probs, config.K)
            w = -np.log(cfg.sigma1) * cfg.sigma1 ** (-2 * state["t"][b])
            assert loss_vec[b] == pytest.approx(w * resid @ resid, rel=1e-10)

    def test_discrete_head_matches_sampling_op(self):
        from bflow import discrete as dd

        config = _make_config("discrete")
        mlp = MLP(config.predictor_spec(), seed=7)
        r = Rng(302)
        x = _random_batch(r, config)
        state = training.sample_head_state(r, config, x)
        out = mlp.forward_batch(state["state_in"], state["t"])
        loss_vec, _ = training.head_loss_and_grad(config, state, out)
        sched = config.schedule
        for b in range(config.batch_size):
            probs = dd.output_distribution(mlp, state["theta"][b], float(state["t"][b]), config.K)
            resid = dd.one_hot(x[b], config.K) - probs
            ref = 0.5 * config.K * sched.alpha(float(state["t"][b])) * float(np.sum(resid * resid))
            assert loss_vec[b] == pytest.approx(ref, rel=1e-10)


class TestTrainLoop:
    def test_zero_learning_rate_keeps_params(self):
        config = _make_config("discrete", learning_rate=0.0, weight_decay=0.0, steps=8)
        r = Rng(1)
        data = Rng(2).integers(1, config.K + 1, size=(16, config.D))
        init = MLP(config.predictor_spec(), seed=config.seed).params.copy()
        result = training.train(r, data, config)
        np.testing.assert_array_equal(result.mlp.params, init)

    def test_determinism(self):
        config = _make_config("continuous", steps=6)
        data = Rng(3).uniform(size=(10, config.D)) - 0.5
        a = training.train(Rng(5), data, config)
        b = training.train(Rng(5), data, config)
        assert np.array_equal(a.mlp.params, b.mlp.params)
        assert a.history == b.history

    def test_loss_decreases_on_constant_dataset(self):
        config = _make_config(
            "continuous", D=2, steps=400, learning_rate=3e-3, sigma1=0.1,
            batch_size=32, hidden=(16, 16), weight_decay=0.0, t_min=1e-3,
        )
        data = np.tile([[0.4, -0.2]], (4, 1))
        result = training.train(Rng(6), data, config)
        first = np.mean([h[1] for h in result.history[:20]])
        last = np.mean([h[1] for h in result.history[-20:]])
        assert last < first * 0.2

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            training.train(Rng(0), np.zeros((0, 3)), _make_config("continuous"))

    def test_out_of_range_dataset_rejected(self):
        config = _make_config("discrete")
        with pytest.raises(ValueError):
            training.train(Rng(0), np.array([[0, 1, 2]]), config)

    def test_non_finite_loss_aborts_with_step(self):
        # an absurd learning rate overflows the parameters within a few
        # steps; the abort message must carry the step and batch stream id
        config = _make_config("continuous", learning_rate=1e160, steps=50)
        data = Rng(3).uniform(size=(8, config.D)) - 0.5
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(RuntimeError, match=r"step \d+ \(batch stream id \d+"):
                training.train(Rng(4), data, config)

    def test_history_csv_shape(self):
        config = _make_config("continuous", steps=4, eval_every=2)
        data = Rng(3).uniform(size=(6, config.D)) - 0.5
        result = training.train(Rng(7), data, config)
        csv = training.history_to_csv(result.history)
        lines = csv.strip().split("\n")
        assert lines[0] == "step,train_loss,eval_loss"
        assert len(lines) == 5
        assert lines[2].count(",") == 2 and not lines[1].endswith(",,")


class TestEMA:
    def test_converges_to_frozen_params(self):
        # park the raw parameters, then run many EMA updates; the gap decays
        # geometrically, so a small initial gap lands below 1e-8 after 1e5
        decay = 0.9999
        params = np.array([0.3])
        ema = params + 1e-4
        for _ in range(100_000):
            ema = decay * ema + (1 - decay) * params
        assert np.max(np.abs(ema - params)) < 1e-8

    def test_ema_tracks_training(self):
        config = _make_config("continuous", steps=5, ema_decay=0.5)
        data = Rng(3).uniform(size=(6, config.D)) - 0.5
        result = training.train(Rng(8), data, config)
        assert not np.array_equal(result.ema_params, result.mlp.params)


class TestNatsBitsReporting:
    def test_conversion_consistency(self):
        config = _make_config("discrete", steps=3)
        data = Rng(9).integers(1, config.K + 1, size=(6, config.D))
        result = training.train(Rng(10), data, config)
        rows = training.evaluate(Rng(11), training.ema_predictor(result), config, data, n_values=(4,), passes=1)
        for r in rows:
            assert r["bits_per_dim"] == pytest.approx(r["nats_per_dim"] / np.log(2), rel=1e-12)
            assert r["nats_per_dim"] == pytest.approx(r["nats"] / config.D, rel=1e-12)


class TestEvaluate:
    def test_perfect_oracle_all_zero(self):
        from bflow.predictor import DiscreteOneHotPredictor

        config = _make_config("discrete", K=4)
        x = np.array([[1, 3, 2]])
        pred = DiscreteOneHotPredictor(x[0], 4, sharpness=800.0)
        rows = training.evaluate(Rng(12), pred, config, x, n_values=(2, 8), passes=3)
        for r in rows:
            assert r["nats"] == 0.0
            assert r["se_nats"] == 0.0

    def test_rows_cover_requested_grid(self):
        config = _make_config("discrete", K=4)
        data = Rng(13).integers(1, 5, size=(3, config.D))
        pred = MLP(config.predictor_spec(), seed=1)
        rows = training.evaluate(Rng(14), pred, config, data, n_values=(10, 25), passes=1)
        assert [r["label"] for r in rows] == ["10", "25", "inf", "recon"]

    def test_continuous_recon_row_needs_noise_std(self):
        config = _make_config("continuous")
        data = Rng(13).uniform(size=(3, config.D)) - 0.5
        pred = MLP(config.predictor_spec(), seed=1)
        rows = training.evaluate(Rng(14), pred, config, data, n_values=(4,), passes=1)
        assert [r["label"] for r in rows] == ["4", "inf"]
        config2 = _make_config("continuous", recon_sigma=0.25)
        rows2 = training.evaluate(Rng(14), pred, config2, data, n_values=(4,), passes=1)
        assert [r["label"] for r in rows2] == ["4", "inf", "recon"]

    def test_se_scaling_with_passes(self):
        # quadrupling the pass count halves the reported standard error
        config = _make_config("discrete", K=4, D=2)
        data = Rng(15).integers(1, 5, size=(8, 2))
        pred = MLP(config.predictor_spec(), seed=2)
        r1 = training.evaluate(Rng(16), pred, config, data, n_values=(), passes=2)
        r4 = training.evaluate(Rng(16), pred, config, data, n_values=(), passes=8)
        se1 = r1[0]["se_nats"]
        se4 = r4[0]["se_nats"]
        assert se4 == pytest.approx(se1 / 2, rel=0.35)


class TestCheckpoint:
    def test_round_trip_byte_identical(self, tmp_path):
        config = _make_config("continuous", steps=4)
        data = Rng(17).uniform(size=(6, config.D)) - 0.5
        result = training.train(Rng(18), data, config)
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        training.save_checkpoint(p1, result)
        loaded, header = training.load_checkpoint(p1)
        loaded.history = result.history
        training.save_checkpoint(p2, loaded)
        assert p1.read_bytes() == p2.read_bytes()

    def test_params_restored(self, tmp_path):
        config = _make_config("discrete", steps=3)
        data = Rng(19).integers(1, config.K + 1, size=(6, config.D))
        result = training.train(Rng(20), data, config)
        path = tmp_path / "c.ckpt"
        training.save_checkpoint(path, result)
        loaded, _ = training.load_checkpoint(path)
        np.testing.assert_array_equal(loaded.mlp.params, result.mlp.params)
        np.testing.assert_array_equal(loaded.ema_params, result.ema_params)
        np.testing.assert_array_equal(loaded.moments_v, result.moments_v)
        assert loaded.config == config

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"nope" + b"\0" * 64)
        with pytest.raises(ValueError):
            training.load_checkpoint(path)
