"""Tests for the end-to-end trainable system."""

import math

import numpy as np
import pytest

from fiberae.autoencoder import (
    AutoencoderModel,
    CheckpointError,
    TrainConfig,
    TrainingDivergedError,
    batch_loss,
    batch_loss_and_grads,
    build_model,
    constellation_points,
    decode,
    detect,
    encode,
    load_checkpoint,
    load_train_config,
    model_parameters,
    renormalize,
    save_checkpoint,
    train,
)
from fiberae.channel import ChannelParams, draw_noise, make_rng, propagate, watts_from_dbm
from fiberae.gradcheck import end_to_end_error
from fiberae.nets import DenseLayer, DenseNetwork

AWGN = ChannelParams(gamma=0.0)
NLPN = ChannelParams()


def toy_model(points_2d, p_in, m=None, params=AWGN):
    """Model whose tx is a single linear layer emitting fixed raw symbols."""
    pts = np.asarray(points_2d, dtype=float)
    m = pts.shape[0] if m is None else m
    tx = DenseNetwork([DenseLayer(pts, np.zeros(2), "linear")])
    rx_layers = [
        DenseLayer(np.zeros((2, m)), np.zeros(m), "tanh"),
        DenseLayer(np.zeros((m, m)), np.zeros(m), "sigmoid"),
    ]
    model = AutoencoderModel(
        tx=tx,
        rx=DenseNetwork(rx_layers),
        norm_scale=1.0,
        m=m,
        params=params,
        input_power_w=p_in,
    )
    return model


class TestRenormalize:
    def test_unit_circle_points(self):
        # raw symbols 1, -1, j, -j all at power 1; P_in = 1e-3
        model = toy_model([[1, 0], [-1, 0], [0, 1], [0, -1]], 1e-3)
        scale = renormalize(model)
        assert scale == pytest.approx(0.03162277660168379, rel=1e-12)

    def test_fixed_point(self):
        pts = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]]) * math.sqrt(1e-3)
        model = toy_model(pts, 1e-3)
        assert renormalize(model) == pytest.approx(1.0, rel=1e-12)

    def test_doubling_halves_scale(self):
        pts = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])
        s1 = renormalize(toy_model(pts, 1e-3))
        s2 = renormalize(toy_model(2.0 * pts, 1e-3))
        assert s2 == pytest.approx(s1 / 2.0, rel=1e-12)

    def test_zero_power_rejected(self):
        model = toy_model(np.zeros((4, 2)), 1e-3)
        with pytest.raises(ValueError):
            renormalize(model)

    def test_power_constraint_after_renormalize(self):
        model = build_model(16, NLPN, watts_from_dbm(3.0), seed=0)
        pts = constellation_points(model)
        assert np.mean(np.abs(pts) ** 2) == pytest.approx(
            model.input_power_w, rel=1e-12
        )


class TestEncode:
    def test_antipodal_toy(self):
        model = toy_model([[1, 0], [-1, 0]], 1e-3)
        renormalize(model)
        root = math.sqrt(1e-3)
        assert encode(model, 0) == pytest.approx(complex(root, 0), rel=1e-12)
        assert encode(model, 1) == pytest.approx(complex(-root, 0), rel=1e-12)

    def test_mean_power_forced(self):
        model = build_model(8, AWGN, 2e-3, seed=1)
        pts = np.array([encode(model, s) for s in range(8)])
        assert np.mean(np.abs(pts) ** 2) == pytest.approx(2e-3, rel=1e-12)

    def test_out_of_range_message(self):
        model = build_model(4, AWGN, 1e-3, seed=0)
        with pytest.raises(ValueError):
            encode(model, 4)


class TestDecode:
    def test_posterior_sums_to_one(self):
        model = build_model(16, NLPN, 1e-3, seed=2)
        rng = make_rng(3)
        y = 0.03 * (rng.standard_normal(50) + 1j * rng.standard_normal(50))
        post = decode(model, y)
        assert post.shape == (50, 16)
        assert np.allclose(post.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(post >= 0)

    def test_zero_receiver_gives_uniform(self):
        model = toy_model([[1, 0], [-1, 0], [0, 1], [0, -1]], 1e-3)
        post = decode(model, 0.01 + 0.02j)
        assert np.allclose(post, 0.25, atol=1e-15)

    def test_detect_tie_breaks_low(self):
        model = toy_model([[1, 0], [-1, 0], [0, 1], [0, -1]], 1e-3)
        # uniform posterior everywhere: argmax must return message 0
        assert detect(model, 0.005 - 0.003j) == 0


class TestEndToEndGradients:
    def test_full_pipeline_matches_finite_differences(self):
        # M=4, K=5, N=8, fixed noise
        assert end_to_end_error(m=4, segments=5, batch=8, seed=0) < 1e-5

    def test_gradients_flow_through_norm_scale(self):
        # scaling all tx output weights leaves the loss invariant, so the
        # projection of the gradient onto that direction must vanish
        params = ChannelParams(segments=3)
        model = build_model(4, params, 1e-3, seed=4)
        messages = np.arange(8) % 4
        noise = draw_noise(params, messages.shape, make_rng(5))
        _, grads, _ = batch_loss_and_grads(model, messages, noise)
        plist = model_parameters(model)
        # last tx layer: weights at index 2*(len(tx.layers)-1), biases next
        wi = 2 * (len(model.tx.layers) - 1)
        w, b = plist[wi], plist[wi + 1]
        dot = float(np.sum(grads[wi] * w) + np.sum(grads[wi + 1] * b))
        norm = float(np.sum(np.abs(grads[wi] * w)) + np.sum(np.abs(grads[wi + 1] * b)))
        assert abs(dot) < 1e-12 * max(norm, 1e-30)


class TestTrain:
    def test_lr_zero_keeps_weights(self):
        model = build_model(4, AWGN, 1e-3, seed=6)
        before = [p.copy() for p in model_parameters(model)]
        train(model, TrainConfig(batch_size=16, batches=5, learning_rate=0.0, seed=7))
        after = model_parameters(model)
        for a, b in zip(before, after):
            assert np.array_equal(a, b)

    def test_first_loss_near_log_m(self):
        for m in (4, 16):
            model = build_model(m, NLPN, 1e-3, seed=8)
            res = train(model, TrainConfig(batch_size=4 * m, batches=1, learning_rate=1e-3, seed=9))
            assert res.losses[0] == pytest.approx(math.log(m), rel=0.10)

    def test_reproducible_trace(self):
        cfg = TrainConfig(batch_size=16, batches=20, learning_rate=1e-3, seed=10)
        model_a = build_model(4, AWGN, 1e-3, seed=11)
        model_b = build_model(4, AWGN, 1e-3, seed=11)
        res_a = train(model_a, cfg)
        res_b = train(model_b, cfg)
        assert np.array_equal(res_a.losses, res_b.losses)
        for a, b in zip(model_parameters(model_a), model_parameters(model_b)):
            assert np.array_equal(a, b)

    def test_batch_size_must_be_multiple_of_m(self):
        model = build_model(4, AWGN, 1e-3, seed=0)
        with pytest.raises(ValueError):
            train(model, TrainConfig(batch_size=10, batches=1, learning_rate=1e-3, seed=0))

    def test_divergence_aborts_with_report(self):
        model = build_model(4, AWGN, 1e-3, seed=12)
        model.rx.layers[-1].weights[0, 0] = np.nan
        with pytest.raises(TrainingDivergedError):
            train(model, TrainConfig(batch_size=8, batches=2, learning_rate=1e-3, seed=13))

    def test_power_override_applied(self):
        model = build_model(4, AWGN, 1e-3, seed=14)
        train(
            model,
            TrainConfig(batch_size=8, batches=2, learning_rate=1e-3, seed=15, power_dbm=-10.0),
        )
        assert model.input_power_w == pytest.approx(watts_from_dbm(-10.0), rel=1e-15)
        pts = constellation_points(model)
        assert np.mean(np.abs(pts) ** 2) == pytest.approx(model.input_power_w, rel=1e-12)

    def test_awgn_high_snr_learns_clean_constellation(self):
        # M=4 at 40 dB SNR: after training, the measured SER must be < 1e-3
        params = ChannelParams(gamma=0.0, noise_power_w=watts_from_dbm(-40.0))
        model = build_model(4, params, watts_from_dbm(0.0), seed=0, hidden_width=16)
        train(model, TrainConfig(batch_size=256, batches=2000, learning_rate=1e-3, seed=16))
        rng = make_rng(17)
        n = 40_000
        msgs = np.arange(n) % 4
        y = propagate(constellation_points(model)[msgs], params, rng)
        assert np.mean(detect(model, y) != msgs) < 1e-3


class TestCheckpoints:
    def test_round_trip_bytes_identical(self, tmp_path):
        model = build_model(4, NLPN, 1e-3, seed=18)
        cfg = TrainConfig(batch_size=8, batches=1, learning_rate=1e-3, seed=19)
        train(model, cfg)
        p1 = tmp_path / "a.json"
        p2 = tmp_path / "b.json"
        save_checkpoint(model, p1, cfg)
        loaded = load_checkpoint(p1)
        save_checkpoint(loaded, p2, load_train_config(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_round_trip_preserves_forward_exactly(self, tmp_path):
        model = build_model(8, NLPN, 1e-3, seed=20)
        path = tmp_path / "m.json"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        rng = make_rng(21)
        y = 0.05 * (rng.standard_normal(100) + 1j * rng.standard_normal(100))
        assert np.array_equal(decode(model, y), decode(loaded, y))
        for s in range(8):
            assert encode(model, s) == encode(loaded, s)

    def test_truncated_file_rejected(self, tmp_path):
        model = build_model(4, AWGN, 1e-3, seed=22)
        path = tmp_path / "m.json"
        save_checkpoint(model, path)
        path.write_bytes(path.read_bytes()[: path.stat().st_size // 2])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_wrong_format_rejected(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text('{"format": "something-else", "version": 1}\n')
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_wrong_version_rejected(self, tmp_path):
        model = build_model(4, AWGN, 1e-3, seed=23)
        path = tmp_path / "m.json"
        save_checkpoint(model, path)
        import json

        doc = json.loads(path.read_text())
        doc["version"] = 999
        path.write_text(json.dumps(doc))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
