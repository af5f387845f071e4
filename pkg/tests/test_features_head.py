"""Whole-recording feature extraction, feature files, and the TCN head."""

import dataclasses

import numpy as np
import pytest

from mmtas import autodiff as ad
from mmtas.data import SensorStream, framewise_labels
from mmtas.features import extract_features, read_feature_file, write_feature_file
from mmtas.model import ModelConfig
from mmtas.pretraining import PretrainModel
from mmtas.preprocessing import preprocess_recording
from mmtas.tcn import HeadConfig, MultiStageTCN, head_loss, predict, train_head, \
    load_head, save_head

from oracles import fd_gradcheck


@pytest.fixture(scope="module")
def small_model(tiny_dataset, pre_config):
    _, recordings = tiny_dataset
    cfg = ModelConfig.for_dataset(recordings[0], pre_config, d_embed=16, n_heads=2,
                                  text_vocab=64)
    return PretrainModel(cfg, layers=1, temperature_init=0.07,
                         rng=np.random.default_rng(3))


class TestExtractFeatures:
    def test_shape_and_determinism(self, tiny_dataset, pre_config, tiny_stats,
                                   small_model):
        _, recordings = tiny_dataset
        rec = recordings[0]
        a = extract_features(rec, small_model, pre_config, tiny_stats, fingerprint="fp")
        b = extract_features(rec, small_model, pre_config, tiny_stats, fingerprint="fp")
        assert a.features.shape == (rec.n_frames, 16)
        np.testing.assert_array_equal(a.features, b.features)
        assert np.all(np.isfinite(a.features))

    def test_recordings_with_different_scripts_differ(self, tiny_dataset, pre_config,
                                                      tiny_stats, small_model):
        _, recordings = tiny_dataset
        a = extract_features(recordings[0], small_model, pre_config, tiny_stats)
        b = extract_features(recordings[1], small_model, pre_config, tiny_stats)
        t = min(a.features.shape[0], b.features.shape[0])
        assert not np.allclose(a.features[:t], b.features[:t])

    def test_temporal_mode_differs_and_keeps_shape(self, tiny_dataset, pre_config,
                                                   tiny_stats, small_model):
        _, recordings = tiny_dataset
        rec = recordings[0]
        fused = extract_features(rec, small_model, pre_config, tiny_stats, mode="fused")
        temporal = extract_features(rec, small_model, pre_config, tiny_stats,
                                    mode="temporal")
        assert temporal.features.shape == fused.features.shape
        assert not np.allclose(temporal.features, fused.features)
        with pytest.raises(ValueError, match="export mode"):
            extract_features(rec, small_model, pre_config, tiny_stats, mode="bogus")

    def test_schema_mismatch_rejected(self, tiny_dataset, pre_config, tiny_stats):
        _, recordings = tiny_dataset
        from mmtas.model import SensorSpec
        wrong = ModelConfig(d_embed=16, n_heads=2,
                            sensors=(SensorSpec("other", 2, 30),),
                            image_hw=(32, 32), n_mels=64, text_vocab=64)
        model = PretrainModel(wrong, layers=1, temperature_init=0.07,
                              rng=np.random.default_rng(0))
        with pytest.raises(ValueError, match="schema mismatch"):
            extract_features(recordings[0], model, pre_config, tiny_stats)

    def test_row_depends_only_on_its_window(self, tiny_dataset, pre_config,
                                            tiny_stats, small_model):
        _, recordings = tiny_dataset
        rec = recordings[0]
        base = extract_features(rec, small_model, pre_config, tiny_stats).features
        i = 50
        start, end = rec.camera_timestamps[i - 1], rec.camera_timestamps[i]

        def perturb(stream, inside):
            margin = 2.0 * np.median(np.diff(stream.timestamps))
            if inside:
                mask = (stream.timestamps >= start) & (stream.timestamps < end)
            else:
                mask = (stream.timestamps < start - margin) | \
                    (stream.timestamps > end + margin)
            vals = stream.values.copy()
            vals[mask] += 7.5
            return SensorStream(stream.name, stream.timestamps, vals)

        outside = dataclasses.replace(
            rec,
            audio=perturb(rec.audio, inside=False),
            proprio=[perturb(s, inside=False) for s in rec.proprio])
        pert = extract_features(outside, small_model, pre_config, tiny_stats).features
        np.testing.assert_array_equal(pert[i], base[i])

        inside = dataclasses.replace(rec, proprio=[perturb(rec.proprio[0], True)]
                                     + rec.proprio[1:])
        pert_in = extract_features(inside, small_model, pre_config, tiny_stats).features
        assert not np.allclose(pert_in[i], base[i])


class TestFeatureFiles:
    def test_round_trip_and_layout(self, tiny_dataset, pre_config, tiny_stats,
                                   small_model, tmp_path):
        _, recordings = tiny_dataset
        rec = recordings[0]
        seq = extract_features(rec, small_model, pre_config, tiny_stats,
                               fingerprint="abc123")
        write_feature_file(tmp_path / rec.id, seq, config_hash="h1")
        raw = (tmp_path / f"{rec.id}.bin").read_bytes()
        assert len(raw) == seq.features.size * 4  # float32 little-endian rows
        row0 = np.frombuffer(raw[:16 * 4], dtype="<f4")
        np.testing.assert_allclose(row0, seq.features[0], rtol=1e-6)
        again = read_feature_file(tmp_path / rec.id)
        assert again.recording_id == rec.id
        assert again.checkpoint_fingerprint == "abc123"
        np.testing.assert_allclose(again.features, seq.features, rtol=1e-6, atol=1e-7)


def _toy_sequences(rng, n=3, t=120, d=8, n_classes=4):
    feats, labels = [], []
    for _ in range(n):
        y = np.repeat(rng.integers(0, n_classes, t // 12), 12)
        centers = rng.standard_normal((n_classes, d)) * 3.0
        x = centers[y] + 0.3 * rng.standard_normal((t, d))
        feats.append(x)
        labels.append(y)
    return feats, labels


class TestHead:
    def test_overfits_small_dataset(self):
        rng = np.random.default_rng(0)
        feats, labels = _toy_sequences(rng)
        cfg = HeadConfig(epochs=25, lr=2e-3, seed=0)
        head = train_head(feats, labels, 4, cfg)
        correct = total = 0
        for x, y in zip(feats, labels):
            pred = predict(x, head)
            correct += int((pred == y).sum())
            total += len(y)
        assert correct / total >= 0.99

    def test_training_is_seed_deterministic(self):
        rng = np.random.default_rng(1)
        feats, labels = _toy_sequences(rng, n=2, t=48)
        cfg = HeadConfig(epochs=2, seed=5)
        h1 = train_head(feats, labels, 4, cfg)
        h2 = train_head(feats, labels, 4, cfg)
        for (n1, p1), (n2, p2) in zip(h1.named_parameters(), h2.named_parameters()):
            assert n1 == n2
            np.testing.assert_array_equal(p1.data, p2.data)

    def test_length_mismatch_names_recording(self):
        with pytest.raises(ValueError, match="recording 1"):
            train_head([np.zeros((5, 4)), np.zeros((6, 4))],
                       [np.zeros(5, dtype=int), np.zeros(5, dtype=int)],
                       2, HeadConfig(epochs=1))

    def test_predict_shape_and_dim_check(self):
        rng = np.random.default_rng(2)
        head = MultiStageTCN(8, 4, HeadConfig(), rng)
        x = rng.standard_normal((33, 8))
        pred = predict(x, head)
        assert pred.shape == (33,)
        with pytest.raises(ValueError, match="feature dim"):
            predict(rng.standard_normal((10, 5)), head)

    def test_predict_matches_final_stage_argmax(self):
        rng = np.random.default_rng(3)
        head = MultiStageTCN(8, 4, HeadConfig(), rng)
        x = rng.standard_normal((21, 8))
        with ad.no_grad():
            logits = head(ad.constant(x))[-1].data
        np.testing.assert_array_equal(predict(x, head), np.argmax(logits, axis=1))
        # adding a per-frame constant to all class logits keeps the argmax
        shifted = logits + rng.standard_normal((21, 1))
        np.testing.assert_array_equal(np.argmax(shifted, axis=1),
                                      np.argmax(logits, axis=1))

    def test_all_equal_logits_tie_breaks_to_lowest_index(self):
        head = MultiStageTCN(4, 3, HeadConfig(), np.random.default_rng(0))
        for p in head.stages[-1].out.parameters():
            p.data[:] = 0.0
        x = np.random.default_rng(1).standard_normal((7, 4))
        np.testing.assert_array_equal(predict(x, head), np.zeros(7, dtype=np.int64))

    def test_head_loss_gradcheck_cross_entropy_path(self):
        # the smoothing term stops gradients at the previous frame, which
        # finite differences cannot represent; check the CE path end to end
        rng = np.random.default_rng(4)
        cfg = HeadConfig(n_stages=1, n_layers=2, channels=6, smoothing_weight=0.0)
        head = MultiStageTCN(5, 3, cfg, rng)
        x = rng.standard_normal((9, 5))
        y = rng.integers(0, 3, 9)
        params = head.parameters()

        def loss():
            for p in params:
                p.grad = None
            return head_loss(head(ad.constant(x)), y, cfg)

        fd_gradcheck(loss, params, rtol=2e-4)

    def test_smoothing_term_gradcheck_with_frozen_previous_frame(self):
        from mmtas import nn
        from mmtas.autodiff import Tensor
        rng = np.random.default_rng(6)
        x = Tensor(rng.standard_normal((6, 4)) * 2, requires_grad=True)
        prev = None

        def loss():
            nonlocal prev
            x.grad = None
            q = nn.log_softmax(x, axis=1)
            if prev is None:
                prev = q.data[:-1].copy()  # freeze the stop-gradient side once
            d = q[1:] - ad.constant(prev)
            return ad.clip(d * d, 0.0, 16.0).mean()

        fd_gradcheck(loss, [x])

    def test_smoothing_clip_kills_large_jumps(self):
        from mmtas import nn
        from mmtas.autodiff import Tensor
        x = Tensor(np.array([[0.0, 30.0], [30.0, 0.0]]), requires_grad=True)

        def tmse():
            x.grad = None
            q = nn.log_softmax(x, axis=1)
            d = q[1:] - ad.constant(q.data[:-1])
            return ad.clip(d * d, 0.0, 16.0).mean()

        val = tmse()
        assert val.data == pytest.approx(16.0)  # both squared diffs clipped
        val.backward()
        np.testing.assert_array_equal(x.grad, np.zeros_like(x.grad))

    def test_head_checkpoint_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        cfg = HeadConfig(n_stages=2, n_layers=3, channels=8)
        head = MultiStageTCN(6, 4, cfg, rng)
        save_head(tmp_path / "h.npz", head, cfg, "fine", ["a", "b", "c", "d"],
                  {"config_hash": "x", "d_embed": 6})
        again, cfg2, meta = load_head(tmp_path / "h.npz")
        assert cfg2 == cfg
        assert meta["granularity"] == "fine"
        x = rng.standard_normal((12, 6))
        np.testing.assert_array_equal(predict(x, head), predict(x, again))


def test_coarse_projection_of_fine_predictions(tiny_dataset):
    _, recordings = tiny_dataset
    rec = recordings[0]
    ls = rec.label_set
    fine = framewise_labels(rec, ls, "fine")
    coarse = framewise_labels(rec, ls, "coarse")
    projected = np.array([ls.coarse_of_fine(int(i)) for i in fine])
    np.testing.assert_array_equal(projected, coarse)
