"""Acceptance criteria, one test per criterion, each printing a PASS line.

Run `pytest -s tests/test_acceptance.py` to see the per-criterion lines.
Criteria 6 and 7 are real desk-scale training runs and together take
around 10-15 minutes on a laptop CPU; everything is seeded and
deterministic across reruns.
"""

import hashlib
import json
import time
from pathlib import Path

import numpy as np
import pytest

from mmtas import autodiff as ad
from mmtas.autodiff import Tensor
from mmtas.cli import main as cli_main
from mmtas.data import ActionAnnotation, framewise_labels, load_recording, \
    list_recording_dirs
from mmtas.metrics import detection_rate, edit_score, evaluate
from mmtas.model import ModelConfig, ProprioEncoder, SensorSpec
from mmtas.preprocessing import (PreprocessConfig, audio_logmel,
                                 mel_center_frequencies, resample_window)
from mmtas.pretraining import (BoundaryHead, FusionTransformer, PretrainConfig,
                               loss_action, loss_boundary, pretrain,
                               window_embedding)
from mmtas.sampler import (SamplerConfig, allocate_counts, order_sentence,
                           sample_window, shuffled_labels, smooth_boundary_target,
                           window_bounds, window_rng)
from mmtas.data import SensorStream
from mmtas.preprocessing import compute_normalization_stats, preprocess_recording
from mmtas.synth import SynthConfig, generate_synthetic_dataset

from oracles import evaluate_oracle, fd_gradcheck, interp_oracle


def report(n: int, summary: str):
    print(f"\nACCEPTANCE {n} PASS  {summary}")


# -- criterion 1: resampling oracle -------------------------------------------

def test_criterion_1_resample_oracle():
    rng = np.random.default_rng(101)
    t0 = time.monotonic()
    worst = 0.0
    for _ in range(1000):
        n_pts = int(rng.integers(3, 60))
        ts = np.sort(rng.uniform(0.0, 8.0, n_pts))
        ts[0], ts[-1] = 0.0, 8.0
        vals = rng.standard_normal((n_pts, int(rng.integers(1, 5))))
        stream = SensorStream("s", ts, vals)
        a = rng.uniform(0.0, 7.0)
        window = (a, a + rng.uniform(0.01, 1.0))
        n = int(rng.integers(1, 64))
        got = resample_window(stream, window, n)
        grid = window[0] + np.arange(n) * (window[1] - window[0]) / n
        want = interp_oracle(ts, vals, grid)
        rel = np.abs(got - want) / (np.abs(want) + 1e-9)
        worst = max(worst, float(rel.max()))
        assert rel.max() < 1e-9
    # exactness on globally linear signals
    for _ in range(100):
        ts = np.sort(rng.uniform(0.0, 8.0, 40))
        ts[0], ts[-1] = 0.0, 8.0
        slope, icept = rng.standard_normal(2)
        stream = SensorStream("s", ts, (slope * ts + icept)[:, None])
        a = rng.uniform(0.0, 7.0)
        window = (a, a + rng.uniform(0.01, 1.0))
        n = int(rng.integers(2, 40))
        got = resample_window(stream, window, n)
        grid = window[0] + np.arange(n) * (window[1] - window[0]) / n
        assert np.abs(got[:, 0] - (slope * grid + icept)).max() <= 1e-12
    elapsed = time.monotonic() - t0
    assert elapsed < 30.0
    report(1, f"1000 random windows within 1e-9 of the bracketing oracle "
              f"(worst {worst:.2e}), linear signals exact, {elapsed:.1f}s")


# -- criterion 2: spectrogram contract ----------------------------------------

def test_criterion_2_spectrogram_contract(pre_config, tiny_stats):
    rate = 16000
    t = np.arange(rate) / rate
    tone = SensorStream("audio", t, (0.5 * np.sin(2 * np.pi * 1000.0 * t))[:, None])
    out = audio_logmel(tone, (0.2, 0.3), pre_config, tiny_stats)
    assert out.shape == (64, 8)
    assert out.min() >= -1.0 and out.max() <= 1.0
    got_bin = int(np.argmax(out.mean(axis=1)))
    centers = mel_center_frequencies(pre_config)
    want_bin = int(np.argmin(np.abs(centers - 1000.0)))
    assert got_bin == want_bin
    report(2, f"0.1 s window -> 64x8 in [-1,1]; 1 kHz tone peaks in mel bin "
              f"{got_bin} (center {centers[got_bin]:.0f} Hz)")


# -- criterion 3: sampler properties -------------------------------------------

def test_criterion_3_sampler_properties(tiny_dataset):
    rng = np.random.default_rng(103)
    worst_err = 0.0
    for _ in range(500):
        dur = int(rng.integers(8, 61))
        i_b = int(rng.integers(0, 400 - dur))
        seg = ActionAnnotation(i_b, i_b + dur, "a", "o")
        lo, hi = window_bounds(seg, 30, 400)
        lengths = (seg.start_frame - lo, dur, hi - seg.end_frame)
        counts = allocate_counts(lengths, 100)
        assert sum(counts) == 100
        total = sum(lengths)
        for c, l in zip(counts, lengths):
            err = abs(c - 100 * l / total)
            worst_err = max(worst_err, err)
            assert err < 1.0

    _, recordings = tiny_dataset
    cfg = SamplerConfig()
    from mmtas.data import transition_frames
    n_checked = 0
    for salt in range(21):
        for rec in recordings:
            for k in range(len(rec.annotations)):
                ws = sample_window(rec, k, cfg, window_rng(103, rec.id, k, salt))
                inside = [t for t in transition_frames(rec)
                          if ws.frame_indices[0] < t < ws.frame_indices[-1]]
                assert int(ws.boundary_binary.sum()) == len(inside)
                n_checked += 1
    assert n_checked >= 500

    got = smooth_boundary_target(np.array([0, 0, 1, 0, 0]), 1.0)
    np.testing.assert_allclose(got, [0.1353, 0.6065, 1.0, 0.6065, 0.1353], atol=1e-4)
    report(3, f"500 allocations sum to 100 (worst quota error {worst_err:.3f}); "
              f"boundary marks match transitions on {n_checked} windows; "
              f"Gaussian target reproduces the hand values")


# -- criterion 4: gradient checks ----------------------------------------------

def test_criterion_4_gradient_checks():
    t0 = time.monotonic()
    rng = np.random.default_rng(104)
    rtol, eps = 1e-4, 1e-5

    enc = ProprioEncoder(SensorSpec("s", 3, 4), 8, rng)
    x = Tensor(rng.standard_normal((2, 4, 3)), requires_grad=True)
    params = enc.parameters() + [x]

    def loss_proprio():
        for p in params:
            p.grad = None
        out = enc(x)
        return (out * out).mean()

    fd_gradcheck(loss_proprio, params, eps=eps, rtol=rtol)

    cfg = ModelConfig(d_embed=8, n_heads=2, sensors=(SensorSpec("s", 3, 4),),
                      image_hw=(8, 8), n_mels=8, text_vocab=32)
    from mmtas.model import ModalityFusion
    fusion = ModalityFusion(cfg, rng)
    toks = Tensor(rng.standard_normal((2, 3, 8)), requires_grad=True)
    params = fusion.parameters() + [toks]

    def loss_fusion():
        for p in params:
            p.grad = None
        return (fusion(toks) ** 2.0).mean()

    fd_gradcheck(loss_fusion, params, eps=eps, rtol=rtol)

    ft = FusionTransformer(8, 2, 2, rng)
    seq = Tensor(rng.standard_normal((1, 6, 8)), requires_grad=True)
    params = ft.parameters() + [seq]

    def loss_ft():
        for p in params:
            p.grad = None
        out = ft(seq)
        return (out * out).mean()

    fd_gradcheck(loss_ft, params, eps=eps, rtol=rtol)

    head = BoundaryHead(8, rng)
    hx = Tensor(rng.standard_normal((3, 6, 8)), requires_grad=True)
    target = rng.random((3, 6))
    params = head.parameters() + [hx]

    def loss_head():
        for p in params:
            p.grad = None
        return loss_boundary(head(hx), target)

    fd_gradcheck(loss_head, params, eps=eps, rtol=rtol)

    e_w = Tensor(rng.standard_normal((3, 8)), requires_grad=True)
    e_s = Tensor(rng.standard_normal((3, 8)), requires_grad=True)
    neg = Tensor(rng.standard_normal((3, 8)), requires_grad=True)
    tau = Tensor(np.array(0.25), requires_grad=True)
    sents = ["a", "b", "a"]
    params = [e_w, e_s, neg, tau]

    def loss_act():
        for p in params:
            p.grad = None
        return loss_action(e_w, e_s, sents, tau, neg, ["x", "y", "z"])

    fd_gradcheck(loss_act, params, eps=eps, rtol=rtol)

    pred = Tensor(np.random.default_rng(7).random((3, 6)), requires_grad=True)
    tgt = np.random.default_rng(8).random((3, 6))

    def loss_bnd():
        pred.grad = None
        return loss_boundary(pred, tgt)

    fd_gradcheck(loss_bnd, [pred], eps=eps, rtol=rtol)

    elapsed = time.monotonic() - t0
    assert elapsed < 120.0
    report(4, f"analytic gradients of all six components match central finite "
              f"differences within {rtol} relative ({elapsed:.1f}s)")


# -- criterion 5: loss sanity ---------------------------------------------------

def test_criterion_5_loss_sanity():
    target = smooth_boundary_target(np.array([0, 1, 0, 0, 1]), 2.0)[None, :]
    assert loss_boundary(ad.constant(target), target).data == 0.0

    e_w = Tensor(np.array([[1.0, 0.0], [0.0, 1.0]]))
    e_s = Tensor(np.array([[1.0, 0.0], [0.0, 1.0]]))
    got = float(loss_action(e_w, e_s, ["a", "b"], 1.0).data)
    assert got == pytest.approx(0.3133, abs=1e-3)
    report(5, f"perfect boundary loss is exactly 0; orthogonal-pair action "
              f"loss {got:.4f} matches 0.3133")


# -- criterion 6: pretraining overfit ------------------------------------------

OVERFIT_SYNTH = SynthConfig(
    n_recordings=8, actions_per_recording=12,
    activities=("pick", "insert", "twist", "remove", "place"),
    objects=("usb", "gear", "peg", "nut"))
OVERFIT_CFG = PretrainConfig(layers=2, batch_size=8, steps=200, lr=2e-3, seed=0)


@pytest.fixture(scope="module")
def overfit_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("overfit")
    t0 = time.monotonic()
    recs = generate_synthetic_dataset(OVERFIT_SYNTH, 13, root)
    pre = PreprocessConfig()
    stats = compute_normalization_stats(recs, pre)
    model_cfg = ModelConfig.for_dataset(recs[0], pre, d_embed=64, n_heads=8)
    samp = SamplerConfig()
    result = pretrain(recs, stats, pre, samp, model_cfg, OVERFIT_CFG)

    frames = {r.id: preprocess_recording(r, pre, stats) for r in recs}
    ranked = correct = 0
    with ad.no_grad():
        for rec in recs:
            for k in range(len(rec.annotations)):
                ws = sample_window(rec, k, samp, window_rng(999, rec.id, k))
                batch = [frames[rec.id][i] for i in ws.frame_indices]
                x = result.model.extractor.encode_frames(batch)
                x = x.reshape((1, len(batch), -1))
                e_w = window_embedding(result.model.temporal(x)).data[0]
                enc = result.model.extractor.text_encoder
                own = enc.encode(ws.sentence).data[0]
                shuffled = order_sentence(
                    shuffled_labels(ws.ordered_labels,
                                    np.random.default_rng(k + 1000)))
                other = enc.encode(shuffled).data[0]
                w = e_w / np.linalg.norm(e_w)
                ranked += 1
                if w @ (own / np.linalg.norm(own)) > w @ (other / np.linalg.norm(other)):
                    correct += 1
    return {"result": result, "elapsed": time.monotonic() - t0,
            "ranked": ranked, "correct": correct}


def test_criterion_6_overfit(overfit_run):
    log = overfit_run["result"].log
    initial, final = log[0]["loss_total"], log[-1]["loss_total"]
    ratio = final / initial
    assert ratio <= 0.20
    pct = 100.0 * overfit_run["correct"] / overfit_run["ranked"]
    assert pct >= 95.0
    assert overfit_run["elapsed"] < 600.0
    report(6, f"200 steps on 8 recordings: loss {initial:.3f} -> {final:.3f} "
              f"(ratio {ratio:.3f} <= 0.20); own-order sentence ranked first for "
              f"{pct:.1f}% of windows; {overfit_run['elapsed']:.0f}s")


def test_criterion_6_extra_loss_log_smoothed_descent(overfit_run):
    # exponential moving average with window 50 trends monotonically down
    losses = [r["loss_total"] for r in overfit_run["result"].log]
    alpha = 2.0 / (50 + 1)
    ema = [losses[0]]
    for x in losses[1:]:
        ema.append(alpha * x + (1 - alpha) * ema[-1])
    tail = ema[50:]
    violations = sum(1 for a, b in zip(tail, tail[1:]) if b > a + 1e-9)
    assert violations == 0
    assert ema[-1] < ema[0]


# -- criterion 7: end-to-end segmentation --------------------------------------

E2E_CONFIG = {
    "dataset": {
        "n_recordings": 25,
        "actions_per_recording": 12,
        "activities": ["pick", "insert", "twist", "remove", "place"],
        "objects": ["usb", "gear", "peg", "nut"],
        "object_separation": 0.35,
        "sensor_noise": 0.15,
        "image_noise": 45.0,
    },
    "splits": {"train_count": 20},
    "model": {"d_embed": 64, "n_heads": 8},
    "pretrain": {"steps": 300, "batch_size": 8, "lr": 2e-3},
    "head": {"epochs": 80, "lr": 1e-3},
}


@pytest.fixture(scope="module")
def e2e_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("e2e")
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(E2E_CONFIG))
    c = ["--config", str(cfg_path), "--seed", "0"]
    data, stats = root / "data", root / "stats.json"
    ckpt, feats = root / "ckpt.npz", root / "features"
    t0 = time.monotonic()
    assert cli_main(["synth", *c, "--out", str(data)]) == 0
    assert cli_main(["stats", *c, "--data", str(data), "--out", str(stats)]) == 0
    assert cli_main(["pretrain", *c, "--data", str(data), "--stats", str(stats),
                     "--out", str(ckpt)]) == 0
    assert cli_main(["extract", *c, "--data", str(data), "--stats", str(stats),
                     "--checkpoint", str(ckpt), "--out", str(feats)]) == 0
    out = {}
    for gran in ("fine", "coarse"):
        head = root / f"head_{gran}.npz"
        evald = root / f"eval_{gran}"
        assert cli_main(["train-head", *c, "--data", str(data),
                         "--features", str(feats), "--out", str(head),
                         "--granularity", gran]) == 0
        assert cli_main(["eval", *c, "--data", str(data), "--features", str(feats),
                         "--head", str(head), "--out", str(evald)]) == 0
        out[gran] = json.loads((evald / "metrics.json").read_text())
    assert cli_main(["report", *c, "--eval", str(root / "eval_fine"),
                     "--data", str(data), "--out", str(root / "report")]) == 0
    out["elapsed"] = time.monotonic() - t0
    out["root"] = root
    return out


def test_criterion_7_end_to_end(e2e_run):
    fine, coarse = e2e_run["fine"], e2e_run["coarse"]
    assert fine["accuracy"] >= 90.0
    assert fine["f1_50"] >= 80.0
    assert fine["detection_rate"] >= 85.0
    assert coarse["accuracy"] >= fine["accuracy"]
    for key in ("accuracy", "edit", "f1_10", "f1_25", "f1_50", "detection_rate"):
        assert 0.0 <= fine[key] <= 100.0
    assert (e2e_run["root"] / "report" / "rec_024.png").exists()
    assert e2e_run["elapsed"] < 1800.0
    report(7, f"held-out fine: acc {fine['accuracy']:.1f} (>=90), "
              f"F1@50 {fine['f1_50']:.1f} (>=80), DR {fine['detection_rate']:.1f} "
              f"(>=85); coarse acc {coarse['accuracy']:.1f} >= fine; "
              f"{e2e_run['elapsed']:.0f}s")


# -- criterion 8: metrics oracle -------------------------------------------------

def test_criterion_8_metrics_oracle():
    rng = np.random.default_rng(108)
    for _ in range(100):
        t = int(rng.integers(1, 21))
        n_labels = int(rng.integers(1, 5))
        pred = rng.integers(0, n_labels, t).tolist()
        gt = rng.integers(0, n_labels, t).tolist()
        rep = evaluate(pred, gt, tolerance=3)
        want = evaluate_oracle(pred, gt, tolerance=3)
        assert rep.accuracy == want["accuracy"]
        assert rep.edit == want["edit"]
        for k in (0.10, 0.25, 0.50):
            assert rep.f1[k] == want["f1"][k]
        assert rep.detection_rate == want["detection_rate"]

    dr = detection_rate([105, 300], [100, 200], 10)
    assert round(dr, 2) == 50.0
    pred = ["A"] * 3 + ["C"] * 3
    gt = ["A"] * 2 + ["B"] * 2 + ["C"] * 2
    assert round(edit_score(pred, gt), 2) == 66.67
    report(8, "100 random pairs match the independent matchers exactly; "
              "detection-rate and EDIT hand examples reproduce to 2 decimals")


# -- criterion 9: stage determinism ----------------------------------------------

DET_CONFIG = {
    "dataset": {"n_recordings": 3, "actions_per_recording": 6,
                "activities": ["pick", "insert", "twist", "remove", "place"],
                "objects": ["usb", "gear"]},
    "splits": {"train_count": 2},
    "model": {"d_embed": 16, "n_heads": 2, "text_vocab": 64},
    "sampler": {"window_size": 32},
    "pretrain": {"steps": 3, "batch_size": 4, "lr": 1e-3},
    "head": {"epochs": 2},
}


def _digest_tree(root: Path) -> dict:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_9_stage_determinism(tmp_path):
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(DET_CONFIG))
    c = ["--config", str(cfg_path), "--seed", "3"]
    data, stats = tmp_path / "data", tmp_path / "stats.json"
    ckpt, feats = tmp_path / "ckpt.npz", tmp_path / "features"
    head, evald, rep = tmp_path / "head.npz", tmp_path / "eval", tmp_path / "report"

    def run_all():
        assert cli_main(["synth", *c, "--out", str(data)]) == 0
        assert cli_main(["stats", *c, "--data", str(data), "--out", str(stats)]) == 0
        assert cli_main(["pretrain", *c, "--data", str(data), "--stats", str(stats),
                         "--out", str(ckpt)]) == 0
        assert cli_main(["extract", *c, "--data", str(data), "--stats", str(stats),
                         "--checkpoint", str(ckpt), "--out", str(feats)]) == 0
        assert cli_main(["train-head", *c, "--data", str(data),
                         "--features", str(feats), "--out", str(head)]) == 0
        assert cli_main(["eval", *c, "--data", str(data), "--features", str(feats),
                         "--head", str(head), "--out", str(evald)]) == 0
        assert cli_main(["report", *c, "--eval", str(evald), "--data", str(data),
                         "--out", str(rep)]) == 0
        return _digest_tree(tmp_path)

    first = run_all()
    second = run_all()  # rerun in place: must rewrite identical bytes
    assert first == second
    n = len(first)
    report(9, f"all seven stages rerun in place reproduce byte-identical "
              f"artifacts ({n} files compared)")
