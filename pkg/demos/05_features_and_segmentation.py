"""From pretrained encoder to frame labels: extract one feature row per
camera frame, train the dilated-convolution segmentation head on one
recording, and label the other.

Run:  python3 demos/05_features_and_segmentation.py
      (after 01_synthetic_data.py and 04_pretraining.py)
"""

from pathlib import Path

from mmtas.data import framewise_labels, list_recording_dirs, load_recording
from mmtas.features import extract_features
from mmtas.metrics import evaluate
from mmtas.pretraining import load_pretrain_checkpoint
from mmtas.preprocessing import compute_normalization_stats
from mmtas.tcn import HeadConfig, predict, train_head
from mmtas.viz import render_timeline

OUT = Path(__file__).parent / "output"
ckpt = OUT / "demo_checkpoint.npz"
if not ckpt.exists():
    raise SystemExit("run demos/04_pretraining.py first")

recordings = [load_recording(p) for p in list_recording_dirs(OUT / "dataset")]
model, pre, _ = load_pretrain_checkpoint(ckpt)
stats = compute_normalization_stats(recordings, pre)

sequences = {r.id: extract_features(r, model, pre, stats) for r in recordings}
for rid, seq in sequences.items():
    print(f"{rid}: features {seq.features.shape}")

label_set = recordings[0].label_set
train_rec, test_rec = recordings[0], recordings[1]
head = train_head([sequences[train_rec.id].features],
                  [framewise_labels(train_rec, label_set, "fine")],
                  len(label_set.fine_labels),
                  HeadConfig(epochs=40, lr=2e-3, seed=0),
                  progress=lambda r: print(f"epoch {r['epoch']:3d} loss {r['loss']:.3f}")
                  if r["epoch"] % 10 == 0 else None)

pred = predict(sequences[test_rec.id].features, head)
gt = framewise_labels(test_rec, label_set, "fine")
report = evaluate(pred, gt)
print(f"\nheld-out recording {test_rec.id}:")
print(f"  accuracy {report.accuracy:.1f}  edit {report.edit:.1f}  "
      f"F1@50 {report.f1[0.5]:.1f}  detection rate {report.detection_rate:.1f}")
print("(tiny demo run; the test suite's end-to-end check trains properly)")

render_timeline(pred, gt, label_set.fine_labels, OUT / "05_timeline.png",
                title=f"{test_rec.id} (demo head)")
print(f"wrote {OUT / '05_timeline.png'}")
