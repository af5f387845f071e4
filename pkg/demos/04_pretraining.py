"""A miniature pretraining run: contrastive sentence alignment plus
boundary regression, end to end through the multimodal encoder.

Uses a small embedding (32) and a handful of steps so it finishes in
about a minute; the loss curve and the learned temperature are plotted.

Run:  python3 demos/04_pretraining.py   (after 01_synthetic_data.py)
"""

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from mmtas.data import list_recording_dirs, load_recording
from mmtas.model import ModelConfig
from mmtas.preprocessing import PreprocessConfig, compute_normalization_stats
from mmtas.pretraining import PretrainConfig, pretrain, save_pretrain_checkpoint
from mmtas.sampler import SamplerConfig

OUT = Path(__file__).parent / "output"
dataset = OUT / "dataset"
if not dataset.exists():
    raise SystemExit("run demos/01_synthetic_data.py first")

recordings = [load_recording(p) for p in list_recording_dirs(dataset)]
pre = PreprocessConfig()
stats = compute_normalization_stats(recordings, pre)

model_cfg = ModelConfig.for_dataset(recordings[0], pre, d_embed=32, n_heads=4)
cfg = PretrainConfig(layers=2, batch_size=4, steps=40, lr=2e-3, seed=0)

rows = []
result = pretrain(recordings, stats, pre, SamplerConfig(), model_cfg, cfg,
                  progress=lambda r: rows.append(r) or print(
                      f"step {r['step']:3d}  total {r['loss_total']:.4f}  "
                      f"action {r['loss_action']:.4f}  boundary {r['loss_boundary']:.4f}"))

print(f"\nlearned temperature: {float(result.model.temperature.data):.4f}")
save_pretrain_checkpoint(OUT / "demo_checkpoint.npz", result, pre, cfg)
print(f"wrote {OUT / 'demo_checkpoint.npz'}")

fig, ax = plt.subplots(figsize=(7, 3.5))
steps = [r["step"] for r in result.log]
ax.plot(steps, [r["loss_total"] for r in result.log], label="total")
ax.plot(steps, [r["loss_action"] for r in result.log], label="action order")
ax.plot(steps, [r["loss_boundary"] for r in result.log], label="boundary")
ax.set_xlabel("step")
ax.set_ylabel("loss")
ax.legend()
fig.tight_layout()
fig.savefig(OUT / "04_loss.png", dpi=110)
print(f"wrote {OUT / '04_loss.png'}")
