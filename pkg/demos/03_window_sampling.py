"""Pretraining windows: padded segment bounds, proportional sampling,
soft boundary targets, and the action-order sentence.

A window is built around one annotated segment, padded by 30 frames on
each side so neighbouring actions are visible. 100 frame indices are
drawn, each section getting a share proportional to its length. Action
transitions inside the window become a binary boundary vector, smoothed
with a Gaussian into the regression target.

Run:  python3 demos/03_window_sampling.py   (after 01_synthetic_data.py)
"""

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from mmtas.data import list_recording_dirs, load_recording
from mmtas.sampler import (SamplerConfig, allocate_counts, sample_window,
                           window_bounds, window_rng)

OUT = Path(__file__).parent / "output"
dataset = OUT / "dataset"
if not dataset.exists():
    raise SystemExit("run demos/01_synthetic_data.py first")

rec = load_recording(list_recording_dirs(dataset)[0])
config = SamplerConfig()  # padding 30, window size 100, sigma 2

seg_idx = 3
seg = rec.annotations[seg_idx]
lo, hi = window_bounds(seg, config.padding, rec.n_frames)
print(f"segment {seg_idx} = {seg.fine_label}, frames [{seg.start_frame}, {seg.end_frame})")
print(f"padded window [{lo}, {hi})")
lengths = (seg.start_frame - lo, seg.end_frame - seg.start_frame, hi - seg.end_frame)
print(f"section lengths {lengths} -> counts {allocate_counts(lengths, config.window_size)}")

ws = sample_window(rec, seg_idx, config, window_rng(0, rec.id, seg_idx))
print(f"sampled {len(ws.frame_indices)} indices, "
      f"{len(np.unique(ws.frame_indices))} unique")
print(f"transitions marked: {int(ws.boundary_binary.sum())}")
print(f"labels in order: {ws.ordered_labels}")
print(f"sentence: {ws.sentence}")

fig, axes = plt.subplots(2, 1, figsize=(9, 4), sharex=True)
axes[0].stem(ws.frame_indices, np.ones_like(ws.frame_indices), markerfmt=",")
axes[0].set_ylabel("sampled")
axes[1].plot(ws.frame_indices, ws.boundary_target, ".-", ms=3, label="smoothed")
axes[1].plot(ws.frame_indices, ws.boundary_binary, "x", ms=4, label="binary")
axes[1].set_ylabel("boundary target")
axes[1].set_xlabel("camera frame index")
axes[1].legend()
for frame in (seg.start_frame, seg.end_frame):
    for ax in axes:
        ax.axvline(frame, color="k", lw=0.5, alpha=0.5)
fig.tight_layout()
fig.savefig(OUT / "03_window.png", dpi=110)
print(f"wrote {OUT / '03_window.png'}")
