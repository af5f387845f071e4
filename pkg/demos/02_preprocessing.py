"""Per-frame alignment: sensor windows resampled to a fixed grid and
log-mel spectrograms normalized to [-1, 1].

Every camera frame i owns the interval between the previous frame's
timestamp and its own. All proprioceptive data in that interval is
linearly resampled to 30 points (300 Hz target at a 10 Hz camera), and
the audio becomes a 64-band log-mel spectrogram.

Run:  python3 demos/02_preprocessing.py   (after 01_synthetic_data.py)
"""

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from mmtas.data import list_recording_dirs, load_recording
from mmtas.preprocessing import (PreprocessConfig, compute_normalization_stats,
                                 frame_windows, preprocess_recording,
                                 resample_window)

OUT = Path(__file__).parent / "output"
dataset = OUT / "dataset"
if not dataset.exists():
    raise SystemExit("run demos/01_synthetic_data.py first")

recordings = [load_recording(p) for p in list_recording_dirs(dataset)]
rec = recordings[0]
config = PreprocessConfig()

windows = frame_windows(rec)
print(f"{len(windows)} windows; first three: {[w for _, w in windows[:3]]}")

t_s = config.samples_per_window(rec.camera_rate_nominal)
print(f"samples per window T_s = {t_s}")
raw = resample_window(rec.proprio[1], windows[40][1], t_s)
print(f"pose window 40 resampled to {raw.shape}")

stats = compute_normalization_stats(recordings, config)
print(f"spectrogram dB range over the training set: "
      f"[{stats.spectrogram_log_min:.1f}, {stats.spectrogram_log_max:.1f}]")

frames = preprocess_recording(rec, config, stats)
print(f"{len(frames)} aligned frames; spectrogram {frames[0].spectrogram.shape}, "
      f"image {frames[0].image.shape}")

# show a frame right at an action transition: the tone burst is visible
transition = rec.annotations[1].start_frame
fig, axes = plt.subplots(1, 3, figsize=(10, 3))
axes[0].imshow(frames[transition].image)
axes[0].set_title(f"frame {transition}")
axes[1].imshow(frames[transition].spectrogram, aspect="auto", origin="lower",
               vmin=-1, vmax=1)
axes[1].set_title("log-mel (transition)")
axes[2].imshow(frames[transition + 5].spectrogram, aspect="auto", origin="lower",
               vmin=-1, vmax=1)
axes[2].set_title("log-mel (+0.5 s)")
fig.tight_layout()
fig.savefig(OUT / "02_aligned_frame.png", dpi=110)
print(f"wrote {OUT / '02_aligned_frame.png'}")
