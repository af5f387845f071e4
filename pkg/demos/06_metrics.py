"""The five segmentation metrics, stepped through on small examples.

Run:  python3 demos/06_metrics.py
"""

import numpy as np

from mmtas.metrics import (boundaries_from_segments, detection_rate, edit_score,
                           evaluate, frame_accuracy, segmental_f1,
                           segments_from_framewise)

gt = ["pick"] * 4 + ["insert"] * 10 + ["remove"] * 9 + ["place"] * 5
pred = ["pick"] * 3 + ["insert"] * 12 + ["remove"] * 8 + ["place"] * 5

print("ground truth segments:", [(s.label, s.start, s.end)
                                 for s in segments_from_framewise(gt)])
print("predicted segments:   ", [(s.label, s.start, s.end)
                                 for s in segments_from_framewise(pred)])

print(f"\nframe accuracy: {frame_accuracy(pred, gt):.2f}")
print(f"edit score:     {edit_score(pred, gt):.2f} "
      "(same segment-label sequence, so 100)")
for k in (0.10, 0.25, 0.50):
    print(f"F1@{int(k * 100):<3d}       {segmental_f1(pred, gt, k):.2f}")

bp = boundaries_from_segments(segments_from_framewise(pred))
bg = boundaries_from_segments(segments_from_framewise(gt))
print(f"\nboundaries: pred {bp} vs truth {bg}")
print(f"detection rate (t_e=2): {detection_rate(bp, bg, 2):.2f}")

# an over-segmented prediction: frame accuracy stays decent, the
# segment-level scores collapse
noisy = list(gt)
for i in range(0, len(noisy), 7):
    noisy[i] = "pick"
rep = evaluate(noisy, gt, tolerance=2)
print("\nover-segmented prediction:")
for key, value in rep.to_json().items():
    print(f"  {key:>16}: {value:.2f}" if isinstance(value, float)
          else f"  {key:>16}: {value}")
