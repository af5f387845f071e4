"""Segmentation timeline rendering (predicted vs ground-truth label bars)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .metrics import segments_from_framewise


def render_timeline(pred: np.ndarray, gt: np.ndarray, label_names: list[str],
                    path: Path | str, title: str = ""):
    """Two horizontal label bars (truth on top) with a shared colour per class."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Patch

    cmap = plt.get_cmap("tab20")
    colors = {i: cmap(i % 20) for i in range(len(label_names))}

    fig, ax = plt.subplots(figsize=(10, 2.2))
    for row, (name, labels) in enumerate([("truth", gt), ("prediction", pred)]):
        for seg in segments_from_framewise(labels):
            ax.barh(1 - row, seg.length, left=seg.start, height=0.8,
                    color=colors[int(seg.label)], edgecolor="none")
    ax.set_yticks([1, 0])
    ax.set_yticklabels(["truth", "prediction"])
    ax.set_xlabel("frame")
    ax.set_xlim(0, len(gt))
    if title:
        ax.set_title(title)
    used = sorted({int(l) for l in gt} | {int(l) for l in pred})
    ax.legend(handles=[Patch(color=colors[i], label=label_names[i]) for i in used],
              loc="upper left", bbox_to_anchor=(1.01, 1.0), fontsize=7, frameon=False)
    fig.tight_layout()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp.png")
    fig.savefig(tmp, dpi=120)
    plt.close(fig)
    tmp.replace(path)
