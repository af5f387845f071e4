"""Temporal action segmentation metrics: frame accuracy, EDIT score,
segmental F1 at IoU thresholds, and the boundary detection rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

F1_THRESHOLDS = (0.10, 0.25, 0.50)
DEFAULT_TOLERANCE_FRAMES = 10  # 1 s at the 10 Hz evaluation rate


@dataclass(frozen=True)
class Segment:
    label: object
    start: int  # inclusive
    end: int    # exclusive

    def __post_init__(self):
        if self.start >= self.end:
            raise ValueError(f"segment [{self.start},{self.end}) is empty")

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass
class MetricsReport:
    accuracy: float
    edit: float
    f1: dict[float, float]          # overlap threshold -> percent
    detection_rate: float
    tolerance_frames: int
    n_frames: int
    n_segments_pred: int
    n_segments_gt: int

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "edit": self.edit,
            "f1_10": self.f1[0.10],
            "f1_25": self.f1[0.25],
            "f1_50": self.f1[0.50],
            "detection_rate": self.detection_rate,
            "t_e": self.tolerance_frames,
            "n_frames": self.n_frames,
            "n_segments_pred": self.n_segments_pred,
            "n_segments_gt": self.n_segments_gt,
        }


def segments_from_framewise(labels) -> list[Segment]:
    """Maximal runs of equal labels, in order; concatenation rebuilds the input."""
    labels = list(labels)
    if len(labels) == 0:
        raise ValueError("empty label sequence")
    segments = []
    start = 0
    for i in range(1, len(labels)):
        if labels[i] != labels[start]:
            segments.append(Segment(labels[start], start, i))
            start = i
    segments.append(Segment(labels[start], start, len(labels)))
    return segments


def frame_accuracy(pred, gt) -> float:
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {gt.shape}")
    return 100.0 * float(np.mean(pred == gt))


def _levenshtein(a: list, b: list) -> int:
    m, n = len(a), len(b)
    dist = np.zeros((m + 1, n + 1), dtype=np.int64)
    dist[:, 0] = np.arange(m + 1)
    dist[0, :] = np.arange(n + 1)
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            dist[i, j] = min(dist[i - 1, j] + 1, dist[i, j - 1] + 1,
                             dist[i - 1, j - 1] + cost)
    return int(dist[m, n])


def edit_score(pred, gt) -> float:
    """Normalized Levenshtein similarity between segment-label sequences, x100."""
    if len(pred) != len(gt):
        raise ValueError("length mismatch")
    seq_p = [s.label for s in segments_from_framewise(pred)]
    seq_g = [s.label for s in segments_from_framewise(gt)]
    denom = max(len(seq_p), len(seq_g))
    return 100.0 * (1.0 - _levenshtein(seq_p, seq_g) / denom)


def _iou(a: Segment, b: Segment) -> float:
    inter = max(0, min(a.end, b.end) - max(a.start, b.start))
    union = max(a.end, b.end) - min(a.start, b.start)
    return inter / union if union > 0 else 0.0


def segmental_f1_counts(pred_segments: list[Segment], gt_segments: list[Segment],
                        k: float) -> tuple[int, int, int]:
    """Greedy matching in prediction order; best-IoU unmatched same-label
    ground-truth segment wins if its IoU reaches k."""
    matched = [False] * len(gt_segments)
    tp = fp = 0
    for p in pred_segments:
        best_j, best_iou = -1, 0.0
        for j, g in enumerate(gt_segments):
            if matched[j] or g.label != p.label:
                continue
            iou = _iou(p, g)
            if iou >= k and iou > best_iou:
                best_j, best_iou = j, iou
        if best_j >= 0:
            matched[best_j] = True
            tp += 1
        else:
            fp += 1
    fn = matched.count(False)
    return tp, fp, fn


def _f1_percent(tp: int, fp: int, fn: int) -> float:
    if tp == 0 and fp + fn > 0:
        return 0.0
    if tp + fp + fn == 0:
        return 100.0
    return 100.0 * 2.0 * tp / (2.0 * tp + fp + fn)


def segmental_f1(pred, gt, k: float) -> float:
    if len(pred) != len(gt):
        raise ValueError("length mismatch")
    if not 0.0 < k <= 1.0:
        raise ValueError(f"overlap threshold {k} outside (0, 1]")
    tp, fp, fn = segmental_f1_counts(segments_from_framewise(pred),
                                     segments_from_framewise(gt), k)
    return _f1_percent(tp, fp, fn)


def boundaries_from_segments(segments: list[Segment]) -> list[int]:
    """Interior transition indices: each segment start except the first."""
    if not segments:
        raise ValueError("empty segment list")
    return [s.start for s in segments[1:]]


def detection_rate_counts(pred_boundaries, gt_boundaries,
                          tolerance: int) -> tuple[int, int, int]:
    """Boundary matching with a +/-tolerance window around each truth boundary.

    Each prediction goes to the nearest containing window (ties to the
    earlier boundary); the first prediction in a window is a true positive,
    further ones are false positives, as are predictions in no window;
    windows left empty are false negatives.
    """
    pred = list(pred_boundaries)
    gt = list(gt_boundaries)
    if pred != sorted(pred) or gt != sorted(gt):
        raise ValueError("boundary lists must be sorted ascending")
    hits = [0] * len(gt)
    fp = 0
    for p in pred:
        best_j, best_dist = -1, None
        for j, b in enumerate(gt):
            dist = abs(p - b)
            if dist <= tolerance and (best_dist is None or dist < best_dist):
                best_j, best_dist = j, dist
        if best_j < 0:
            fp += 1
        else:
            hits[best_j] += 1
    tp = sum(1 for h in hits if h > 0)
    fp += sum(h - 1 for h in hits if h > 1)
    fn = hits.count(0)
    return tp, fp, fn


def detection_rate(pred_boundaries, gt_boundaries, tolerance: int) -> float:
    tp, fp, fn = detection_rate_counts(pred_boundaries, gt_boundaries, tolerance)
    return _f1_percent(tp, fp, fn)


def evaluate(pred, gt, tolerance: int = DEFAULT_TOLERANCE_FRAMES) -> MetricsReport:
    """All five metrics for one (prediction, ground truth) label pair."""
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {gt.shape}")
    seg_p = segments_from_framewise(pred)
    seg_g = segments_from_framewise(gt)
    f1 = {k: _f1_percent(*segmental_f1_counts(seg_p, seg_g, k)) for k in F1_THRESHOLDS}
    dr = detection_rate(boundaries_from_segments(seg_p), boundaries_from_segments(seg_g),
                        tolerance)
    return MetricsReport(
        accuracy=frame_accuracy(pred, gt),
        edit=edit_score(pred, gt),
        f1=f1,
        detection_rate=dr,
        tolerance_frames=tolerance,
        n_frames=int(pred.shape[0]),
        n_segments_pred=len(seg_p),
        n_segments_gt=len(seg_g),
    )


def evaluate_split(pairs: list[tuple[np.ndarray, np.ndarray]],
                   tolerance: int = DEFAULT_TOLERANCE_FRAMES) -> MetricsReport:
    """Split-level report: frames and match counts pool across recordings,
    the EDIT score averages per recording (the usual convention)."""
    if not pairs:
        raise ValueError("no evaluation pairs")
    correct = total = 0
    edit_sum = 0.0
    f1_counts = {k: [0, 0, 0] for k in F1_THRESHOLDS}
    dr_counts = [0, 0, 0]
    n_seg_p = n_seg_g = 0
    for pred, gt in pairs:
        pred, gt = np.asarray(pred), np.asarray(gt)
        if pred.shape != gt.shape:
            raise ValueError("length mismatch in evaluation pair")
        correct += int(np.sum(pred == gt))
        total += pred.shape[0]
        edit_sum += edit_score(pred, gt)
        seg_p = segments_from_framewise(pred)
        seg_g = segments_from_framewise(gt)
        n_seg_p += len(seg_p)
        n_seg_g += len(seg_g)
        for k in F1_THRESHOLDS:
            tp, fp, fn = segmental_f1_counts(seg_p, seg_g, k)
            f1_counts[k][0] += tp
            f1_counts[k][1] += fp
            f1_counts[k][2] += fn
        tp, fp, fn = detection_rate_counts(boundaries_from_segments(seg_p),
                                           boundaries_from_segments(seg_g), tolerance)
        dr_counts[0] += tp
        dr_counts[1] += fp
        dr_counts[2] += fn
    return MetricsReport(
        accuracy=100.0 * correct / total,
        edit=edit_sum / len(pairs),
        f1={k: _f1_percent(*f1_counts[k]) for k in F1_THRESHOLDS},
        detection_rate=_f1_percent(*dr_counts),
        tolerance_frames=tolerance,
        n_frames=total,
        n_segments_pred=n_seg_p,
        n_segments_gt=n_seg_g,
    )
