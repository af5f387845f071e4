"""Pretraining windows: padded segment bounds, proportional frame sampling,
soft boundary targets, and action-order sentences."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .data import ActionAnnotation, Recording, transition_frames

SENTENCE_3 = "First, the robot does {}. Next, it performs {}. Finally, the machine executes {}."
SENTENCE_2 = "First, the robot does {}. Finally, the machine executes {}."
SENTENCE_1 = "The robot does {}."


@dataclass(frozen=True)
class SamplerConfig:
    padding: int = 30        # p: context frames on each side of a segment
    window_size: int = 100   # N_w: sampled frames per window
    sigma: float = 2.0       # Gaussian width (in sample positions) for soft targets

    def __post_init__(self):
        if self.padding < 0:
            raise ValueError("padding must be >= 0")
        if self.window_size < 3:
            raise ValueError("window_size must be >= 3")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass
class WindowSample:
    recording_id: str
    segment_index: int
    frame_indices: np.ndarray        # (N_w,), ascending camera-frame indices
    boundary_binary: np.ndarray      # (N_w,) in {0,1}
    boundary_target: np.ndarray      # (N_w,) in [0,1], Gaussian-smoothed
    ordered_labels: list[str]        # up to 3 fine labels, temporal order
    sentence: str

    def to_json(self) -> dict:
        return {
            "recording_id": self.recording_id,
            "segment_index": self.segment_index,
            "frame_indices": [int(i) for i in self.frame_indices],
            "boundary_binary": [int(b) for b in self.boundary_binary],
            "boundary_target": [float(b) for b in self.boundary_target],
            "ordered_labels": list(self.ordered_labels),
            "sentence": self.sentence,
        }


def window_bounds(segment: ActionAnnotation, padding: int, n_frames: int) -> tuple[int, int]:
    """[i_b - p, i_e + p) clamped to the recording."""
    return max(0, segment.start_frame - padding), min(n_frames, segment.end_frame + padding)


def allocate_counts(section_lengths: tuple[int, int, int], n: int) -> tuple[int, int, int]:
    """Largest-remainder apportionment of n draws over three sections.

    Counts are proportional to section length, sum exactly to n, empty
    sections get 0, and every non-empty section gets at least 1 (borrowing
    from the largest count when necessary).
    """
    lengths = [int(l) for l in section_lengths]
    if any(l < 0 for l in lengths):
        raise ValueError("section lengths must be non-negative")
    total = sum(lengths)
    if total == 0:
        raise ValueError("all sections empty")
    quotas = [n * l / total for l in lengths]
    counts = [int(np.floor(q)) for q in quotas]
    leftover = n - sum(counts)
    order = sorted(range(3), key=lambda j: (-(quotas[j] - counts[j]), j))
    for j in order[:leftover]:
        counts[j] += 1
    for j in range(3):
        if lengths[j] > 0 and counts[j] == 0:
            donor = int(np.argmax(counts))
            counts[donor] -= 1
            counts[j] += 1
    return tuple(counts)


def smooth_boundary_target(binary: np.ndarray, sigma: float) -> np.ndarray:
    """Peak-normalized Gaussian at each mark, combined elementwise by max."""
    n = binary.shape[0]
    out = np.zeros(n)
    positions = np.arange(n)
    for m in np.flatnonzero(binary):
        out = np.maximum(out, np.exp(-((positions - m) ** 2) / (2.0 * sigma * sigma)))
    return out


def order_sentence(labels: list[str]) -> str:
    """Template sentence describing up to three actions in order."""
    if len(labels) == 0:
        raise ValueError("need at least one label for a sentence")
    if len(labels) == 1:
        return SENTENCE_1.format(labels[0])
    if len(labels) == 2:
        return SENTENCE_2.format(labels[0], labels[1])
    if len(labels) == 3:
        return SENTENCE_3.format(labels[0], labels[1], labels[2])
    raise ValueError(f"at most three labels supported, got {len(labels)}")


def window_rng(seed: int, recording_id: str, segment_index: int,
               salt: int = 0) -> np.random.Generator:
    """Independent stream per (seed, recording, segment[, salt])."""
    entropy = [seed, zlib.crc32(recording_id.encode()), segment_index, salt]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def sample_window(recording: Recording, segment_index: int, config: SamplerConfig,
                  rng: np.random.Generator) -> WindowSample:
    """Draw one pretraining window around an annotated segment.

    Per-section draws are uniform without replacement; if a section has
    fewer frames than its allocation, it contributes all of them and the
    deficit moves to the central section (sampled with replacement once
    the central section itself is exhausted). Indices come back sorted.
    """
    anns = recording.annotations
    if not anns:
        raise ValueError(f"recording {recording.id} has no annotations")
    seg = anns[segment_index]
    lo, hi = window_bounds(seg, config.padding, recording.n_frames)
    sections = [(lo, seg.start_frame), (seg.start_frame, seg.end_frame),
                (seg.end_frame, hi)]
    lengths = tuple(b - a for a, b in sections)
    counts = list(allocate_counts(lengths, config.window_size))

    # move overflow from the side sections into the central one
    for j in (0, 2):
        if counts[j] > lengths[j]:
            counts[1] += counts[j] - lengths[j]
            counts[j] = lengths[j]
    extra = max(0, counts[1] - lengths[1])
    counts[1] -= extra

    chosen = []
    for (a, b), c in zip(sections, counts):
        if c == 0:
            continue
        if c == b - a:
            chosen.append(np.arange(a, b))
        else:
            chosen.append(np.sort(rng.choice(np.arange(a, b), size=c, replace=False)))
    if extra:
        a, b = sections[1]
        chosen.append(rng.choice(np.arange(a, b), size=extra, replace=True))
    indices = np.sort(np.concatenate(chosen))

    binary = np.zeros(config.window_size, dtype=np.int64)
    span_lo, span_hi = int(indices[0]), int(indices[-1])
    for t in transition_frames(recording):
        if span_lo < t < span_hi:
            binary[int(np.searchsorted(indices, t, side="left"))] = 1
    target = smooth_boundary_target(binary, config.sigma)

    labels = []
    if segment_index > 0 and anns[segment_index - 1].end_frame > lo:
        labels.append(anns[segment_index - 1].fine_label)
    labels.append(seg.fine_label)
    if segment_index + 1 < len(anns) and anns[segment_index + 1].start_frame < hi:
        labels.append(anns[segment_index + 1].fine_label)

    return WindowSample(
        recording_id=recording.id,
        segment_index=segment_index,
        frame_indices=indices,
        boundary_binary=binary,
        boundary_target=target,
        ordered_labels=labels,
        sentence=order_sentence(labels),
    )


def shuffled_labels(labels: list[str], rng: np.random.Generator) -> list[str]:
    """A random reordering, different from the input whenever possible."""
    if len(set(labels)) < 2:
        return list(labels)
    for _ in range(16):
        perm = list(rng.permutation(len(labels)))
        out = [labels[i] for i in perm]
        if out != labels:
            return out
    return list(reversed(labels))
