"""Whole-recording feature extraction and the float32 feature-file format."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .data import NormalizationStats, Recording, write_json_atomic
from .model import check_schema
from .preprocessing import PreprocessConfig, preprocess_recording
from .pretraining import PretrainModel


@dataclass
class FeatureSequence:
    recording_id: str
    features: np.ndarray          # (T_image, D_e)
    checkpoint_fingerprint: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.features)):
            raise ValueError(f"non-finite features for recording {self.recording_id}")


def extract_features(recording: Recording, model: PretrainModel,
                     pre_cfg: PreprocessConfig, stats: NormalizationStats,
                     mode: str = "fused", fingerprint: str = "",
                     batch: int = 256) -> FeatureSequence:
    """Encode every camera frame of a recording.

    mode "fused" exports the per-frame post-modality-fusion features
    (the default; downstream segmentation models bring their own temporal
    modelling). mode "temporal" additionally runs the window-level fusion
    transformer over the full sequence and exports its output.
    """
    if mode not in ("fused", "temporal"):
        raise ValueError(f"unknown export mode {mode!r}")
    check_schema(model.config, pre_cfg, recording)
    frames = preprocess_recording(recording, pre_cfg, stats)
    rows = []
    with ad.no_grad():
        for lo in range(0, len(frames), batch):
            chunk = frames[lo:lo + batch]
            rows.append(model.extractor.encode_frames(chunk).data)
        x = np.concatenate(rows, axis=0)
        if mode == "temporal":
            x = model.temporal(ad.constant(x[None])).data[0]
    return FeatureSequence(recording_id=recording.id, features=x,
                           checkpoint_fingerprint=fingerprint)


def write_feature_file(base: Path | str, seq: FeatureSequence, config_hash: str):
    """<base>.bin: row-major float32 little-endian; <base>.json: sidecar."""
    base = Path(base)
    arr = np.ascontiguousarray(seq.features, dtype="<f4")
    tmp = base.with_suffix(".bin.tmp")
    tmp.write_bytes(arr.tobytes())
    tmp.replace(base.with_suffix(".bin"))
    write_json_atomic(base.with_suffix(".json"), {
        "recording_id": seq.recording_id,
        "shape": list(seq.features.shape),
        "d_embed": int(seq.features.shape[1]),
        "checkpoint_fingerprint": seq.checkpoint_fingerprint,
        "config_hash": config_hash,
    })


def read_feature_file(base: Path | str) -> FeatureSequence:
    base = Path(base)
    with open(base.with_suffix(".json")) as f:
        sidecar = json.load(f)
    raw = np.frombuffer(base.with_suffix(".bin").read_bytes(), dtype="<f4")
    features = raw.reshape(sidecar["shape"]).astype(np.float64)
    return FeatureSequence(recording_id=sidecar["recording_id"], features=features,
                           checkpoint_fingerprint=sidecar["checkpoint_fingerprint"])
