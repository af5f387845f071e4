"""Reference segmentation head: a small multi-stage dilated temporal
convolution network trained with per-frame cross-entropy plus a truncated
MSE smoothing term on the log-probabilities."""

from __future__ import annotations

from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .model import load_checkpoint, save_checkpoint
from .optim import AdamW


@dataclass(frozen=True)
class HeadConfig:
    n_stages: int = 2
    n_layers: int = 6         # dilations 1,2,4,...,2^(n_layers-1)
    channels: int = 64
    smoothing_weight: float = 0.15
    smoothing_clip: float = 16.0  # cap on squared log-prob differences
    lr: float = 5e-4
    weight_decay: float = 1e-4
    grad_clip: float = 1.0
    epochs: int = 60
    seed: int = 0

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "HeadConfig":
        return cls(**obj)


class DilatedResidualLayer(nn.Module):
    def __init__(self, channels: int, dilation: int, rng: np.random.Generator):
        self.conv = nn.DilatedConv1d(channels, channels, dilation, rng)
        self.out = nn.Linear(channels, channels, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return x + self.out(ad.relu(self.conv(x)))


class Stage(nn.Module):
    def __init__(self, d_in: int, channels: int, n_classes: int, n_layers: int,
                 rng: np.random.Generator):
        self.proj = nn.Linear(d_in, channels, rng)
        self.layers = [DilatedResidualLayer(channels, 2 ** i, rng) for i in range(n_layers)]
        self.out = nn.Linear(channels, n_classes, rng)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.proj(x)
        for layer in self.layers:
            h = layer(h)
        return self.out(h)


class MultiStageTCN(nn.Module):
    """First stage reads features; later stages refine the class probabilities."""

    def __init__(self, d_in: int, n_classes: int, cfg: HeadConfig, rng: np.random.Generator):
        self.stages = [Stage(d_in if s == 0 else n_classes, cfg.channels, n_classes,
                             cfg.n_layers, rng)
                       for s in range(cfg.n_stages)]
        self.n_classes = n_classes
        self.d_in = d_in

    def __call__(self, x: Tensor) -> list[Tensor]:
        # x: (T, D) -> per-stage logits (T, C)
        outputs = [self.stages[0](x)]
        for stage in self.stages[1:]:
            outputs.append(stage(nn.softmax(outputs[-1], axis=1)))
        return outputs


def _stage_loss(logits: Tensor, labels: np.ndarray, cfg: HeadConfig) -> Tensor:
    t, c = logits.shape
    logp = nn.log_softmax(logits, axis=1)
    onehot = np.zeros((t, c))
    onehot[np.arange(t), labels] = 1.0
    ce = -(logp * ad.constant(onehot)).sum(axis=1).mean()
    if t < 2 or cfg.smoothing_weight == 0.0:
        return ce
    # truncated MSE between consecutive log-probs; previous frame detached
    prev = ad.constant(logp.data[:-1])
    diff = logp[1:] - prev
    tmse = ad.clip(diff * diff, 0.0, cfg.smoothing_clip).mean()
    return ce + cfg.smoothing_weight * tmse


def head_loss(outputs: list[Tensor], labels: np.ndarray, cfg: HeadConfig) -> Tensor:
    total = _stage_loss(outputs[0], labels, cfg)
    for logits in outputs[1:]:
        total = total + _stage_loss(logits, labels, cfg)
    return total


def train_head(features: list[np.ndarray], labels: list[np.ndarray], n_classes: int,
               cfg: HeadConfig, progress=None) -> MultiStageTCN:
    """Fit the head on per-recording (features, framewise labels) pairs."""
    if len(features) != len(labels):
        raise ValueError("features/labels list length mismatch")
    for i, (x, y) in enumerate(zip(features, labels)):
        if x.shape[0] != y.shape[0]:
            raise ValueError(
                f"recording {i}: {x.shape[0]} feature rows vs {y.shape[0]} labels")
    d_in = features[0].shape[1]
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 23]))
    head = MultiStageTCN(d_in, n_classes, cfg, rng)
    opt = AdamW(head.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    for epoch in range(cfg.epochs):
        order = np.random.default_rng(
            np.random.SeedSequence([cfg.seed, 29, epoch])).permutation(len(features))
        epoch_loss = 0.0
        for i in order:
            outputs = head(ad.constant(features[i]))
            loss = head_loss(outputs, labels[i], cfg)
            if not np.isfinite(loss.data):
                raise FloatingPointError(f"non-finite head loss in epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.clip_grad_norm(cfg.grad_clip)
            opt.step()
            epoch_loss += float(loss.data)
        if progress is not None:
            progress({"epoch": epoch, "loss": epoch_loss / len(features)})
    return head


def predict(features: np.ndarray, head: MultiStageTCN) -> np.ndarray:
    """Per-frame argmax labels from the final stage (ties -> lowest index)."""
    if features.shape[1] != head.d_in:
        raise ValueError(
            f"feature dim {features.shape[1]} does not match head input {head.d_in}")
    with ad.no_grad():
        logits = head(ad.constant(features))[-1].data
    return np.argmax(logits, axis=1)


def save_head(path: Path | str, head: MultiStageTCN, cfg: HeadConfig,
              granularity: str, labels: list[str], feature_meta: dict):
    meta = {
        "kind": "head",
        "head_config": cfg.to_json(),
        "n_classes": head.n_classes,
        "d_in": head.d_in,
        "granularity": granularity,
        "labels": labels,
        "features": feature_meta,
    }
    save_checkpoint(path, head, meta)


def load_head(path: Path | str) -> tuple[MultiStageTCN, HeadConfig, dict]:
    state, meta = load_checkpoint(path)
    if meta.get("kind") != "head":
        raise ValueError(f"not a segmentation head checkpoint: {path}")
    cfg = HeadConfig.from_json(meta["head_config"])
    head = MultiStageTCN(int(meta["d_in"]), int(meta["n_classes"]), cfg,
                         np.random.default_rng(0))
    head.load_state_dict(state)
    return head, cfg, meta
