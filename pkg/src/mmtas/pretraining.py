"""Window-level temporal fusion and the two pretraining objectives.

A sampled window's frame features are refined by an L-layer self-attention
encoder; the temporal mean is pulled towards the embedding of the window's
action-order sentence (contrastive, in-batch negatives plus one
shuffled-order sentence per window), while a small per-sample head
regresses the soft boundary targets with mean squared error.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .data import NormalizationStats, Recording
from .model import FeatureExtractor, ModelConfig, save_checkpoint
from .optim import AdamW
from .preprocessing import PreprocessConfig, preprocess_recording
from .sampler import SamplerConfig, sample_window, shuffled_labels, order_sentence, window_rng

TAU_MIN, TAU_MAX = 1e-3, 1.0


@dataclass(frozen=True)
class PretrainConfig:
    layers: int = 2           # fusion transformer depth L
    batch_size: int = 8
    steps: int = 200
    lr: float = 1e-4
    weight_decay: float = 1e-4
    grad_clip: float = 1.0
    temperature_init: float = 0.07
    seed: int = 0

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("need at least one fusion transformer layer")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (contrastive loss needs negatives)")
        if self.temperature_init <= 0:
            raise ValueError("temperature must be positive")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "PretrainConfig":
        return cls(**obj)


class FusionTransformer(nn.Module):
    """L pre-norm encoder layers with fixed sinusoidal positions over the
    sample axis; shape (B, T, D) is preserved."""

    def __init__(self, d_embed: int, n_heads: int, n_layers: int, rng: np.random.Generator):
        self.layers = [nn.TransformerEncoderLayer(d_embed, n_heads, rng)
                       for _ in range(n_layers)]
        self._d = d_embed

    def __call__(self, x: Tensor) -> Tensor:
        _, t, d = x.shape
        if d != self._d:
            raise ValueError(f"feature width {d} does not match transformer width {self._d}")
        h = x + ad.constant(nn.sinusoidal_positions(t, d))
        for layer in self.layers:
            h = layer(h)
        return h


class BoundaryHead(nn.Module):
    """Per-sample two-layer MLP with a logistic output."""

    HIDDEN = 256

    def __init__(self, d_embed: int, rng: np.random.Generator):
        self.fc1 = nn.Linear(d_embed, self.HIDDEN, rng)
        self.fc2 = nn.Linear(self.HIDDEN, 1, rng)

    def __call__(self, x: Tensor) -> Tensor:
        # (B, T, D) -> (B, T) in (0, 1)
        b, t, _ = x.shape
        h = ad.sigmoid(self.fc2(nn.gelu(self.fc1(x))))
        return h.reshape((b, t))


def window_embedding(xhat: Tensor) -> Tensor:
    """Mean over the temporal dimension: (B, T, D) -> (B, D)."""
    if xhat.shape[1] == 0:
        raise ValueError("empty window")
    return xhat.mean(axis=1)


def loss_boundary(pred: Tensor, target: np.ndarray) -> Tensor:
    """Batch mean of the per-window MSE against the soft boundary targets."""
    if pred.shape != target.shape:
        raise ValueError(f"boundary shape mismatch: {pred.shape} vs {target.shape}")
    diff = ad.constant(target) - pred
    return (diff * diff).mean(axis=1).mean()


def _unit_rows(e: Tensor) -> Tensor:
    norms = (e * e).sum(axis=1, keepdims=True) ** 0.5
    if float(norms.data.min()) < 1e-12:
        raise ValueError("zero-norm embedding in contrastive loss")
    return e / norms


def _match_targets(row_sentences: list[str], col_sentences: list[str]) -> np.ndarray:
    m = np.array([[1.0 if r == c else 0.0 for c in col_sentences] for r in row_sentences])
    return m / m.sum(axis=1, keepdims=True)


def loss_action(e_window: Tensor, e_sentence: Tensor, sentences: list[str],
                temperature: Tensor | float,
                neg_embeddings: Tensor | None = None,
                neg_sentences: list[str] | None = None) -> Tensor:
    """Symmetric contrastive loss between window and sentence embeddings.

    Both sets are cosine-normalized; logits are scaled by 1/temperature.
    Targets put uniform mass on every column whose sentence string equals
    the row's sentence, which handles in-batch duplicates. Optional extra
    sentence embeddings are appended as negative columns for the
    window-to-sentence direction.
    """
    b = e_window.shape[0]
    if e_sentence.shape[0] != b or len(sentences) != b:
        raise ValueError("batch size mismatch in contrastive loss")
    tau = temperature if isinstance(temperature, Tensor) else ad.constant(temperature)
    w = _unit_rows(e_window)
    s = _unit_rows(e_sentence)

    cols = s
    col_sentences = list(sentences)
    if neg_embeddings is not None:
        cols = ad.concat([s, _unit_rows(neg_embeddings)], axis=0)
        col_sentences = col_sentences + list(neg_sentences)

    inv_tau = tau ** -1.0
    logits_w2s = (w @ cols.swapaxes(0, 1)) * inv_tau
    t_w2s = ad.constant(_match_targets(sentences, col_sentences))
    ce_w2s = -(t_w2s * nn.log_softmax(logits_w2s, axis=1)).sum(axis=1).mean()

    logits_s2w = (s @ w.swapaxes(0, 1)) * inv_tau
    t_s2w = ad.constant(_match_targets(sentences, sentences))
    ce_s2w = -(t_s2w * nn.log_softmax(logits_s2w, axis=1)).sum(axis=1).mean()
    return (ce_w2s + ce_s2w) * 0.5


def loss_total(action: Tensor, boundary: Tensor) -> Tensor:
    return action + boundary


class PretrainModel(nn.Module):
    """Everything trained during pretraining, including the temperature."""

    def __init__(self, cfg: ModelConfig, layers: int, temperature_init: float,
                 rng: np.random.Generator):
        self.extractor = FeatureExtractor(cfg, rng)
        self.temporal = FusionTransformer(cfg.d_embed, cfg.n_heads, layers, rng)
        self.boundary = BoundaryHead(cfg.d_embed, rng)
        self.temperature = nn.parameter(np.array(temperature_init))
        self.config = cfg

    def forward_windows(self, frame_batches, boundary_targets: np.ndarray,
                        sentences: list[str]):
        """frame_batches: list of B lists of AlignedFrame (length T each).

        Windows overlap heavily, so each distinct frame is encoded once and
        rows are gathered back into (B, T, D) order.
        """
        b = len(frame_batches)
        t = len(frame_batches[0])
        unique: dict[int, int] = {}
        order: list = []
        inverse = np.empty(b * t, dtype=np.intp)
        for j, frame in enumerate(f for batch in frame_batches for f in batch):
            key = id(frame)
            if key not in unique:
                unique[key] = len(order)
                order.append(frame)
            inverse[j] = unique[key]
        x_unique = self.extractor.encode_frames(order)
        x = ad.take(x_unique, inverse).reshape((b, t, -1))
        xhat = self.temporal(x)
        e_w = window_embedding(xhat)
        b_pred = self.boundary(xhat)
        e_s = self.extractor.text_encoder.encode_batch(sentences)
        return xhat, e_w, b_pred, e_s


@dataclass
class PretrainResult:
    model: PretrainModel
    log: list[dict]   # rows: step, loss_total, loss_action, loss_boundary


def write_loss_log(path: Path | str, log: list[dict]):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as f:
        f.write("step,loss_total,loss_action,loss_boundary\n")
        for row in log:
            f.write(f"{row['step']},{row['loss_total']!r},{row['loss_action']!r},"
                    f"{row['loss_boundary']!r}\n")
    tmp.replace(path)


def pretrain(recordings: list[Recording], stats: NormalizationStats,
             pre_cfg: PreprocessConfig, samp_cfg: SamplerConfig,
             model_cfg: ModelConfig, cfg: PretrainConfig,
             progress=None) -> PretrainResult:
    """Train the feature extractor on sampled windows; deterministic per seed."""
    pairs = [(rec, k) for rec in recordings for k in range(len(rec.annotations))]
    if len(pairs) < cfg.batch_size:
        raise ValueError(
            f"dataset provides {len(pairs)} windows, fewer than batch size {cfg.batch_size}")

    frames_by_rec = {rec.id: preprocess_recording(rec, pre_cfg, stats) for rec in recordings}

    init_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7]))
    model = PretrainModel(model_cfg, cfg.layers, cfg.temperature_init, init_rng)
    params = model.parameters()
    opt = AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)

    log: list[dict] = []
    step = 0
    epoch = 0
    while step < cfg.steps:
        order_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 11, epoch]))
        order = order_rng.permutation(len(pairs))
        for lo in range(0, len(order) - cfg.batch_size + 1, cfg.batch_size):
            if step >= cfg.steps:
                break
            batch = [pairs[i] for i in order[lo:lo + cfg.batch_size]]
            samples = [sample_window(rec, k, samp_cfg, window_rng(cfg.seed, rec.id, k, epoch))
                       for rec, k in batch]
            frame_batches = [[frames_by_rec[s.recording_id][i] for i in s.frame_indices]
                             for s in samples]
            targets = np.stack([s.boundary_target for s in samples])
            sentences = [s.sentence for s in samples]

            neg_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 13, step]))
            neg_sentences = [order_sentence(shuffled_labels(s.ordered_labels, neg_rng))
                             for s in samples]

            _, e_w, b_pred, e_s = model.forward_windows(frame_batches, targets, sentences)
            e_neg = model.extractor.text_encoder.encode_batch(neg_sentences)
            la = loss_action(e_w, e_s, sentences, model.temperature, e_neg, neg_sentences)
            lb = loss_boundary(b_pred, targets)
            lt = loss_total(la, lb)
            if not np.isfinite(lt.data):
                raise FloatingPointError(
                    f"non-finite loss at step {step}: action={la.data}, boundary={lb.data}")

            opt.zero_grad()
            lt.backward()
            opt.clip_grad_norm(cfg.grad_clip)
            opt.step()
            model.temperature.data = np.clip(model.temperature.data, TAU_MIN, TAU_MAX)

            row = {"step": step, "loss_total": float(lt.data),
                   "loss_action": float(la.data), "loss_boundary": float(lb.data)}
            log.append(row)
            if progress is not None:
                progress(row)
            step += 1
        epoch += 1
    return PretrainResult(model=model, log=log)


def save_pretrain_checkpoint(path: Path | str, result: PretrainResult,
                             pre_cfg: PreprocessConfig, cfg: PretrainConfig):
    meta = {
        "kind": "pretrain",
        "model_config": result.model.config.to_json(),
        "preprocess_config": pre_cfg.to_json(),
        "pretrain_config": cfg.to_json(),
    }
    save_checkpoint(path, result.model, meta)


def load_pretrain_checkpoint(path: Path | str) -> tuple[PretrainModel, PreprocessConfig, dict]:
    from .model import load_checkpoint
    state, meta = load_checkpoint(path)
    if meta.get("kind") != "pretrain":
        raise ValueError(f"not a pretraining checkpoint: {path}")
    model_cfg = ModelConfig.from_json(meta["model_config"])
    pre_cfg = PreprocessConfig.from_json(meta["preprocess_config"])
    pt_cfg = meta.get("pretrain_config", {})
    model = PretrainModel(model_cfg, int(pt_cfg.get("layers", 2)),
                          float(pt_cfg.get("temperature_init", 0.07)),
                          np.random.default_rng(0))
    model.load_state_dict(state)
    return model, pre_cfg, meta
