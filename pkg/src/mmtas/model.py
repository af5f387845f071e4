"""Multimodal frame encoder: per-modality encoders producing same-width
tokens, fused by one self-attention layer plus an MLP into a single frame
feature.

The image/audio/text encoders here are small trainable stand-ins; anything
mapping its input to a d_embed vector (e.g. adapters over pretrained
backbones) can be dropped in, the fusion stage never looks inside them.
"""

from __future__ import annotations

import hashlib
import json
import re
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .data import Recording, canonical_json
from .preprocessing import AlignedFrame, PreprocessConfig


@dataclass(frozen=True)
class SensorSpec:
    name: str
    dim: int          # D_s
    window_len: int   # T_s


@dataclass(frozen=True)
class ModelConfig:
    d_embed: int = 512
    n_heads: int = 8
    fusion_hidden: int = 0          # 0 -> 2 * d_embed
    sensors: tuple[SensorSpec, ...] = ()
    image_hw: tuple[int, int] = (32, 32)
    n_mels: int = 64
    text_vocab: int = 512

    def __post_init__(self):
        if self.d_embed % self.n_heads:
            raise ValueError(f"d_embed {self.d_embed} not divisible by n_heads {self.n_heads}")
        if len(self.sensors) < 1:
            raise ValueError("need at least one proprioceptive sensor")

    @property
    def n_tokens(self) -> int:
        return len(self.sensors) + 2

    @property
    def hidden(self) -> int:
        return self.fusion_hidden or 2 * self.d_embed

    def to_json(self) -> dict:
        return {
            "d_embed": self.d_embed,
            "n_heads": self.n_heads,
            "fusion_hidden": self.fusion_hidden,
            "sensors": [{"name": s.name, "dim": s.dim, "window_len": s.window_len}
                        for s in self.sensors],
            "image_hw": list(self.image_hw),
            "n_mels": self.n_mels,
            "text_vocab": self.text_vocab,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        return cls(
            d_embed=int(obj["d_embed"]),
            n_heads=int(obj["n_heads"]),
            fusion_hidden=int(obj["fusion_hidden"]),
            sensors=tuple(SensorSpec(s["name"], int(s["dim"]), int(s["window_len"]))
                          for s in obj["sensors"]),
            image_hw=tuple(obj["image_hw"]),
            n_mels=int(obj["n_mels"]),
            text_vocab=int(obj["text_vocab"]),
        )

    @classmethod
    def for_dataset(cls, recording: Recording, pre_config: PreprocessConfig,
                    d_embed: int = 512, n_heads: int = 8,
                    fusion_hidden: int = 0, text_vocab: int = 512) -> "ModelConfig":
        t_s = pre_config.samples_per_window(recording.camera_rate_nominal)
        sensors = tuple(SensorSpec(name, dim, t_s) for name, dim in recording.sensor_schema())
        img = recording.image(0)
        return cls(d_embed=d_embed, n_heads=n_heads, fusion_hidden=fusion_hidden,
                   sensors=sensors, image_hw=(img.shape[0], img.shape[1]),
                   n_mels=pre_config.n_mels, text_vocab=text_vocab)


class ProprioEncoder(nn.Module):
    """Per-timestep projection, elementwise temporal weighting, temporal mean."""

    def __init__(self, spec: SensorSpec, d_embed: int, rng: np.random.Generator):
        self.projection = nn.parameter(nn.xavier_uniform(rng, spec.dim, d_embed))
        self.temporal = nn.parameter(
            np.ones((spec.window_len, d_embed)) + rng.normal(0, 0.01, (spec.window_len, d_embed)))
        self._spec = spec

    def __call__(self, x: Tensor) -> Tensor:
        # x: (N, T_s, D_s) -> (N, D_e)
        if x.shape[1:] != (self._spec.window_len, self._spec.dim):
            raise ValueError(
                f"sensor {self._spec.name}: window shape {x.shape[1:]} vs "
                f"({self._spec.window_len}, {self._spec.dim})")
        return ((x @ self.projection) * self.temporal).mean(axis=1)


class ImageEncoder(nn.Module):
    """Three strided conv layers plus a linear head."""

    def __init__(self, hw: tuple[int, int], d_embed: int, rng: np.random.Generator):
        self.conv1 = nn.Conv2d(3, 8, rng)
        self.conv2 = nn.Conv2d(8, 16, rng)
        self.conv3 = nn.Conv2d(16, 32, rng)
        h, w = hw
        for _ in range(3):
            h, w = (h - 1) // 2 + 1, (w - 1) // 2 + 1
        self.head = nn.Linear(h * w * 32, d_embed, rng)
        self._hw = hw

    def __call__(self, x: Tensor) -> Tensor:
        # x: (N, H, W, 3) in [0, 1]
        n = x.shape[0]
        z = x - 0.5
        z = nn.gelu(self.conv1(z))
        z = nn.gelu(self.conv2(z))
        z = nn.gelu(self.conv3(z))
        return self.head(z.reshape((n, -1)))


class AudioEncoder(nn.Module):
    """Two conv layers over the spectrogram; time axis is mean-pooled so the
    encoder accepts any number of spectral frames."""

    def __init__(self, n_mels: int, d_embed: int, rng: np.random.Generator):
        self.conv1 = nn.Conv2d(1, 8, rng)
        self.conv2 = nn.Conv2d(8, 16, rng)
        m = n_mels
        for _ in range(2):
            m = (m - 1) // 2 + 1
        self.head = nn.Linear(m * 16, d_embed, rng)

    def __call__(self, x: Tensor) -> Tensor:
        # x: (N, n_mels, F) in [-1, 1]
        n, m, f = x.shape
        z = x.reshape((n, m, f, 1))
        z = nn.gelu(self.conv1(z))
        z = nn.gelu(self.conv2(z))
        z = z.mean(axis=2)  # pool over time -> (N, m', 16)
        return self.head(z.reshape((n, -1)))


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def hash_tokens(sentence: str, vocab: int) -> np.ndarray:
    ids = [zlib.crc32(tok.encode("utf-8")) % vocab
           for tok in _TOKEN_RE.findall(sentence.lower())]
    if not ids:
        raise ValueError(f"sentence {sentence!r} produced no tokens")
    return np.asarray(ids, dtype=np.intp)


class TextEncoder(nn.Module):
    """Hash-token embeddings + sinusoidal positions + one encoder layer, mean-pooled.

    Positions matter: order sentences with permuted labels share a token
    multiset and would otherwise be indistinguishable after pooling.
    """

    def __init__(self, vocab: int, d_embed: int, n_heads: int, rng: np.random.Generator):
        self.embedding = nn.Embedding(vocab, d_embed, rng)
        self.encoder = nn.TransformerEncoderLayer(d_embed, n_heads, rng)
        self._vocab = vocab
        self._d = d_embed
        self._pos = nn.sinusoidal_positions(256, d_embed) * 0.02

    def encode(self, sentence: str) -> Tensor:
        ids = hash_tokens(sentence, self._vocab)
        x = self.embedding(ids) + ad.constant(self._pos[:len(ids)])
        h = self.encoder(x.reshape((1, len(ids), self._d)))
        return h.mean(axis=1)  # (1, D)

    def encode_batch(self, sentences: list[str]) -> Tensor:
        return ad.concat([self.encode(s) for s in sentences], axis=0)


class ModalityFusion(nn.Module):
    """One self-attention encoder layer over the modality tokens, then an MLP
    over their concatenation."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.encoder = nn.TransformerEncoderLayer(cfg.d_embed, cfg.n_heads, rng)
        self.mlp1 = nn.Linear(cfg.d_embed * cfg.n_tokens, cfg.hidden, rng)
        self.mlp2 = nn.Linear(cfg.hidden, cfg.d_embed, rng)
        self._n_tokens = cfg.n_tokens

    def __call__(self, tokens: Tensor) -> Tensor:
        # tokens: (N, N_s + 2, D_e) -> (N, D_e)
        n, m, d = tokens.shape
        if m != self._n_tokens:
            raise ValueError(f"expected {self._n_tokens} modality tokens, got {m}")
        mixed = self.encoder(tokens)
        return self.mlp2(nn.gelu(self.mlp1(mixed.reshape((n, m * d)))))


class FeatureExtractor(nn.Module):
    """Modality encoders + fusion; maps an aligned frame to one feature row."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.image_encoder = ImageEncoder(cfg.image_hw, cfg.d_embed, rng)
        self.audio_encoder = AudioEncoder(cfg.n_mels, cfg.d_embed, rng)
        self.text_encoder = TextEncoder(cfg.text_vocab, cfg.d_embed, cfg.n_heads, rng)
        self.proprio_encoders = [ProprioEncoder(s, cfg.d_embed, rng) for s in cfg.sensors]
        self.fusion = ModalityFusion(cfg, rng)
        self.config = cfg

    def fuse(self, image_tok: Tensor, audio_tok: Tensor, sensor_toks: list[Tensor]) -> Tensor:
        n, d = image_tok.shape
        parts = [image_tok, audio_tok] + list(sensor_toks)
        tokens = ad.concat([p.reshape((n, 1, d)) for p in parts], axis=1)
        return self.fusion(tokens)

    def encode_arrays(self, images: np.ndarray, spectrograms,
                      proprio: dict[str, np.ndarray]) -> Tensor:
        """Encode N frames given stacked per-modality arrays.

        `spectrograms` is either one (N, n_mels, F) array or a list of
        per-frame arrays whose frame counts may differ (jittered windows);
        the list case is batched per distinct shape.
        """
        image_tok = self.image_encoder(ad.constant(images))
        if isinstance(spectrograms, np.ndarray):
            audio_tok = self.audio_encoder(ad.constant(spectrograms))
        else:
            groups: dict[tuple, list[int]] = {}
            for i, s in enumerate(spectrograms):
                groups.setdefault(s.shape, []).append(i)
            chunks, order = [], []
            for shape in sorted(groups):
                idx = groups[shape]
                chunks.append(self.audio_encoder(
                    ad.constant(np.stack([spectrograms[i] for i in idx]))))
                order.extend(idx)
            audio_tok = ad.take(ad.concat(chunks, axis=0), np.argsort(order))
        sensor_toks = [enc(ad.constant(proprio[enc._spec.name]))
                       for enc in self.proprio_encoders]
        return self.fuse(image_tok, audio_tok, sensor_toks)

    def encode_frames(self, frames: list[AlignedFrame]) -> Tensor:
        images = np.stack([f.image for f in frames])
        shapes = {f.spectrogram.shape for f in frames}
        if len(shapes) == 1:
            spect = np.stack([f.spectrogram for f in frames])
        else:
            spect = [f.spectrogram for f in frames]
        proprio = {name: np.stack([f.proprio[name] for f in frames])
                   for name in frames[0].proprio}
        return self.encode_arrays(images, spect, proprio)

    def encode_frame(self, frame: AlignedFrame) -> np.ndarray:
        with ad.no_grad():
            return self.encode_frames([frame]).data[0]


# -- checkpoints --------------------------------------------------------------

def save_checkpoint(path: Path | str, module: nn.Module, meta: dict):
    """Single npz archive: parameter arrays keyed by hierarchical name plus a
    JSON metadata blob (model/preprocess configs and friends)."""
    path = Path(path)
    payload = {f"param:{k}": v for k, v in sorted(module.state_dict().items())}
    payload["__meta__"] = np.array(json.dumps(meta, sort_keys=True))
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        np.savez(f, **payload)
    tmp.replace(path)


def load_checkpoint(path: Path | str) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing checkpoint: {path}")
    with np.load(path) as archive:
        meta = json.loads(str(archive["__meta__"]))
        state = {k[len("param:"):]: archive[k] for k in archive.files if k.startswith("param:")}
    return state, meta


def checkpoint_fingerprint(path: Path | str) -> str:
    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return digest[:16]


def check_schema(model_cfg: ModelConfig, pre_cfg: PreprocessConfig, recording: Recording):
    """Reject a checkpoint whose input schema disagrees with the recording."""
    t_s = pre_cfg.samples_per_window(recording.camera_rate_nominal)
    expected = tuple(SensorSpec(name, dim, t_s) for name, dim in recording.sensor_schema())
    if model_cfg.sensors != expected:
        raise ValueError(
            "checkpoint/dataset schema mismatch: checkpoint sensors "
            f"{model_cfg.sensors} vs dataset {expected}")
    img = recording.image(0)
    if model_cfg.image_hw != (img.shape[0], img.shape[1]):
        raise ValueError(
            "checkpoint/dataset schema mismatch: image size "
            f"{model_cfg.image_hw} vs dataset {(img.shape[0], img.shape[1])}")
