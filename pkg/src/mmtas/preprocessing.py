"""Per-camera-frame alignment of images, audio spectrograms, and sensor windows.

For camera frame i with timestamp t_i, the interval [t_{i-1}, t_i) is the
frame's window. Proprioceptive streams are linearly resampled onto a fixed
number of grid points per window; audio is resampled to 16 kHz and turned
into a normalized log-mel spectrogram.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy import fft as _fft

from .data import (NORM_EPS, NormalizationStats, Recording, SensorStream,
                   canonical_json, write_json_atomic)

POWER_FLOOR = 1e-10  # energy floor before the dB conversion


class CoverageError(ValueError):
    """A stream does not cover the requested window."""


@dataclass(frozen=True)
class PreprocessConfig:
    resample_rate: float = 300.0  # Hz, must be below every sensor's native rate
    audio_rate: int = 16000
    mel_window: int = 400    # samples
    mel_hop: int = 160       # samples (10 ms at 16 kHz)
    n_mels: int = 64
    mel_fmin: float = 0.0
    mel_fmax: float = 8000.0

    def __post_init__(self):
        if self.mel_hop > self.mel_window:
            raise ValueError("mel_hop must not exceed mel_window")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")

    def samples_per_window(self, camera_rate: float) -> int:
        """Fixed window length T_s = round(resample_rate / camera rate)."""
        return int(round(self.resample_rate / camera_rate))

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "PreprocessConfig":
        return cls(**obj)

    def hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_json()).encode()).hexdigest()[:16]

    def validate_rates(self, recording: Recording):
        for s in recording.proprio:
            if s.n_samples >= 2:
                native = (s.n_samples - 1) / (s.timestamps[-1] - s.timestamps[0])
                if self.resample_rate >= native:
                    raise ValueError(
                        f"resample rate {self.resample_rate} Hz not below native rate "
                        f"{native:.1f} Hz of sensor {s.name}")


@dataclass
class AlignedFrame:
    """Preprocessed bundle for one camera frame."""

    index: int
    window: tuple[float, float]
    image: np.ndarray                 # (H, W, 3) float64 in [0, 1]
    spectrogram: np.ndarray           # (n_mels, n_frames) in [-1, 1]
    proprio: dict[str, np.ndarray]    # sensor name -> (T_s, D_s), normalized


def frame_windows(recording: Recording) -> list[tuple[int, tuple[float, float]]]:
    """One [t_{i-1}, t_i) interval per camera frame.

    Frame 0 uses a synthetic previous timestamp one nominal period earlier.
    """
    ts = recording.camera_timestamps
    first = float(ts[0]) - 1.0 / recording.camera_rate_nominal
    starts = np.concatenate([[first], ts[:-1]])
    return [(i, (float(s), float(e))) for i, (s, e) in enumerate(zip(starts, ts))]


def resample_window(stream: SensorStream, window: tuple[float, float],
                    n_samples: int) -> np.ndarray:
    """Linearly interpolate the stream onto n_samples uniform points in [start, end).

    Grid point j sits at start + j * (end - start) / n_samples.
    """
    start, end = window
    ts = stream.timestamps
    if ts[0] > start or ts[-1] < end:
        raise CoverageError(
            f"insufficient coverage: sensor {stream.name} spans "
            f"[{ts[0]},{ts[-1]}] but window is [{start},{end})")
    grid = start + np.arange(n_samples) * ((end - start) / n_samples)
    out = np.empty((n_samples, stream.dim))
    for d in range(stream.dim):
        out[:, d] = np.interp(grid, ts, stream.values[:, d])
    return out


def normalize_proprio(values: np.ndarray, stats: NormalizationStats,
                      sensor: str) -> np.ndarray:
    """(x - mean) / (std + eps) per channel."""
    mean = stats.sensor_mean[sensor]
    std = stats.sensor_std[sensor]
    if values.shape[1] != mean.shape[0]:
        raise ValueError(
            f"sensor {sensor}: {values.shape[1]} channels vs stats dim {mean.shape[0]}")
    return (values - mean) / (std + NORM_EPS)


def denormalize_proprio(values: np.ndarray, stats: NormalizationStats,
                        sensor: str) -> np.ndarray:
    return values * (stats.sensor_std[sensor] + NORM_EPS) + stats.sensor_mean[sensor]


# -- audio ------------------------------------------------------------------

def mel_filterbank(n_mels: int, n_fft: int, sample_rate: float,
                   fmin: float, fmax: float) -> np.ndarray:
    """Triangular mel filters (HTK mel scale), shape (n_mels, n_fft//2 + 1)."""

    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)

    edges_hz = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bin_freqs = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    fb = np.zeros((n_mels, bin_freqs.shape[0]))
    for m in range(n_mels):
        lo, mid, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        up = (bin_freqs - lo) / max(mid - lo, 1e-12)
        down = (hi - bin_freqs) / max(hi - mid, 1e-12)
        fb[m] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def mel_center_frequencies(config: PreprocessConfig) -> np.ndarray:
    """Center (peak) frequency of each mel filter in Hz."""

    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    edges = mel_to_hz(np.linspace(hz_to_mel(config.mel_fmin),
                                  hz_to_mel(config.mel_fmax), config.n_mels + 2))
    return edges[1:-1]


def _resample_audio(audio: SensorStream, window: tuple[float, float],
                    rate: int) -> np.ndarray:
    start, end = window
    if audio.timestamps[0] > start or audio.timestamps[-1] < end:
        raise CoverageError(
            f"insufficient coverage: sensor {audio.name} spans "
            f"[{audio.timestamps[0]},{audio.timestamps[-1]}] but window is [{start},{end})")
    n = int(round((end - start) * rate))
    grid = start + np.arange(n) / rate
    return np.interp(grid, audio.timestamps, audio.values[:, 0])


def log_mel_window(audio: SensorStream, window: tuple[float, float],
                   config: PreprocessConfig) -> np.ndarray:
    """Unnormalized log-mel spectrogram in dB for one frame window.

    Pipeline: 16 kHz linear resample, Hann-tapered short-time power
    spectra (window/hop from config), triangular mel filtering, and
    10*log10 with the energies floored at POWER_FLOOR. Windows shorter
    than one mel window are zero-padded to a single spectral frame.
    """
    samples = _resample_audio(audio, window, config.audio_rate)
    w, hop = config.mel_window, config.mel_hop
    if samples.shape[0] < w:
        samples = np.pad(samples, (0, w - samples.shape[0]))
    n_frames = (samples.shape[0] - w) // hop + 1
    taper = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(w) / w)  # periodic Hann
    frames = np.lib.stride_tricks.sliding_window_view(samples, w)[::hop][:n_frames]
    spectra = np.abs(_fft.rfft(frames * taper, axis=1)) ** 2
    fb = mel_filterbank(config.n_mels, w, config.audio_rate,
                        config.mel_fmin, config.mel_fmax)
    energies = spectra @ fb.T
    return 10.0 * np.log10(np.maximum(energies, POWER_FLOOR)).T  # (n_mels, n_frames)


def normalize_spectrogram(log_mel: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """Affine map [log_min, log_max] -> [-1, 1], clipped."""
    lo, hi = stats.spectrogram_log_min, stats.spectrogram_log_max
    return np.clip(2.0 * (log_mel - lo) / (hi - lo) - 1.0, -1.0, 1.0)


def audio_logmel(audio: SensorStream, window: tuple[float, float],
                 config: PreprocessConfig, stats: NormalizationStats) -> np.ndarray:
    if stats is None:
        raise ValueError("normalization stats required for audio_logmel")
    return normalize_spectrogram(log_mel_window(audio, window, config), stats)


# -- dataset statistics -------------------------------------------------------

def compute_normalization_stats(recordings: list[Recording],
                                config: PreprocessConfig) -> NormalizationStats:
    """Per-sensor mean/std over all raw samples plus spectrogram dB extrema.

    Population convention (divide by N). Per-recording partial sums are
    combined in sorted-recording-id order, so the result is exactly
    invariant to the order recordings are passed in.
    """
    if not recordings:
        raise ValueError("need at least one recording to compute stats")
    schema = recordings[0].sensor_schema()
    for rec in recordings[1:]:
        if rec.sensor_schema() != schema:
            raise ValueError(
                f"sensor schema mismatch: {rec.id} has {rec.sensor_schema()}, "
                f"expected {schema}")

    partials: dict[str, dict[str, tuple]] = {}
    for rec in recordings:
        if rec.id in partials:
            raise ValueError(f"duplicate recording id {rec.id}")
        per_sensor = {}
        for s in rec.proprio:
            per_sensor[s.name] = (s.values.shape[0], s.values.sum(axis=0),
                                  (s.values ** 2).sum(axis=0))
        log_lo, log_hi = np.inf, -np.inf
        for _, window in frame_windows(rec):
            lm = log_mel_window(rec.audio, window, config)
            log_lo = min(log_lo, float(lm.min()))
            log_hi = max(log_hi, float(lm.max()))
        per_sensor["__spectrogram__"] = (log_lo, log_hi)
        partials[rec.id] = per_sensor

    mean, std = {}, {}
    for name, _ in schema:
        n_total, s1, s2 = 0, 0.0, 0.0
        for rec_id in sorted(partials):
            n, a, b = partials[rec_id][name]
            n_total, s1, s2 = n_total + n, s1 + a, s2 + b
        mu = s1 / n_total
        var = np.maximum(s2 / n_total - mu ** 2, 0.0)
        mean[name], std[name] = mu, np.sqrt(var)

    log_lo = min(partials[r]["__spectrogram__"][0] for r in partials)
    log_hi = max(partials[r]["__spectrogram__"][1] for r in partials)
    stats = NormalizationStats(mean, std, log_lo, log_hi)
    stats.validate()
    return stats


# -- whole-recording preprocessing -------------------------------------------

def preprocess_recording(recording: Recording, config: PreprocessConfig,
                         stats: NormalizationStats) -> list[AlignedFrame]:
    """AlignedFrame per camera frame; count always equals the frame count."""
    t_s = config.samples_per_window(recording.camera_rate_nominal)
    frames = []
    for i, window in frame_windows(recording):
        proprio = {}
        for s in recording.proprio:
            raw = resample_window(s, window, t_s)
            proprio[s.name] = normalize_proprio(raw, stats, s.name)
        spec = audio_logmel(recording.audio, window, config, stats)
        image = recording.image(i).astype(np.float64) / 255.0
        frames.append(AlignedFrame(index=i, window=window, image=image,
                                   spectrogram=spec, proprio=proprio))
    return frames


# -- optional binary cache -----------------------------------------------

def _stats_hash(stats: NormalizationStats) -> str:
    return hashlib.sha256(canonical_json(stats.to_json()).encode()).hexdigest()[:16]


def save_preprocessed(frames: list[AlignedFrame], cache_dir: Path,
                      config: PreprocessConfig, stats: NormalizationStats) -> bool:
    """Write one float32 binary per modality plus a JSON index.

    Returns False (and writes nothing) when frames disagree on shapes,
    which can happen with jittered camera timestamps.
    """
    shapes = {
        "image": frames[0].image.shape,
        "spectrogram": frames[0].spectrogram.shape,
        **{f"proprio_{k}": v.shape for k, v in frames[0].proprio.items()},
    }
    for fr in frames:
        if fr.image.shape != shapes["image"] or fr.spectrogram.shape != shapes["spectrogram"]:
            return False
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)

    def dump(name, stack):
        arr = np.ascontiguousarray(stack, dtype="<f4")
        tmp = cache_dir / (name + ".bin.tmp")
        tmp.write_bytes(arr.tobytes())
        tmp.replace(cache_dir / (name + ".bin"))

    dump("image", np.stack([f.image for f in frames]))
    dump("spectrogram", np.stack([f.spectrogram for f in frames]))
    for k in frames[0].proprio:
        dump(f"proprio_{k}", np.stack([f.proprio[k] for f in frames]))
    index = {
        "n_frames": len(frames),
        "windows": [[f.window[0], f.window[1]] for f in frames],
        "shapes": {k: list(v) for k, v in shapes.items()},
        "dtype": "float32-le",
        "config": config.to_json(),
        "config_hash": config.hash(),
        "stats_hash": _stats_hash(stats),
    }
    write_json_atomic(cache_dir / "index.json", index)
    return True


def load_preprocessed(cache_dir: Path, config: PreprocessConfig,
                      stats: NormalizationStats) -> list[AlignedFrame] | None:
    """Read the cache back; None when absent or stale (config/stats changed)."""
    cache_dir = Path(cache_dir)
    index_path = cache_dir / "index.json"
    if not index_path.exists():
        return None
    with open(index_path) as f:
        index = json.load(f)
    if index.get("config_hash") != config.hash() or index.get("stats_hash") != _stats_hash(stats):
        return None

    def load(name):
        shape = [index["n_frames"]] + index["shapes"][name]
        raw = np.frombuffer((cache_dir / (name + ".bin")).read_bytes(), dtype="<f4")
        return raw.reshape(shape).astype(np.float64)

    images = load("image")
    specs = load("spectrogram")
    sensor_names = [k[len("proprio_"):] for k in index["shapes"] if k.startswith("proprio_")]
    proprio = {name: load(f"proprio_{name}") for name in sensor_names}
    frames = []
    for i in range(index["n_frames"]):
        frames.append(AlignedFrame(
            index=i,
            window=(index["windows"][i][0], index["windows"][i][1]),
            image=images[i],
            spectrogram=specs[i],
            proprio={k: v[i] for k, v in proprio.items()},
        ))
    return frames
