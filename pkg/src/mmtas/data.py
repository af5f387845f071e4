"""Recording data model, on-disk layout, label sets, normalization stats.

A recording directory looks like::

    rec_000/
      meta.json               id, camera rate, audio rate/start, sensor schema, label sets
      camera_timestamps.csv   one float (seconds) per line
      frames/000000.png       8-bit RGB, one per camera timestamp
      audio.wav               mono 16-bit PCM, rate >= 16 kHz
      <sensor>.csv            header "timestamp,v0,...,v{D-1}", time ordered
      annotations.csv         header "start_frame,end_frame,activity,object"

Dataset-level normalization statistics live in ``stats.json`` next to the
recording directories.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.io import wavfile

AUDIO_MIN_RATE = 16000
NORM_EPS = 1e-8


class ValidationError(ValueError):
    """A recording or stats object violated a structural invariant."""


@dataclass
class SensorStream:
    """One proprioceptive (or audio) stream: timestamps plus row-per-sample values."""

    name: str
    timestamps: np.ndarray  # (T,), seconds, strictly increasing
    values: np.ndarray      # (T, D)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def n_samples(self) -> int:
        return self.timestamps.shape[0]

    def span(self) -> tuple[float, float]:
        return float(self.timestamps[0]), float(self.timestamps[-1])

    def validate(self):
        if self.timestamps.ndim != 1:
            raise ValidationError(f"sensor {self.name}: timestamps must be 1-D")
        if self.values.shape[0] != self.timestamps.shape[0]:
            raise ValidationError(
                f"sensor {self.name}: {self.values.shape[0]} value rows vs "
                f"{self.timestamps.shape[0]} timestamps")
        if self.dim < 1:
            raise ValidationError(f"sensor {self.name}: feature dimension must be >= 1")
        if self.n_samples >= 2 and not np.all(np.diff(self.timestamps) > 0):
            raise ValidationError(f"sensor {self.name}: timestamps not strictly increasing")


@dataclass
class ActionAnnotation:
    start_frame: int
    end_frame: int  # exclusive
    activity: str
    object: str

    @property
    def fine_label(self) -> str:
        return f"{self.activity} {self.object}"

    @property
    def coarse_label(self) -> str:
        return self.activity


@dataclass
class LabelSet:
    """Fine (activity+object) and coarse (activity) label vocabularies."""

    fine_labels: list[str]
    coarse_labels: list[str]
    _fine_index: dict[str, int] = field(init=False, repr=False)
    _coarse_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if len(set(self.fine_labels)) != len(self.fine_labels):
            raise ValidationError("fine labels not unique")
        if len(set(self.coarse_labels)) != len(self.coarse_labels):
            raise ValidationError("coarse labels not unique")
        self._fine_index = {l: i for i, l in enumerate(self.fine_labels)}
        self._coarse_index = {l: i for i, l in enumerate(self.coarse_labels)}
        for l in self.fine_labels:
            if l.split(" ", 1)[0] not in self._coarse_index:
                raise ValidationError(f"fine label {l!r} has no coarse counterpart")

    @classmethod
    def from_annotations(cls, annotations) -> "LabelSet":
        fine, coarse = [], []
        for a in annotations:
            if a.fine_label not in fine:
                fine.append(a.fine_label)
            if a.coarse_label not in coarse:
                coarse.append(a.coarse_label)
        return cls(fine, coarse)

    @classmethod
    def from_activities_objects(cls, activities, objects) -> "LabelSet":
        fine = [f"{a} {o}" for o in objects for a in activities]
        return cls(fine, list(activities))

    def fine_index(self, label: str) -> int:
        return self._fine_index[label]

    def coarse_index(self, label: str) -> int:
        return self._coarse_index[label]

    def coarse_of_fine(self, fine_idx: int) -> int:
        activity = self.fine_labels[fine_idx].split(" ", 1)[0]
        return self._coarse_index[activity]

    def n_labels(self, granularity: str) -> int:
        return len(self.fine_labels if granularity == "fine" else self.coarse_labels)

    def to_json(self) -> dict:
        return {"fine": list(self.fine_labels), "coarse": list(self.coarse_labels)}

    @classmethod
    def from_json(cls, obj: dict) -> "LabelSet":
        return cls(list(obj["fine"]), list(obj["coarse"]))


@dataclass
class Recording:
    """One demonstration: camera frames, audio, proprioceptive streams, annotations."""

    id: str
    camera_timestamps: np.ndarray
    audio: SensorStream
    proprio: list[SensorStream]
    annotations: list[ActionAnnotation]
    camera_rate_nominal: float
    audio_rate: int
    frames_dir: Path | None = None
    images: np.ndarray | None = None  # optional in-memory (T, H, W, 3) uint8
    label_set: LabelSet | None = None

    def __post_init__(self):
        self.camera_timestamps = np.asarray(self.camera_timestamps, dtype=np.float64)

    @property
    def n_frames(self) -> int:
        return self.camera_timestamps.shape[0]

    def image(self, i: int) -> np.ndarray:
        if self.images is not None:
            return self.images[i]
        if self.frames_dir is None:
            raise ValueError(f"recording {self.id}: no image source")
        path = self.frames_dir / f"{i:06d}.png"
        return np.asarray(Image.open(path).convert("RGB"))

    def sensor_schema(self) -> tuple[tuple[str, int], ...]:
        return tuple((s.name, s.dim) for s in self.proprio)

    def validate(self):
        ts = self.camera_timestamps
        if ts.ndim != 1 or ts.shape[0] < 1:
            raise ValidationError(f"recording {self.id}: camera timestamps empty")
        if ts.shape[0] >= 2 and not np.all(np.diff(ts) > 0):
            raise ValidationError(f"recording {self.id}: camera timestamps not strictly increasing")
        if self.camera_rate_nominal <= 0:
            raise ValidationError(f"recording {self.id}: camera rate must be positive")
        if self.audio_rate < AUDIO_MIN_RATE:
            raise ValidationError(
                f"recording {self.id}: audio rate {self.audio_rate} Hz below {AUDIO_MIN_RATE} Hz")
        self.audio.validate()
        prev_end = 0
        for a in self.annotations:
            if a.start_frame >= a.end_frame:
                raise ValidationError(
                    f"recording {self.id}: annotation end before start "
                    f"([{a.start_frame},{a.end_frame}))")
            if a.start_frame < prev_end:
                raise ValidationError(
                    f"recording {self.id}: overlapping or unordered annotations at "
                    f"frame {a.start_frame}")
            if a.start_frame < 0 or a.end_frame > self.n_frames:
                raise ValidationError(
                    f"recording {self.id}: annotation [{a.start_frame},{a.end_frame}) "
                    f"outside [0,{self.n_frames})")
            prev_end = a.end_frame
        window_start = float(ts[0]) - 1.0 / self.camera_rate_nominal
        for s in self.proprio:
            s.validate()
            lo, hi = s.span()
            if lo > window_start or hi < float(ts[-1]):
                raise ValidationError(
                    f"recording {self.id}: sensor {s.name} covers [{lo},{hi}] but must "
                    f"cover [{window_start},{float(ts[-1])}]")


def framewise_labels(recording: Recording, label_set: LabelSet,
                     granularity: str = "fine") -> np.ndarray:
    """Per-frame label indices; requires annotations to tile every frame."""
    out = np.full(recording.n_frames, -1, dtype=np.int64)
    for a in recording.annotations:
        idx = label_set.fine_index(a.fine_label) if granularity == "fine" \
            else label_set.coarse_index(a.coarse_label)
        out[a.start_frame:a.end_frame] = idx
    if np.any(out < 0):
        missing = int(np.argmax(out < 0))
        raise ValidationError(
            f"recording {recording.id}: frame {missing} not covered by any annotation")
    return out


def transition_frames(recording: Recording) -> list[int]:
    """Frames at which a new action begins (interior transitions only)."""
    anns = recording.annotations
    frames: list[int] = []
    for prev, cur in zip(anns[:-1], anns[1:]):
        if prev.end_frame != cur.start_frame:
            frames.append(prev.end_frame)  # action -> idle gap
        frames.append(cur.start_frame)
    return frames


@dataclass
class NormalizationStats:
    """Training-set statistics used by the preprocessing stage."""

    sensor_mean: dict[str, np.ndarray]
    sensor_std: dict[str, np.ndarray]
    spectrogram_log_min: float
    spectrogram_log_max: float

    def validate(self):
        for name, std in self.sensor_std.items():
            if np.any(np.asarray(std) < 0):
                raise ValidationError(f"sensor {name}: negative std")
        if not self.spectrogram_log_min < self.spectrogram_log_max:
            raise ValidationError(
                "spectrogram log range degenerate: "
                f"min {self.spectrogram_log_min} >= max {self.spectrogram_log_max}")

    def to_json(self) -> dict:
        return {
            "sensor_mean": {k: list(map(float, v)) for k, v in self.sensor_mean.items()},
            "sensor_std": {k: list(map(float, v)) for k, v in self.sensor_std.items()},
            "spectrogram_log_min": float(self.spectrogram_log_min),
            "spectrogram_log_max": float(self.spectrogram_log_max),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NormalizationStats":
        stats = cls(
            sensor_mean={k: np.asarray(v, dtype=np.float64) for k, v in obj["sensor_mean"].items()},
            sensor_std={k: np.asarray(v, dtype=np.float64) for k, v in obj["sensor_std"].items()},
            spectrogram_log_min=float(obj["spectrogram_log_min"]),
            spectrogram_log_max=float(obj["spectrogram_log_max"]),
        )
        stats.validate()
        return stats

    def save(self, path: Path):
        write_json_atomic(path, self.to_json())

    @classmethod
    def load(cls, path: Path) -> "NormalizationStats":
        with open(path) as f:
            return cls.from_json(json.load(f))


# -- directory IO -----------------------------------------------------------

def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json_atomic(path: Path, obj):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(canonical_json(obj))
    tmp.replace(path)


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing {what}: {path}")
    return path


def load_recording(path: Path | str) -> Recording:
    """Load and validate one recording directory.

    Raises FileNotFoundError for absent files and ValidationError for
    invariant violations, each naming the offending piece.
    """
    path = Path(path)
    with open(_require(path / "meta.json", "meta file")) as f:
        meta = json.load(f)

    ts = np.loadtxt(_require(path / "camera_timestamps.csv", "camera timestamps"),
                    dtype=np.float64, ndmin=1)

    rate, samples = wavfile.read(_require(path / "audio.wav", "audio stream audio.wav"))
    if samples.dtype != np.int16:
        raise ValidationError(f"recording {meta['id']}: audio.wav must be 16-bit PCM")
    audio_values = samples.astype(np.float64) / 32768.0
    audio_t0 = float(meta.get("audio_start_time", 0.0))
    audio_ts = audio_t0 + np.arange(audio_values.shape[0], dtype=np.float64) / rate
    audio = SensorStream("audio", audio_ts, audio_values[:, None])

    proprio = []
    for spec in meta["sensors"]:
        name, dim = spec["name"], int(spec["dim"])
        table = np.loadtxt(_require(path / f"{name}.csv", f"sensor stream {name}.csv"),
                           delimiter=",", skiprows=1, dtype=np.float64, ndmin=2)
        if table.shape[1] != dim + 1:
            raise ValidationError(
                f"sensor {name}: expected {dim + 1} columns, found {table.shape[1]}")
        proprio.append(SensorStream(name, table[:, 0], table[:, 1:]))

    annotations = []
    ann_path = _require(path / "annotations.csv", "annotations")
    with open(ann_path) as f:
        header = f.readline().strip()
        if header != "start_frame,end_frame,activity,object":
            raise ValidationError(f"annotations.csv: unexpected header {header!r}")
        for line in f:
            line = line.strip()
            if not line:
                continue
            s, e, act, obj = line.split(",")
            annotations.append(ActionAnnotation(int(s), int(e), act, obj))

    frames_dir = _require(path / "frames", "frames directory")
    n_pngs = len(list(frames_dir.glob("*.png")))
    if n_pngs != ts.shape[0]:
        raise ValidationError(
            f"recording {meta['id']}: {n_pngs} frames but {ts.shape[0]} camera timestamps")

    label_set = LabelSet.from_json(meta["label_sets"]) if "label_sets" in meta else None
    rec = Recording(
        id=meta["id"],
        camera_timestamps=ts,
        audio=audio,
        proprio=proprio,
        annotations=annotations,
        camera_rate_nominal=float(meta["camera_rate_nominal"]),
        audio_rate=int(rate),
        frames_dir=frames_dir,
        label_set=label_set,
    )
    rec.validate()
    return rec


def write_recording(rec: Recording, path: Path | str):
    """Persist a recording in the directory layout read by load_recording."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "id": rec.id,
        "camera_rate_nominal": rec.camera_rate_nominal,
        "audio_rate": rec.audio_rate,
        "audio_start_time": float(rec.audio.timestamps[0]),
        "sensors": [{"name": s.name, "dim": s.dim} for s in rec.proprio],
    }
    if rec.label_set is not None:
        meta["label_sets"] = rec.label_set.to_json()
    write_json_atomic(path / "meta.json", meta)

    with open(path / "camera_timestamps.csv", "w") as f:
        for t in rec.camera_timestamps:
            f.write(repr(float(t)) + "\n")

    pcm = np.clip(np.round(rec.audio.values[:, 0] * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(path / "audio.wav", rec.audio_rate, pcm)

    for s in rec.proprio:
        header = "timestamp," + ",".join(f"v{i}" for i in range(s.dim))
        table = np.column_stack([s.timestamps, s.values])
        np.savetxt(path / f"{s.name}.csv", table, delimiter=",", header=header,
                   comments="", fmt=["%.10g"] + ["%.6g"] * s.dim)

    with open(path / "annotations.csv", "w") as f:
        f.write("start_frame,end_frame,activity,object\n")
        for a in rec.annotations:
            f.write(f"{a.start_frame},{a.end_frame},{a.activity},{a.object}\n")

    frames = path / "frames"
    frames.mkdir(exist_ok=True)
    if rec.images is None:
        raise ValueError(f"recording {rec.id}: no in-memory images to write")
    for i in range(rec.n_frames):
        Image.fromarray(rec.images[i]).save(frames / f"{i:06d}.png")


def list_recording_dirs(root: Path | str) -> list[Path]:
    root = Path(root)
    return sorted(p for p in root.iterdir() if (p / "meta.json").exists())
