"""Synthetic multimodal recordings with class-separable sensor signatures.

Each recording is a sequence of (activity, object) actions tiling the frame
axis. Every action imprints a signature on every modality:

* object identity -> gripper-width plateau and force/torque magnitude scale
* activity -> end-effector position/twist trajectory shape and rotation axis
* every action transition -> short audio tone burst (frequency encodes the
  activity) and a force bump
* images -> background colour encodes the activity, a centered square whose
  size and colour encode the object, plus pixel noise

Generation is deterministic for a fixed (config, seed): equal inputs yield
byte-identical directories.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (ActionAnnotation, LabelSet, Recording, SensorStream,
                   load_recording)

# short actions separate the long contact-rich ones, REASSEMBLE-style
LONG_ACTIVITIES = ("insert", "remove")

ACTIVITY_COLORS = np.array([
    [40, 40, 46], [70, 30, 30], [30, 70, 30], [30, 30, 70], [70, 70, 20],
    [20, 70, 70], [70, 20, 70],
], dtype=np.float64)
OBJECT_COLORS = np.array([
    [220, 60, 60], [60, 220, 60], [60, 60, 220], [220, 220, 60],
    [60, 220, 220], [220, 60, 220], [220, 220, 220], [120, 200, 80],
], dtype=np.float64)


@dataclass(frozen=True)
class SynthConfig:
    n_recordings: int = 5
    actions_per_recording: int = 12
    camera_rate: float = 10.0
    activities: tuple[str, ...] = ("pick", "insert", "remove", "place")
    objects: tuple[str, ...] = ("usb", "gear", "peg", "nut")
    image_size: int = 32
    audio_rate: int = 16000
    short_frames: tuple[int, int] = (8, 16)   # closed integer range
    long_frames: tuple[int, int] = (35, 60)
    # native sensor rates in Hz; all must exceed the 300 Hz resample target
    rate_force_torque: float = 500.0
    rate_pose: float = 400.0
    rate_twist: float = 400.0
    rate_gripper: float = 350.0
    sensor_noise: float = 0.02
    image_noise: float = 10.0
    audio_noise: float = 0.003
    # 1.0 keeps objects fully distinct in every modality; smaller values pull
    # the object-dependent signatures together (fine labels get harder while
    # activities stay easy, the regime real assembly data lives in)
    object_separation: float = 1.0

    def validate(self):
        if self.n_recordings < 1:
            raise ValueError("n_recordings must be >= 1")
        if self.actions_per_recording < 1:
            raise ValueError("actions_per_recording must be >= 1 (zero actions)")
        if self.camera_rate <= 0:
            raise ValueError("camera rate must be positive")
        if len(self.activities) < 1 or len(self.objects) < 1:
            raise ValueError("need at least one activity and one object")

    def label_set(self) -> LabelSet:
        return LabelSet.from_activities_objects(self.activities, self.objects)


def _stable_hash(s: str) -> int:
    return zlib.crc32(s.encode("utf-8"))


def _rng_for(seed: int, *parts) -> np.random.Generator:
    entropy = [seed] + [p if isinstance(p, int) else _stable_hash(p) for p in parts]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _activity_shape(a: int, u: np.ndarray) -> np.ndarray:
    """Distinct 3-D trajectory shape per activity index, u in [0,1]. -> (len(u), 3)"""
    c1 = 0.05 + 0.03 * a
    c2 = 0.04 * ((a % 3) + 1)
    c3 = 0.06 * ((a % 2) + 1)
    return np.stack([
        c1 * np.sin(np.pi * u * (1 + a % 2)),
        c2 * (1.0 - np.cos(2.0 * np.pi * u)) / 2.0,
        c3 * 4.0 * u * (1.0 - u),
    ], axis=1)


def _quat_from_axis_angle(axis: np.ndarray, angle: np.ndarray) -> np.ndarray:
    half = angle / 2.0
    q = np.zeros((angle.shape[0], 4))
    q[:, 0] = np.cos(half)
    q[:, 1:] = np.sin(half)[:, None] * axis[None, :]
    return q


def _enforce_quat_continuity(q: np.ndarray) -> np.ndarray:
    """Flip signs so consecutive quaternions keep a nonnegative dot product."""
    out = q.copy()
    for i in range(1, out.shape[0]):
        if np.dot(out[i], out[i - 1]) < 0:
            out[i] = -out[i]
    return out


@dataclass
class _Timeline:
    starts: np.ndarray        # frame index per action
    ends: np.ndarray
    activity_idx: np.ndarray
    object_idx: np.ndarray
    n_frames: int

    def action_at_time(self, t: np.ndarray, rate: float) -> np.ndarray:
        """Action index covering each time (seconds); clamped at the edges."""
        frame = np.floor(t * rate).astype(np.int64)
        frame = np.clip(frame, 0, self.n_frames - 1)
        return np.searchsorted(self.ends, frame, side="right").clip(0, len(self.ends) - 1)


def _build_timeline(cfg: SynthConfig, rng: np.random.Generator) -> _Timeline:
    object_order = rng.permutation(len(cfg.objects))
    acts, objs, durations = [], [], []
    k = 0
    while len(acts) < cfg.actions_per_recording:
        obj = int(object_order[k % len(object_order)])
        k += 1
        for a, activity in enumerate(cfg.activities):
            if len(acts) >= cfg.actions_per_recording:
                break
            lo, hi = cfg.long_frames if activity in LONG_ACTIVITIES else cfg.short_frames
            durations.append(int(rng.integers(lo, hi + 1)))
            acts.append(a)
            objs.append(obj)
    ends = np.cumsum(durations)
    starts = ends - np.asarray(durations)
    return _Timeline(starts=starts, ends=ends, activity_idx=np.asarray(acts),
                     object_idx=np.asarray(objs), n_frames=int(ends[-1]))


def _phase(t: np.ndarray, tl: _Timeline, rate: float) -> tuple[np.ndarray, np.ndarray]:
    """Action index covering each time plus phase u in [0,1] within it."""
    idx = tl.action_at_time(t, rate)
    s = tl.starts[idx] / rate
    e = tl.ends[idx] / rate
    u = np.clip((t - s) / np.maximum(e - s, 1e-9), 0.0, 1.0)
    return idx, u


def _object_stations(n_objects: int, separation: float) -> np.ndarray:
    k = np.arange(n_objects) * separation
    return np.stack([0.12 * k, 0.05 * (np.arange(n_objects) % 2) * separation,
                     0.10 + 0.02 * (np.arange(n_objects) % 3) * separation], axis=1)


def _activity_shape_for(a: np.ndarray, u: np.ndarray) -> np.ndarray:
    out = np.zeros((len(u), 3))
    for ai in np.unique(a):
        m = a == ai
        out[m] = _activity_shape(int(ai), u[m])
    return out


_ROT_AXES = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0],
                      [0.7071067811865476, 0.7071067811865476, 0],
                      [0, 0.7071067811865476, 0.7071067811865476],
                      [0.7071067811865476, 0, 0.7071067811865476],
                      [0.577350269189626, 0.577350269189626, 0.577350269189626]])


def _gen_pose_twist(cfg: SynthConfig, tl: _Timeline, rng: np.random.Generator,
                    t_pose: np.ndarray, t_twist: np.ndarray):
    stations = _object_stations(len(cfg.objects), cfg.object_separation)

    def clean_position(t):
        idx, u = _phase(t, tl, cfg.camera_rate)
        a = tl.activity_idx[idx]
        o = tl.object_idx[idx]
        return stations[o] + _activity_shape_for(a, u), a, u

    pos, a, u = clean_position(t_pose)

    # orientation: rotation about an activity-specific axis, angle follows phase
    quat = np.zeros((len(t_pose), 4))
    angles = (0.3 + 0.25 * a) * np.sin(np.pi * u)
    for ai in np.unique(a):
        m = a == ai
        quat[m] = _quat_from_axis_angle(_ROT_AXES[int(ai) % len(_ROT_AXES)], angles[m])
    quat = _enforce_quat_continuity(quat)
    pose = np.concatenate([pos + rng.normal(0, cfg.sensor_noise * 0.2, pos.shape), quat], axis=1)

    # twist: velocity of the clean position plus the analytic angular rate
    pos_tw, a_tw, u_tw = clean_position(t_twist)
    dt = np.gradient(t_twist)
    lin_vel = np.gradient(pos_tw, axis=0) / dt[:, None]
    ang_vel = np.zeros_like(lin_vel)
    for ai in np.unique(a_tw):
        m = a_tw == ai
        rate_of_angle = (0.3 + 0.25 * ai) * np.pi * np.cos(np.pi * u_tw[m])
        ang_vel[m] = rate_of_angle[:, None] * _ROT_AXES[int(ai) % len(_ROT_AXES)][None, :]
    twist = np.concatenate([lin_vel, ang_vel], axis=1)
    twist += rng.normal(0, cfg.sensor_noise, twist.shape)
    return pose, twist


def _gen_force_torque(cfg: SynthConfig, tl: _Timeline, rng: np.random.Generator,
                      t: np.ndarray) -> np.ndarray:
    idx, u = _phase(t, tl, cfg.camera_rate)
    a = tl.activity_idx[idx]
    o = tl.object_idx[idx]
    long_mask = np.isin(a, [i for i, name in enumerate(cfg.activities)
                            if name in LONG_ACTIVITIES])
    magnitude = (2.0 + 1.5 * cfg.object_separation * o) * \
        np.where(long_mask, np.sin(np.pi * u), 0.15 * u)
    direction = np.stack([
        np.cos(0.8 * a), np.sin(0.8 * a), 0.5 + 0.1 * a,
        0.2 * np.cos(1.3 * a), 0.2 * np.sin(1.3 * a),
        0.1 + 0.05 * cfg.object_separation * o,
    ], axis=1)
    ft = magnitude[:, None] * direction
    # amplitude bump at every action transition
    for start_frame in tl.starts[1:]:
        t0 = start_frame / cfg.camera_rate
        ft[:, 2] += 3.0 * np.exp(-((t - t0) ** 2) / (2 * 0.05 ** 2))
    ft += rng.normal(0, cfg.sensor_noise * 3, ft.shape)
    return ft


def _gen_gripper(cfg: SynthConfig, tl: _Timeline, rng: np.random.Generator,
                 t: np.ndarray) -> np.ndarray:
    open_width = 0.08
    widths = 0.020 + 0.015 * cfg.object_separation * np.arange(len(cfg.objects))
    idx, u = _phase(t, tl, cfg.camera_rate)
    a = tl.activity_idx[idx]
    o = tl.object_idx[idx]
    w = np.full(len(t), open_width)
    names = list(cfg.activities)
    pick_i = names.index("pick") if "pick" in names else -1
    place_i = names.index("place") if "place" in names else -1
    holding = (a != pick_i) & (a != place_i)
    w[holding] = widths[o[holding]]
    if pick_i >= 0:
        m = a == pick_i
        blend = _smoothstep((u[m] - 0.3) / 0.3)
        w[m] = open_width + (widths[o[m]] - open_width) * blend
    if place_i >= 0:
        m = a == place_i
        blend = _smoothstep((u[m] - 0.4) / 0.3)
        w[m] = widths[o[m]] + (open_width - widths[o[m]]) * blend
    w += rng.normal(0, cfg.sensor_noise * 0.02, w.shape)
    return w[:, None]


def _gen_audio(cfg: SynthConfig, tl: _Timeline, rng: np.random.Generator,
               t: np.ndarray) -> np.ndarray:
    wave = rng.normal(0, cfg.audio_noise, len(t))
    burst_len = 0.15
    for start_frame, a in zip(tl.starts, tl.activity_idx):
        t0 = start_frame / cfg.camera_rate
        freq = 500.0 + 700.0 * a
        m = (t >= t0) & (t < t0 + burst_len)
        rel = t[m] - t0
        wave[m] += 0.5 * np.exp(-rel / 0.04) * np.sin(2 * np.pi * freq * rel)
    return np.clip(wave, -1.0, 1.0)[:, None]


def _gen_images(cfg: SynthConfig, tl: _Timeline, rng: np.random.Generator) -> np.ndarray:
    n, size = tl.n_frames, cfg.image_size
    sep = cfg.object_separation
    colors = np.array([OBJECT_COLORS[o % len(OBJECT_COLORS)]
                       for o in range(len(cfg.objects))])
    colors = colors.mean(axis=0) + sep * (colors - colors.mean(axis=0))
    imgs = np.zeros((n, size, size, 3))
    frame_action = np.searchsorted(tl.ends, np.arange(n), side="right")
    for i in range(n):
        a = int(tl.activity_idx[frame_action[i]])
        o = int(tl.object_idx[frame_action[i]])
        imgs[i, :, :, :] = ACTIVITY_COLORS[a % len(ACTIVITY_COLORS)]
        half = 3 + int(round(2 * sep * o))
        c = size // 2
        imgs[i, c - half:c + half, c - half:c + half, :] = colors[o]
    imgs += rng.normal(0, cfg.image_noise, imgs.shape)
    return np.clip(np.round(imgs), 0, 255).astype(np.uint8)


def _generate_recording(cfg: SynthConfig, seed: int, index: int) -> Recording:
    rec_id = f"rec_{index:03d}"
    rng = _rng_for(seed, "recording", index)
    tl = _build_timeline(cfg, rng)
    rate = cfg.camera_rate
    camera_ts = np.arange(tl.n_frames, dtype=np.float64) / rate
    t_end = tl.n_frames / rate
    lead = 0.2  # streams start before the first frame window

    def grid(sensor_rate):
        n = int(np.ceil((t_end + lead + 0.05) * sensor_rate))
        return -lead + np.arange(n) / sensor_rate

    t_ft = grid(cfg.rate_force_torque)
    t_pose = grid(cfg.rate_pose)
    t_twist = grid(cfg.rate_twist)
    t_grip = grid(cfg.rate_gripper)
    t_audio = grid(cfg.audio_rate)

    pose, twist = _gen_pose_twist(cfg, tl, rng, t_pose, t_twist)
    ft = _gen_force_torque(cfg, tl, rng, t_ft)
    grip = _gen_gripper(cfg, tl, rng, t_grip)
    audio = _gen_audio(cfg, tl, rng, t_audio)
    images = _gen_images(cfg, tl, rng)

    annotations = [
        ActionAnnotation(int(s), int(e), cfg.activities[a], cfg.objects[o])
        for s, e, a, o in zip(tl.starts, tl.ends, tl.activity_idx, tl.object_idx)
    ]
    return Recording(
        id=rec_id,
        camera_timestamps=camera_ts,
        audio=SensorStream("audio", t_audio, audio),
        proprio=[
            SensorStream("force_torque", t_ft, ft),
            SensorStream("pose", t_pose, pose),
            SensorStream("twist", t_twist, twist),
            SensorStream("gripper", t_grip, grip),
        ],
        annotations=annotations,
        camera_rate_nominal=rate,
        audio_rate=cfg.audio_rate,
        images=images,
        label_set=cfg.label_set(),
    )


def generate_synthetic_dataset(cfg: SynthConfig, seed: int,
                               out_dir: Path | str) -> list[Recording]:
    """Generate, persist, and reload `cfg.n_recordings` recordings.

    Reloading through load_recording doubles as invariant validation.
    """
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .data import write_recording  # local import keeps module load light

    recordings = []
    for i in range(cfg.n_recordings):
        rec = _generate_recording(cfg, seed, i)
        rec_dir = out_dir / rec.id
        write_recording(rec, rec_dir)
        recordings.append(load_recording(rec_dir))
    return recordings
