"""Reference motion clips: procedural generation, on-disk format, feature
extraction, and transition sampling.

Three behaviors are generated procedurally (walk, run, get-up from prone or
supine); they stand in for retargeted motion-capture data. A clip stores
poses only; velocities are reconstructed by forward finite differences at
feature-extraction time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .sim import BipedModel, N_JOINTS, foot_heights, projected_gravity

BEHAVIOR_TAGS = ("walk", "run", "getup_prone", "getup_supine")
FRAME_WIDTH = 9  # root_x, root_z, pitch, 6 joints
FEATURE_DIM = 20
CONTINUITY_BOUND = 0.5  # rad, max joint displacement between frames

# feature vector layout
F_GRAV = slice(0, 2)
F_HEIGHT = 2
F_ROOT_VEL = slice(3, 5)
F_PITCH_RATE = 5
F_JOINT_POS = slice(6, 12)
F_JOINT_VEL = slice(12, 18)
F_FOOT_H = slice(18, 20)


class ClipError(ValueError):
    """Clip fails validation (limits, continuity, shape)."""


class ClipParseError(ClipError):
    """Clip file cannot be parsed."""


@dataclass(frozen=True)
class ClipFrame:
    root_x: float
    root_z: float
    pitch: float
    joint_pos: np.ndarray  # 6 values: left hip/knee/ankle, right hip/knee/ankle

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.root_x, self.root_z, self.pitch], self.joint_pos])


@dataclass
class MotionClip:
    name: str
    fps: float
    behavior_tag: str
    frames: list[ClipFrame]
    _feature_cache: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.frames)

    def as_array(self) -> np.ndarray:
        return np.stack([f.as_array() for f in self.frames])

    def nominal_speed(self) -> float:
        """Mean forward root velocity over the clip."""
        arr = self.as_array()
        return float((arr[-1, 0] - arr[0, 0]) * self.fps / (len(self.frames) - 1))


@dataclass(frozen=True)
class Transition:
    """A pair of consecutive feature vectors, optionally carrying the
    normalized command it was sampled under (locomotion references only)."""

    feat_t: np.ndarray
    feat_t1: np.ndarray
    condition: float | None = None


def validate_clip(clip: MotionClip, model: BipedModel | None = None) -> None:
    model = model or _default_model()
    if clip.fps <= 0:
        raise ClipError(f"clip {clip.name!r}: fps must be positive, got {clip.fps}")
    if clip.behavior_tag not in BEHAVIOR_TAGS:
        raise ClipError(f"clip {clip.name!r}: unknown behavior_tag {clip.behavior_tag!r}")
    if len(clip.frames) < 2:
        raise ClipError(f"clip {clip.name!r}: needs at least 2 frames, got {len(clip.frames)}")
    arr = clip.as_array()
    if not np.all(np.isfinite(arr)):
        raise ClipError(f"clip {clip.name!r}: non-finite values")
    if np.any(arr[:, 1] < 0):
        raise ClipError(f"clip {clip.name!r}: negative root height")
    joints = arr[:, 3:]
    low = np.tile(model.joint_low, 1)
    high = np.tile(model.joint_high, 1)
    if np.any(joints < low - 1e-9) or np.any(joints > high + 1e-9):
        bad = int(np.argmax(np.any((joints < low - 1e-9) | (joints > high + 1e-9), axis=1)))
        raise ClipError(f"clip {clip.name!r}: joint limits violated at frame {bad}")
    step = np.abs(np.diff(joints, axis=0))
    if np.any(step > CONTINUITY_BOUND):
        bad = int(np.argmax(np.any(step > CONTINUITY_BOUND, axis=1)))
        raise ClipError(
            f"clip {clip.name!r}: joint jump {step.max():.3f} rad exceeds "
            f"{CONTINUITY_BOUND} between frames {bad} and {bad + 1}"
        )


_MODEL: BipedModel | None = None


def _default_model() -> BipedModel:
    global _MODEL
    if _MODEL is None:
        _MODEL = BipedModel()
    return _MODEL


# ---------------------------------------------------------------------------
# procedural generators


@dataclass
class WalkClipConfig:
    fps: float = 50.0
    duration: float = 4.0
    gait_freq: float = 1.4  # Hz; snapped so one period is a whole frame count
    speed: float = 0.8  # m/s nominal forward speed
    hip_amp: float = 0.3
    knee_amp: float = 0.5
    ankle_amp: float = 0.1
    bounce: float = 0.01
    crouch: float = 0.015


@dataclass
class RunClipConfig:
    fps: float = 50.0
    duration: float = 4.0
    gait_freq: float = 2.6
    speed: float = 2.0
    hip_amp: float = 0.55
    knee_amp: float = 0.8
    ankle_amp: float = 0.15
    bounce: float = 0.02
    crouch: float = 0.06


@dataclass
class GetupClipConfig:
    fps: float = 50.0
    duration: float = 3.0


def _snap_freq(fps: float, freq: float) -> tuple[float, int]:
    """Snap gait frequency so one period spans an integer frame count."""
    frames_per_period = max(2, int(round(fps / freq)))
    return fps / frames_per_period, frames_per_period


def _gait_clip(cfg, name: str, tag: str, model: BipedModel) -> MotionClip:
    if cfg.fps <= 0 or cfg.duration <= 0:
        raise ClipError(f"{name}: fps and duration must be positive")
    freq, _ = _snap_freq(cfg.fps, cfg.gait_freq)
    n = int(round(cfg.fps * cfg.duration))
    hip0, knee0, ankle0 = model.q_default[3:6]
    stand = model.standing_height
    frames = []
    for i in range(n):
        t = i / cfg.fps
        phi = 2.0 * np.pi * freq * t
        joints = np.empty(N_JOINTS)
        for side, ph in ((0, phi), (1, phi + np.pi)):
            swing = np.sin(ph)
            lift = max(0.0, np.sin(ph + 0.4)) ** 2
            joints[3 * side + 0] = hip0 + cfg.hip_amp * swing
            joints[3 * side + 1] = knee0 + cfg.knee_amp * lift
            joints[3 * side + 2] = ankle0 + cfg.ankle_amp * np.sin(ph + 0.8)
        joints = np.clip(joints, model.joint_low, model.joint_high)
        frames.append(
            ClipFrame(
                root_x=cfg.speed * t,
                root_z=stand - cfg.crouch + cfg.bounce * np.cos(2.0 * phi),
                pitch=0.0,
                joint_pos=joints,
            )
        )
    clip = MotionClip(name=name, fps=cfg.fps, behavior_tag=tag, frames=frames)
    validate_clip(clip, model)
    return clip


def generate_walk_clip(cfg: WalkClipConfig | None = None, model: BipedModel | None = None) -> MotionClip:
    return _gait_clip(cfg or WalkClipConfig(), "walk", "walk", model or _default_model())


def generate_run_clip(cfg: RunClipConfig | None = None, model: BipedModel | None = None) -> MotionClip:
    return _gait_clip(cfg or RunClipConfig(), "run", "run", model or _default_model())


def generate_getup_clip(
    start: str, cfg: GetupClipConfig | None = None, model: BipedModel | None = None
) -> MotionClip:
    """Keyframed rise from lying to standing, PCHIP-interpolated (monotone
    between keyframes, so root height never dips)."""
    if start not in ("prone", "supine"):
        raise ClipError(f"get-up start must be 'prone' or 'supine', got {start!r}")
    cfg = cfg or GetupClipConfig()
    if cfg.fps <= 0 or cfg.duration <= 0:
        raise ClipError("getup: fps and duration must be positive")
    model = model or _default_model()
    sign = 1.0 if start == "prone" else -1.0
    stand = model.standing_height
    hip0, knee0, ankle0 = model.q_default[3:6]
    # keyframes: time, root_z, pitch, hip, knee, ankle; the first frame is
    # the settled lying pose (legs near default), so the tuck that begins a
    # real getup is part of the reference distribution
    keys = np.array(
        [
            [0.00, 0.10, sign * 1.85, hip0, knee0 + 0.05, ankle0],
            [0.25 * cfg.duration, 0.15, sign * 1.45, 1.20, 1.80, 0.20],
            [0.45 * cfg.duration, 0.30, sign * 0.90, 1.50, 2.10, 0.30],
            [0.70 * cfg.duration, 0.60 * stand, sign * 0.30, 1.00, 1.40, 0.30],
            [cfg.duration, stand, 0.0, hip0, knee0, ankle0],
        ]
    )
    interp = PchipInterpolator(keys[:, 0], keys[:, 1:], axis=0)
    n = int(round(cfg.fps * cfg.duration)) + 1
    frames = []
    for i in range(n):
        t = min(i / cfg.fps, cfg.duration)
        z, pitch, hip, knee, ankle = interp(t)
        joints = np.clip(
            np.array([hip, knee, ankle] * 2), model.joint_low, model.joint_high
        )
        frames.append(ClipFrame(root_x=0.0, root_z=float(z), pitch=float(pitch), joint_pos=joints))
    tag = "getup_prone" if start == "prone" else "getup_supine"
    clip = MotionClip(name=f"getup_{start}", fps=cfg.fps, behavior_tag=tag, frames=frames)
    validate_clip(clip, model)
    return clip


# ---------------------------------------------------------------------------
# on-disk format: a JSON document with name / fps / behavior_tag / frames


def save_clip(clip: MotionClip, path) -> None:
    validate_clip(clip)
    doc = {
        "name": clip.name,
        "fps": clip.fps,
        "behavior_tag": clip.behavior_tag,
        "frames": [[float(v) for v in f.as_array()] for f in clip.frames],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_clip(path) -> MotionClip:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ClipParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    for key in ("name", "fps", "behavior_tag", "frames"):
        if key not in doc:
            raise ClipParseError(f"{path}: missing field {key!r}")
    frames = []
    for i, row in enumerate(doc["frames"]):
        if len(row) != FRAME_WIDTH:
            raise ClipParseError(
                f"{path}: frame {i} has {len(row)} values, expected {FRAME_WIDTH}"
            )
        vals = np.asarray(row, dtype=float)
        frames.append(ClipFrame(float(vals[0]), float(vals[1]), float(vals[2]), vals[3:]))
    clip = MotionClip(
        name=str(doc["name"]), fps=float(doc["fps"]), behavior_tag=str(doc["behavior_tag"]),
        frames=frames,
    )
    validate_clip(clip)
    return clip


# ---------------------------------------------------------------------------
# AMP features


def features_from_state(model: BipedModel, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
    """AMP feature vector(s) from simulator coordinates; batched over any
    leading shape."""
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    out = np.empty(q.shape[:-1] + (FEATURE_DIM,))
    out[..., F_GRAV] = projected_gravity(q[..., 2])
    out[..., F_HEIGHT] = q[..., 1]
    out[..., F_ROOT_VEL] = qd[..., 0:2]
    out[..., F_PITCH_RATE] = qd[..., 2]
    out[..., F_JOINT_POS] = q[..., 3:9]
    out[..., F_JOINT_VEL] = qd[..., 3:9]
    out[..., F_FOOT_H] = foot_heights(model, q)
    return out


def clip_features(clip: MotionClip, model: BipedModel | None = None) -> np.ndarray:
    """Features for frames 0..len-2 (finite-difference velocities), cached."""
    if clip._feature_cache is not None:
        return clip._feature_cache
    model = model or _default_model()
    arr = clip.as_array()
    qd = (arr[1:] - arr[:-1]) * clip.fps
    feats = features_from_state(model, arr[:-1], qd)
    clip._feature_cache = feats
    return feats


def clip_feature(clip: MotionClip, frame_index: int, model: BipedModel | None = None) -> np.ndarray:
    if not 0 <= frame_index < len(clip.frames) - 1:
        raise IndexError(
            f"frame_index {frame_index} out of range [0, {len(clip.frames) - 1}) "
            f"for clip {clip.name!r}"
        )
    return clip_features(clip, model)[frame_index]


def reset_pool(clips, model: BipedModel | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Stacked (q, qd) rows from every frame of the given clips, velocities by
    forward finite differences (last frame gets zero velocity). Rows are in
    simulator coordinates and can seed episode resets directly."""
    model = model or _default_model()
    qs, qds = [], []
    for clip in clips:
        arr = clip.as_array()
        qd = np.zeros_like(arr)
        qd[:-1] = (arr[1:] - arr[:-1]) * clip.fps
        qs.append(arr)
        qds.append(qd)
    return np.concatenate(qs), np.concatenate(qds)


# ---------------------------------------------------------------------------
# transition sampling


def sample_transition(clip: MotionClip, rng: np.random.Generator) -> Transition:
    n = len(clip.frames)
    if n < 3:
        raise ClipError(f"clip {clip.name!r}: need at least 3 frames to sample a transition")
    feats = clip_features(clip)
    i = int(rng.integers(0, n - 2))
    return Transition(feat_t=feats[i], feat_t1=feats[i + 1])


def sample_reference_loco(
    walk: MotionClip, run: MotionClip, v_hat: float, rng: np.random.Generator
) -> Transition:
    """Walk/run mixture: run with probability v_hat, walk otherwise; the
    drawn transition carries the same v_hat as its condition."""
    if not 0.0 <= v_hat <= 1.0:
        raise ValueError(f"v_hat must be in [0, 1], got {v_hat}")
    clip = run if rng.random() < v_hat else walk
    t = sample_transition(clip, rng)
    return Transition(feat_t=t.feat_t, feat_t1=t.feat_t1, condition=float(v_hat))
