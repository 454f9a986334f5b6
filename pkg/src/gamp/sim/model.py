"""Planar (sagittal) biped: kinematics, PD actuation, state containers.

Generalized coordinates, in order:
    q[0] root x (m), q[1] root z (m), q[2] pitch (rad, 0 = upright,
    positive = leaning forward), q[3:6] left hip/knee/ankle,
    q[6:9] right hip/knee/ankle.

The dynamics use a diagonal effective inertia per coordinate; gravity and
contact enter as generalized forces through finite differences of the
kinematics (see the step kernels).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_Q = 9
N_JOINTS = 6

# fk point order (world xz pairs)
PT_TORSO_TOP = 0
PT_HIP = 1
PT_KNEE_L = 2
PT_ANKLE_L = 3
PT_HEEL_L = 4
PT_TOE_L = 5
PT_KNEE_R = 6
PT_ANKLE_R = 7
PT_HEEL_R = 8
PT_TOE_R = 9
N_POINTS = 10

FOOT_POINTS_L = (PT_HEEL_L, PT_TOE_L)
FOOT_POINTS_R = (PT_HEEL_R, PT_TOE_R)


def _default_q() -> np.ndarray:
    # slight crouch with a flat foot: hip +0.2, knee +0.4, ankle +0.2 puts the
    # cumulative foot angle at exactly 0 (knee slightly forward of the hip)
    hip, knee, ankle = 0.2, 0.4, 0.2
    stand = 0.9 * np.cos(0.2) + 0.05
    return np.array([0.0, stand, 0.0, hip, knee, ankle, hip, knee, ankle])


@dataclass(frozen=True)
class BipedModel:
    """Geometric and dynamic constants of the planar biped."""

    torso_len: float = 0.4
    thigh_len: float = 0.45
    shank_len: float = 0.45
    ankle_height: float = 0.05
    toe_fwd: float = 0.18
    heel_back: float = 0.14
    # point masses at the fk points, kg; total 12
    point_masses: np.ndarray = field(
        default_factory=lambda: np.array([4.0, 2.0, 0.8, 1.2, 0.5, 0.5, 0.8, 1.2, 0.5, 0.5])
    )
    # effective diagonal inertia per generalized coordinate
    inertia: np.ndarray = field(
        default_factory=lambda: np.array([12.0, 12.0, 1.5, 0.3, 0.2, 0.1, 0.3, 0.2, 0.1])
    )
    joint_low: np.ndarray = field(
        default_factory=lambda: np.array([-1.8, -0.3, -1.2, -1.8, -0.3, -1.2])
    )
    joint_high: np.ndarray = field(
        default_factory=lambda: np.array([1.8, 2.4, 1.2, 1.8, 2.4, 1.2])
    )
    kp: np.ndarray = field(default_factory=lambda: np.array([100.0, 100.0, 60.0] * 2))
    kd: np.ndarray = field(default_factory=lambda: np.array([10.0, 10.0, 5.0] * 2))
    torque_limit: float = 80.0
    gravity: float = 9.81
    contact_stiffness: float = 2e4
    contact_damping: float = 500.0
    friction_mu: float = 1.0
    friction_damping: float = 500.0
    dt_phys: float = 0.002
    dt_ctrl: float = 0.02
    action_scale: float = 0.5
    fd_step: float = 1e-6
    q_default: np.ndarray = field(default_factory=_default_q)

    def __post_init__(self):
        ratio = self.dt_ctrl / self.dt_phys
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("dt_ctrl must be an integer multiple of dt_phys")
        for name in ("torso_len", "thigh_len", "shank_len", "gravity", "contact_stiffness"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def n_substeps(self) -> int:
        return int(round(self.dt_ctrl / self.dt_phys))

    @property
    def standing_height(self) -> float:
        return float(self.q_default[1])

    def pack(self) -> np.ndarray:
        """Flat constant vector consumed by the compiled step kernel."""
        return np.concatenate(
            [
                [
                    self.torso_len,
                    self.thigh_len,
                    self.shank_len,
                    self.ankle_height,
                    self.toe_fwd,
                    self.heel_back,
                    self.torque_limit,
                    self.gravity,
                    self.contact_stiffness,
                    self.contact_damping,
                    self.friction_mu,
                    self.friction_damping,
                    self.dt_phys,
                    self.fd_step,
                ],
                self.point_masses,
                self.inertia,
                self.joint_low,
                self.joint_high,
                self.kp,
                self.kd,
                self.q_default,
            ]
        )


def fk(model: BipedModel, q: np.ndarray) -> np.ndarray:
    """World positions of the body points, shape (..., 10, 2).

    Accepts any leading batch shape on ``q`` (..., 9).
    """
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != N_Q:
        raise ValueError(f"q has trailing dim {q.shape[-1]}, expected {N_Q}")
    x, z, pitch = q[..., 0], q[..., 1], q[..., 2]
    pts = np.empty(q.shape[:-1] + (N_POINTS, 2))
    pts[..., PT_TORSO_TOP, 0] = x + model.torso_len * np.sin(pitch)
    pts[..., PT_TORSO_TOP, 1] = z + model.torso_len * np.cos(pitch)
    pts[..., PT_HIP, 0] = x
    pts[..., PT_HIP, 1] = z
    # Segment angles below the hip are measured counterclockwise from
    # straight down; a rigid forward lean (pitch > 0, clockwise) therefore
    # enters with a minus sign. Positive joint angles: hip swings the thigh
    # forward, knee folds the shank backward, ankle lifts the toes.
    for side, base in ((0, 3), (1, 6)):
        th_thigh = q[..., base] - pitch
        th_shank = th_thigh - q[..., base + 1]
        th_foot = th_shank + q[..., base + 2]
        off = 4 * side
        kx = x + model.thigh_len * np.sin(th_thigh)
        kz = z - model.thigh_len * np.cos(th_thigh)
        ax = kx + model.shank_len * np.sin(th_shank)
        az = kz - model.shank_len * np.cos(th_shank)
        sf, cf = np.sin(th_foot), np.cos(th_foot)
        pts[..., PT_KNEE_L + off, 0] = kx
        pts[..., PT_KNEE_L + off, 1] = kz
        pts[..., PT_ANKLE_L + off, 0] = ax
        pts[..., PT_ANKLE_L + off, 1] = az
        # foot frame: "forward" (cf, sf), "down" (sf, -cf)
        pts[..., PT_HEEL_L + off, 0] = ax - model.heel_back * cf + model.ankle_height * sf
        pts[..., PT_HEEL_L + off, 1] = az - model.heel_back * sf - model.ankle_height * cf
        pts[..., PT_TOE_L + off, 0] = ax + model.toe_fwd * cf + model.ankle_height * sf
        pts[..., PT_TOE_L + off, 1] = az + model.toe_fwd * sf - model.ankle_height * cf
    return pts


def foot_heights(model: BipedModel, q: np.ndarray) -> np.ndarray:
    """Per-leg foot height (min of heel/toe), shape (..., 2)."""
    pts = fk(model, q)
    left = np.minimum(pts[..., PT_HEEL_L, 1], pts[..., PT_TOE_L, 1])
    right = np.minimum(pts[..., PT_HEEL_R, 1], pts[..., PT_TOE_R, 1])
    return np.stack([left, right], axis=-1)


def projected_gravity(pitch) -> np.ndarray:
    """Gravity direction in the body frame: (sin pitch, -cos pitch)."""
    pitch = np.asarray(pitch, dtype=float)
    return np.stack([np.sin(pitch), -np.cos(pitch)], axis=-1)


def pd_torque(
    model: BipedModel, target: np.ndarray, q_joints: np.ndarray, qd_joints: np.ndarray
) -> np.ndarray:
    """Clamped PD torque toward joint-position targets."""
    tau = model.kp * (target - q_joints) - model.kd * qd_joints
    return np.clip(tau, -model.torque_limit, model.torque_limit)


@dataclass
class SimState:
    q: np.ndarray
    qd: np.ndarray
    time: float = 0.0
    prev_action: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    prev_prev_action: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    command: float = 0.0
    foot_contact: np.ndarray = field(default_factory=lambda: np.zeros(2, dtype=bool))

    def copy(self) -> "SimState":
        return SimState(
            self.q.copy(),
            self.qd.copy(),
            self.time,
            self.prev_action.copy(),
            self.prev_prev_action.copy(),
            self.command,
            self.foot_contact.copy(),
        )


@dataclass
class StepInfo:
    torques: np.ndarray
    mean_power: float
    foot_contact: np.ndarray


RESET_MODES = ("upright", "prone", "supine")


def reset(model: BipedModel, mode: str, v_cmd: float, rng: np.random.Generator) -> SimState:
    """Initial state for an episode: upright with small pose noise, or lying."""
    if mode not in RESET_MODES:
        raise ValueError(f"unknown reset mode {mode!r}")
    q = model.q_default.copy()
    if mode == "upright":
        q[2] += rng.uniform(-0.1, 0.1)
        q[3:] += rng.uniform(-0.05, 0.05, size=N_JOINTS)
    else:
        sign = 1.0 if mode == "prone" else -1.0
        q[2] = sign * 1.45 + rng.uniform(-0.1, 0.1)
        q[1] = 0.15
    return SimState(q=q, qd=np.zeros(N_Q), command=float(v_cmd))


OBS_FRAME_DIM = 22
OBS_HISTORY = 4
OBS_DIM = OBS_FRAME_DIM * OBS_HISTORY


def make_obs_frame(model: BipedModel, state: SimState) -> np.ndarray:
    """Single 22-value observation frame in the fixed order:
    pitch rate (1), projected gravity (2), command (1), joint positions
    relative to default (6), joint velocities (6), previous action (6)."""
    frame = np.empty(OBS_FRAME_DIM)
    frame[0] = state.qd[2]
    frame[1:3] = projected_gravity(state.q[2])
    frame[3] = state.command
    frame[4:10] = state.q[3:] - model.q_default[3:]
    frame[10:16] = state.qd[3:]
    frame[16:22] = state.prev_action
    return frame


def assemble_observation(history) -> np.ndarray:
    """Concatenate 4 observation frames, oldest first."""
    frames = list(history)
    if len(frames) != OBS_HISTORY:
        raise ValueError(f"need {OBS_HISTORY} frames, got {len(frames)}")
    for f in frames:
        if np.shape(f) != (OBS_FRAME_DIM,):
            raise ValueError(f"frame shape {np.shape(f)}, expected ({OBS_FRAME_DIM},)")
    return np.concatenate(frames)
