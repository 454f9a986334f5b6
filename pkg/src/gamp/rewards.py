"""Composite task reward: velocity tracking, smoothness, posture, energy and
fall penalties, each returned separately for logging."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sim import BipedModel

_STANDING = BipedModel().standing_height


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]. The torso can tumble past pi while lying,
    so raw pitch is not a usable posture error."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


@dataclass(frozen=True)
class RewardWeights:
    w_v: float = 1.0
    w_s: float = 0.3
    w_p: float = 0.3
    w_e: float = 0.02
    w_f: float = 1.0
    sigma_v: float = 0.25
    sigma_p: float = 0.4
    energy_scale: float = 0.01
    h_fall: float = 0.35 * _STANDING
    # multipliers on w_v and w_s while the transition is recovery-gated;
    # 1.0 keeps every term always on, 0.0 stops rewarding stillness while down
    rec_cmd_scale: float = 1.0
    rec_smooth_scale: float = 1.0

    def __post_init__(self):
        for name in (
            "w_v", "w_s", "w_p", "w_e", "w_f", "energy_scale", "h_fall",
            "rec_cmd_scale", "rec_smooth_scale",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("sigma_v", "sigma_p"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def compute_task_reward(
    state,
    action: np.ndarray,
    torques: np.ndarray,
    weights: RewardWeights,
    fallen: bool = False,
) -> tuple[float, dict]:
    """Reward for one control step plus its term breakdown.

    The breakdown's weighted terms (penalties negated) sum to the total.
    ``fallen`` marks recovery-gated transitions, where the cmd and smooth
    weights are multiplied by the corresponding rec scales.
    """
    v_err = state.qd[0] - state.command
    r_cmd = float(np.exp(-(v_err**2) / weights.sigma_v**2))
    da = np.asarray(action, float) - state.prev_action
    r_smooth = float(np.exp(-float(da @ da)))
    pitch = float(wrap_angle(state.q[2]))
    r_posture = float(np.exp(-(pitch**2) / weights.sigma_p**2))
    c_energy = float(np.sum(np.abs(torques * state.qd[3:])) * weights.energy_scale)
    c_fall = 1.0 if state.q[1] < weights.h_fall else 0.0
    w_v = weights.w_v * (weights.rec_cmd_scale if fallen else 1.0)
    w_s = weights.w_s * (weights.rec_smooth_scale if fallen else 1.0)
    total = (
        w_v * r_cmd
        + w_s * r_smooth
        + weights.w_p * r_posture
        - weights.w_e * c_energy
        - weights.w_f * c_fall
    )
    breakdown = {
        "r_cmd": r_cmd,
        "r_smooth": r_smooth,
        "r_posture": r_posture,
        "c_energy": c_energy,
        "c_fall": c_fall,
        "total": total,
    }
    return total, breakdown
