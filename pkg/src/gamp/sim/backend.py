"""Step-kernel selection: compiled Cython kernel when available, numpy
fallback otherwise. ``GAMP_FORCE_FALLBACK=1`` forces the fallback."""

from __future__ import annotations

import os

import numpy as np

from . import fallback
from .model import N_JOINTS, N_Q, BipedModel, SimState, StepInfo, fk

try:
    from . import _kernels  # type: ignore[attr-defined]

    HAVE_KERNELS = True
except ImportError:
    _kernels = None
    HAVE_KERNELS = False


def active_backend() -> str:
    if HAVE_KERNELS and os.environ.get("GAMP_FORCE_FALLBACK", "") != "1":
        return "cython"
    return "numpy"


def step_batch(
    model: BipedModel,
    q: np.ndarray,
    qd: np.ndarray,
    targets: np.ndarray,
    n_substeps: int,
    enable_contact: bool = True,
    enable_torque: bool = True,
    backend: str | None = None,
):
    """Dispatch to the selected kernel; see ``fallback.step_batch``."""
    which = backend or active_backend()
    if which == "cython":
        if not HAVE_KERNELS:
            raise RuntimeError("compiled kernel requested but not built")
        return _kernels.step_batch(
            model.pack(), q, qd, targets, n_substeps, enable_contact, enable_torque
        )
    return fallback.step_batch(model, q, qd, targets, n_substeps, enable_contact, enable_torque)


class IntegrationError(RuntimeError):
    """Physics produced a non-finite state."""

    def __init__(self, coordinate: int):
        self.coordinate = coordinate
        super().__init__(f"integration blow-up in generalized coordinate {coordinate}")


def step(
    model: BipedModel,
    state: SimState,
    action: np.ndarray,
    enable_contact: bool = True,
    enable_torque: bool = True,
    backend: str | None = None,
) -> tuple[SimState, StepInfo]:
    """One control step (dt_ctrl): clip and scale the action to joint
    targets around the default pose, run the physics substeps, advance the
    previous-action chain."""
    action = np.asarray(action, dtype=float)
    if action.shape != (N_JOINTS,):
        raise ValueError(f"action shape {action.shape}, expected ({N_JOINTS},)")
    if not np.all(np.isfinite(action)):
        raise ValueError("non-finite action")

    targets = model.q_default[3:] + model.action_scale * np.clip(action, -1.0, 1.0)
    q = state.q[None, :].copy()
    qd = state.qd[None, :].copy()
    tau, power, contact = step_batch(
        model,
        q,
        qd,
        targets[None, :],
        model.n_substeps,
        enable_contact=enable_contact,
        enable_torque=enable_torque,
        backend=backend,
    )
    for i in range(N_Q):
        if not (np.isfinite(q[0, i]) and np.isfinite(qd[0, i])):
            raise IntegrationError(i)

    new_state = SimState(
        q=q[0],
        qd=qd[0],
        time=state.time + model.dt_ctrl,
        prev_action=action.copy(),
        prev_prev_action=state.prev_action.copy(),
        command=state.command,
        foot_contact=contact[0],
    )
    return new_state, StepInfo(torques=tau[0], mean_power=float(power[0]), foot_contact=contact[0])
