from .backend import HAVE_KERNELS, IntegrationError, active_backend, step, step_batch
from .model import (
    N_JOINTS,
    N_POINTS,
    N_Q,
    OBS_DIM,
    OBS_FRAME_DIM,
    OBS_HISTORY,
    RESET_MODES,
    BipedModel,
    SimState,
    StepInfo,
    assemble_observation,
    fk,
    foot_heights,
    make_obs_frame,
    pd_torque,
    projected_gravity,
    reset,
)

__all__ = [
    "HAVE_KERNELS",
    "IntegrationError",
    "N_JOINTS",
    "N_POINTS",
    "N_Q",
    "OBS_DIM",
    "OBS_FRAME_DIM",
    "OBS_HISTORY",
    "RESET_MODES",
    "BipedModel",
    "SimState",
    "StepInfo",
    "active_backend",
    "assemble_observation",
    "fk",
    "foot_heights",
    "make_obs_frame",
    "pd_torque",
    "projected_gravity",
    "reset",
    "step",
    "step_batch",
]
