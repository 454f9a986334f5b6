"""Pure-numpy physics step, batched over environments.

Semantically identical to the compiled kernel in ``_kernels.pyx``; this is
the import-time fallback and the reference for the backend-equivalence test.

Per physics substep (semi-implicit Euler on diagonal inertias):
  * PD torques on the 6 joints, clamped to the torque limit;
  * gravity generalized force as -dU/dq by central finite differences of
    the point-mass potential energy;
  * spring-damper ground contact at every body point below z=0, with
    Coulomb-capped viscous tangential friction, mapped through the
    finite-difference point-Jacobian transpose;
  * joint-limit clamping with velocity zeroing at the stop.
"""

from __future__ import annotations

import numpy as np

from .model import (
    FOOT_POINTS_L,
    FOOT_POINTS_R,
    N_JOINTS,
    N_Q,
    BipedModel,
    fk,
)


def step_batch(
    model: BipedModel,
    q: np.ndarray,
    qd: np.ndarray,
    targets: np.ndarray,
    n_substeps: int,
    enable_contact: bool = True,
    enable_torque: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Advance ``n_substeps`` physics substeps in place.

    q: (N, 9), qd: (N, 9), targets: (N, 6) absolute joint-position targets.
    Returns (last-substep torques (N, 6), mean |tau.qd| power (N,),
    foot contact flags (N, 2)).
    """
    n = q.shape[0]
    h = model.fd_step
    dt = model.dt_phys
    grav = model.gravity
    masses = model.point_masses
    inv_inertia = 1.0 / model.inertia

    tau = np.zeros((n, N_JOINTS))
    power = np.zeros(n)

    # perturbation table: config 0 is the base, then +/-h per coordinate
    eye = np.eye(N_Q)
    offsets = np.zeros((1 + 2 * N_Q, N_Q))
    offsets[1::2] = h * eye
    offsets[2::2] = -h * eye

    for _ in range(n_substeps):
        if enable_torque:
            tau = model.kp * (targets - q[:, 3:]) - model.kd * qd[:, 3:]
            np.clip(tau, -model.torque_limit, model.torque_limit, out=tau)
            power += np.sum(np.abs(tau * qd[:, 3:]), axis=1)
        else:
            tau = np.zeros((n, N_JOINTS))

        force = np.zeros((n, N_Q))
        force[:, 3:] = tau

        configs = q[:, None, :] + offsets[None, :, :]
        pts = fk(model, configs)  # (N, 19, 10, 2)
        # potential energy per config and its gradient
        u = grav * np.einsum("ncp,p->nc", pts[..., 1], masses)
        force -= (u[:, 1::2] - u[:, 2::2]) / (2.0 * h)

        if enable_contact:
            base = pts[:, 0]  # (N, 10, 2)
            jac = (pts[:, 1::2] - pts[:, 2::2]).transpose(0, 2, 3, 1) / (2.0 * h)
            vel = np.einsum("npci,ni->npc", jac, qd)
            pen = -base[..., 1]
            below = pen > 0.0
            fn = np.where(
                below,
                np.maximum(
                    model.contact_stiffness * pen - model.contact_damping * vel[..., 1], 0.0
                ),
                0.0,
            )
            cap = model.friction_mu * fn
            ft = np.clip(-model.friction_damping * vel[..., 0], -cap, cap)
            ft = np.where(below, ft, 0.0)
            f = np.stack([ft, fn], axis=-1)
            force += np.einsum("npci,npc->ni", jac, f)

        qd += dt * force * inv_inertia
        q += dt * qd

        # joint limits with velocity zeroing at the stop
        joints = q[:, 3:]
        low_hit = joints < model.joint_low
        high_hit = joints > model.joint_high
        np.clip(joints, model.joint_low, model.joint_high, out=joints)
        qd[:, 3:][low_hit | high_hit] = 0.0

    final_pts = fk(model, q)
    contact = np.stack(
        [
            np.any(final_pts[:, FOOT_POINTS_L, 1] < 0.0, axis=1),
            np.any(final_pts[:, FOOT_POINTS_R, 1] < 0.0, axis=1),
        ],
        axis=1,
    )
    return tau, power / n_substeps, contact
