# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled physics step kernel; semantics mirror ``fallback.step_batch``.

Constants arrive packed by ``BipedModel.pack()``:
  0 torso_len, 1 thigh_len, 2 shank_len, 3 ankle_height, 4 toe_fwd,
  5 heel_back, 6 torque_limit, 7 gravity, 8 contact_stiffness,
  9 contact_damping, 10 friction_mu, 11 friction_damping, 12 dt_phys,
  13 fd_step, 14:24 point masses, 24:33 inertia, 33:39 joint_low,
  39:45 joint_high, 45:51 kp, 51:57 kd, 57:66 q_default.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, fabs, isfinite, sin


cdef void _fk(const double* c, const double* q, double* px, double* pz) noexcept nogil:
    cdef double x = q[0], z = q[1], pitch = q[2]
    cdef double th_thigh, th_shank, th_foot, kx, kz, ax, az, sf, cf
    cdef int side, base, off
    px[0] = x + c[0] * sin(pitch)
    pz[0] = z + c[0] * cos(pitch)
    px[1] = x
    pz[1] = z
    for side in range(2):
        base = 3 + 3 * side
        off = 4 * side
        th_thigh = q[base] - pitch
        th_shank = th_thigh - q[base + 1]
        th_foot = th_shank + q[base + 2]
        kx = x + c[1] * sin(th_thigh)
        kz = z - c[1] * cos(th_thigh)
        ax = kx + c[2] * sin(th_shank)
        az = kz - c[2] * cos(th_shank)
        sf = sin(th_foot)
        cf = cos(th_foot)
        px[2 + off] = kx
        pz[2 + off] = kz
        px[3 + off] = ax
        pz[3 + off] = az
        px[4 + off] = ax - c[5] * cf + c[3] * sf
        pz[4 + off] = az - c[5] * sf - c[3] * cf
        px[5 + off] = ax + c[4] * cf + c[3] * sf
        pz[5 + off] = az + c[4] * sf - c[3] * cf


def step_batch(
    cnp.ndarray[double, ndim=1] packed,
    cnp.ndarray[double, ndim=2] q_arr,
    cnp.ndarray[double, ndim=2] qd_arr,
    cnp.ndarray[double, ndim=2] targets_arr,
    int n_substeps,
    bint enable_contact=True,
    bint enable_torque=True,
):
    """Advance n_substeps in place; returns (torques, mean power, contact)."""
    cdef int n = q_arr.shape[0]
    cdef cnp.ndarray[double, ndim=2] tau_out = np.zeros((n, 6))
    cdef cnp.ndarray[double, ndim=1] power = np.zeros(n)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2, cast=True] contact = np.zeros((n, 2), dtype=np.bool_)

    cdef double[:, ::1] q = np.ascontiguousarray(q_arr)
    cdef double[:, ::1] qd = np.ascontiguousarray(qd_arr)
    cdef double[:, ::1] targets = np.ascontiguousarray(targets_arr)
    cdef double[:, ::1] tau_view = tau_out
    cdef double[::1] power_view = power
    cdef cnp.uint8_t[:, ::1] contact_view = contact
    cdef const double* c = &packed[0]

    cdef double h = c[13], dt = c[12], grav = c[7]
    cdef double ks = c[8], cd = c[9], mu = c[10], cf_damp = c[11], tlim = c[6]

    cdef double qt[9]
    cdef double px[10]
    cdef double pz[10]
    cdef double pxm[10]
    cdef double pzm[10]
    cdef double jx[10][9]
    cdef double jz[10][9]
    cdef double force[9]
    cdef double tau[6]
    cdef double up, um, vz, vx, fn, ft, cap, pen, lo, hi
    cdef int e, s, i, j, p

    for e in range(n):
        for s in range(n_substeps):
            if enable_torque:
                for j in range(6):
                    tau[j] = c[45 + j] * (targets[e, j] - q[e, 3 + j]) - c[51 + j] * qd[e, 3 + j]
                    if tau[j] > tlim:
                        tau[j] = tlim
                    elif tau[j] < -tlim:
                        tau[j] = -tlim
                    power_view[e] += fabs(tau[j] * qd[e, 3 + j])
            else:
                for j in range(6):
                    tau[j] = 0.0

            for i in range(9):
                force[i] = 0.0
            for j in range(6):
                force[3 + j] = tau[j]

            # gravity generalized force and contact Jacobian from the same
            # central-difference sweep
            for i in range(9):
                qt[i] = q[e, i]
            for i in range(9):
                qt[i] = q[e, i] + h
                _fk(c, qt, px, pz)
                qt[i] = q[e, i] - h
                _fk(c, qt, pxm, pzm)
                qt[i] = q[e, i]
                up = 0.0
                um = 0.0
                for p in range(10):
                    up += c[14 + p] * pz[p]
                    um += c[14 + p] * pzm[p]
                    jx[p][i] = (px[p] - pxm[p]) / (2.0 * h)
                    jz[p][i] = (pz[p] - pzm[p]) / (2.0 * h)
                force[i] -= grav * (up - um) / (2.0 * h)

            if enable_contact:
                _fk(c, qt, px, pz)
                for p in range(10):
                    pen = -pz[p]
                    if pen > 0.0:
                        vz = 0.0
                        vx = 0.0
                        for i in range(9):
                            vz += jz[p][i] * qd[e, i]
                            vx += jx[p][i] * qd[e, i]
                        fn = ks * pen - cd * vz
                        if fn < 0.0:
                            fn = 0.0
                        cap = mu * fn
                        ft = -cf_damp * vx
                        if ft > cap:
                            ft = cap
                        elif ft < -cap:
                            ft = -cap
                        for i in range(9):
                            force[i] += jx[p][i] * ft + jz[p][i] * fn

            for i in range(9):
                qd[e, i] += dt * force[i] / c[24 + i]
                q[e, i] += dt * qd[e, i]

            for j in range(6):
                lo = c[33 + j]
                hi = c[39 + j]
                if q[e, 3 + j] < lo:
                    q[e, 3 + j] = lo
                    qd[e, 3 + j] = 0.0
                elif q[e, 3 + j] > hi:
                    q[e, 3 + j] = hi
                    qd[e, 3 + j] = 0.0

        for j in range(6):
            tau_view[e, j] = tau[j]
        power_view[e] /= n_substeps

        for i in range(9):
            qt[i] = q[e, i]
        _fk(c, qt, px, pz)
        contact_view[e, 0] = pz[4] < 0.0 or pz[5] < 0.0
        contact_view[e, 1] = pz[8] < 0.0 or pz[9] < 0.0

    # write back through the original (possibly non-contiguous) arrays
    q_arr[...] = np.asarray(q)
    qd_arr[...] = np.asarray(qd)
    return tau_out, power, contact
