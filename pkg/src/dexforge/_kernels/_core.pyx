# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: same contract as dexforge._kernels._pure.

Tight C loops for the FK / Jacobian evaluation inside the IK solver and for
farthest-point sampling.  The pure-numpy module is the reference; these must
agree with it to ~1e-12 (and exactly on selected indices).
"""

import numpy as np

from libc.math cimport cos, sin


def backend_name():
    return "compiled"


cdef inline void _rodrigues(double ax, double ay, double az, double angle,
                            double[:, ::1] out) nogil:
    cdef double c = cos(angle)
    cdef double s = sin(angle)
    cdef double t = 1.0 - c
    out[0, 0] = c + ax * ax * t
    out[0, 1] = ax * ay * t - az * s
    out[0, 2] = ax * az * t + ay * s
    out[1, 0] = ax * ay * t + az * s
    out[1, 1] = c + ay * ay * t
    out[1, 2] = ay * az * t - ax * s
    out[2, 0] = ax * az * t - ay * s
    out[2, 1] = ay * az * t + ax * s
    out[2, 2] = c + az * az * t


cdef void _fk_fill(int[::1] parent, double[:, :, ::1] pre_rot, double[:, ::1] pre_trans,
                   double[:, ::1] axis, double[::1] q, int[::1] order,
                   double[:, :, ::1] rot, double[:, ::1] trans,
                   double[:, ::1] loc, double[:, ::1] tmp) nogil:
    cdef Py_ssize_t k, j, p, r, c, i
    cdef double acc
    for k in range(order.shape[0]):
        j = order[k]
        _rodrigues(axis[j, 0], axis[j, 1], axis[j, 2], q[j], loc)
        p = parent[j]
        # tmp = pre_rot[j] @ loc
        for r in range(3):
            for c in range(3):
                acc = 0.0
                for i in range(3):
                    acc += pre_rot[j, r, i] * loc[i, c]
                tmp[r, c] = acc
        if p < 0:
            for r in range(3):
                for c in range(3):
                    rot[j, r, c] = tmp[r, c]
                trans[j, r] = pre_trans[j, r]
        else:
            # rot[j] = rot[p] @ tmp; trans[j] = rot[p] @ pre_trans[j] + trans[p]
            for r in range(3):
                for c in range(3):
                    acc = 0.0
                    for i in range(3):
                        acc += rot[p, r, i] * tmp[i, c]
                    rot[j, r, c] = acc
                acc = 0.0
                for i in range(3):
                    acc += rot[p, r, i] * pre_trans[j, i]
                trans[j, r] = acc + trans[p, r]


def fk_frames(parent, pre_rot, pre_trans, axis, q, order):
    """Joint frames in the hand base frame -> (rot (J,3,3), trans (J,3))."""
    cdef Py_ssize_t nj = axis.shape[0]
    rot = np.zeros((nj, 3, 3))
    trans = np.zeros((nj, 3))
    loc = np.empty((3, 3))
    tmp = np.empty((3, 3))
    _fk_fill(parent, pre_rot, pre_trans, axis, np.ascontiguousarray(q, dtype=np.float64),
             order, rot, trans, loc, tmp)
    return rot, trans


def fk_tips_jac(parent, pre_rot, pre_trans, axis, q, order, tip_parent, tip_trans, reach):
    """Fingertips + raw position Jacobian in the hand base frame.

    Returns (tips (M,3), jac (3M, J), rot, trans); see the pure backend for
    the column convention.
    """
    cdef Py_ssize_t nj = axis.shape[0]
    cdef Py_ssize_t m = tip_parent.shape[0]
    rot_arr = np.zeros((nj, 3, 3))
    trans_arr = np.zeros((nj, 3))
    loc = np.empty((3, 3))
    tmp = np.empty((3, 3))
    q_arr = np.ascontiguousarray(q, dtype=np.float64)
    _fk_fill(parent, pre_rot, pre_trans, axis, q_arr, order, rot_arr, trans_arr, loc, tmp)

    tips_arr = np.zeros((m, 3))
    jac_arr = np.zeros((3 * m, nj))
    cdef double[:, :, ::1] rot = rot_arr
    cdef double[:, ::1] trans = trans_arr
    cdef double[:, ::1] tips = tips_arr
    cdef double[:, ::1] jac = jac_arr
    cdef double[:, ::1] axis_v = axis
    cdef double[:, ::1] tip_trans_v = tip_trans
    cdef int[::1] tip_parent_v = tip_parent
    cdef unsigned char[:, ::1] reach_v = reach.view(np.uint8)
    cdef Py_ssize_t i, j, p, r, k
    cdef double awx, awy, awz, rx, ry, rz
    for i in range(m):
        p = tip_parent_v[i]
        if p < 0:
            for r in range(3):
                tips[i, r] = tip_trans_v[i, r]
            continue
        for r in range(3):
            tips[i, r] = (rot[p, r, 0] * tip_trans_v[i, 0]
                          + rot[p, r, 1] * tip_trans_v[i, 1]
                          + rot[p, r, 2] * tip_trans_v[i, 2]) + trans[p, r]
        for j in range(nj):
            if reach_v[i, j] == 0:
                continue
            awx = rot[j, 0, 0] * axis_v[j, 0] + rot[j, 0, 1] * axis_v[j, 1] + rot[j, 0, 2] * axis_v[j, 2]
            awy = rot[j, 1, 0] * axis_v[j, 0] + rot[j, 1, 1] * axis_v[j, 1] + rot[j, 1, 2] * axis_v[j, 2]
            awz = rot[j, 2, 0] * axis_v[j, 0] + rot[j, 2, 1] * axis_v[j, 1] + rot[j, 2, 2] * axis_v[j, 2]
            rx = tips[i, 0] - trans[j, 0]
            ry = tips[i, 1] - trans[j, 1]
            rz = tips[i, 2] - trans[j, 2]
            jac[3 * i + 0, j] = awy * rz - awz * ry
            jac[3 * i + 1, j] = awz * rx - awx * rz
            jac[3 * i + 2, j] = awx * ry - awy * rx
    return tips_arr, jac_arr, rot_arr, trans_arr


def fps_select(pts, n, first):
    """Greedy farthest-point sampling; ties break to the lowest index."""
    cdef double[:, ::1] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef Py_ssize_t npts = p.shape[0]
    cdef Py_ssize_t nsel = n
    out_arr = np.empty(nsel, dtype=np.int64)
    dist_arr = np.empty(npts, dtype=np.float64)
    cdef long long[::1] out = out_arr
    cdef double[::1] dist = dist_arr
    cdef Py_ssize_t i, k, pick
    cdef double dx, dy, dz, d, best
    cdef double cx, cy, cz
    out[0] = first
    cx = p[first, 0]
    cy = p[first, 1]
    cz = p[first, 2]
    with nogil:
        for i in range(npts):
            dx = p[i, 0] - cx
            dy = p[i, 1] - cy
            dz = p[i, 2] - cz
            dist[i] = dx * dx + dy * dy + dz * dz
        for k in range(1, nsel):
            pick = 0
            best = dist[0]
            for i in range(1, npts):
                if dist[i] > best:
                    best = dist[i]
                    pick = i
            out[k] = pick
            cx = p[pick, 0]
            cy = p[pick, 1]
            cz = p[pick, 2]
            for i in range(npts):
                dx = p[i, 0] - cx
                dy = p[i, 1] - cy
                dz = p[i, 2] - cz
                d = dx * dx + dy * dy + dz * dz
                if d < dist[i]:
                    dist[i] = d
    return out_arr
