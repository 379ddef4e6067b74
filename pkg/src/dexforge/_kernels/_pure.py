"""Pure-numpy kernels: reference implementation of the hot loops.

Same call signatures as the compiled module (``_core``); which one you get is
decided in ``dexforge._kernels.__init__``.  Keep the arithmetic here boring
and explicit -- this is the oracle the compiled kernels are tested against.
"""

from __future__ import annotations

import numpy as np


def backend_name() -> str:
    return "pure"


def _rodrigues(axis: np.ndarray, angle: float) -> np.ndarray:
    x, y, z = axis
    c = np.cos(angle)
    s = np.sin(angle)
    t = 1.0 - c
    return np.array(
        [
            [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
            [x * y * t + z * s, c + y * y * t, y * z * t - x * s],
            [x * z * t - y * s, y * z * t + x * s, c + z * z * t],
        ]
    )


def fk_frames(parent, pre_rot, pre_trans, axis, q, order):
    """Joint frames in the hand base frame.

    Returns (rot (J,3,3), trans (J,3)).  ``order`` visits parents before
    children; ``parent[j] == -1`` means the joint hangs off the hand base.
    """
    nj = axis.shape[0]
    rot = np.zeros((nj, 3, 3))
    trans = np.zeros((nj, 3))
    for j in order:
        local = pre_rot[j] @ _rodrigues(axis[j], q[j])
        p = parent[j]
        if p < 0:
            rot[j] = local
            trans[j] = pre_trans[j]
        else:
            rot[j] = rot[p] @ local
            trans[j] = rot[p] @ pre_trans[j] + trans[p]
    return rot, trans


def fk_tips_jac(parent, pre_rot, pre_trans, axis, q, order, tip_parent, tip_trans, reach):
    """Fingertip positions and the raw position Jacobian, hand base frame.

    Returns (tips (M,3), jac (3M, J), rot, trans).  Column j of the tip-m
    block is axis_j^world x (tip_m - origin_j) when joint j is an ancestor of
    the fingertip, else zero.  Mimic folding is left to the caller.
    """
    rot, trans = fk_frames(parent, pre_rot, pre_trans, axis, q, order)
    m = tip_parent.shape[0]
    nj = axis.shape[0]
    tips = np.zeros((m, 3))
    jac = np.zeros((3 * m, nj))
    for i in range(m):
        p = tip_parent[i]
        if p < 0:
            tips[i] = tip_trans[i]
            continue
        tips[i] = rot[p] @ tip_trans[i] + trans[p]
        for j in range(nj):
            if not reach[i, j]:
                continue
            axis_w = rot[j] @ axis[j]
            jac[3 * i : 3 * i + 3, j] = np.cross(axis_w, tips[i] - trans[j])
    return tips, jac, rot, trans


def fps_select(pts: np.ndarray, n: int, first: int) -> np.ndarray:
    """Greedy farthest-point sampling on (N,3) float64 points.

    Returns int64 indices of the n selected points, starting from ``first``.
    Ties break to the lowest index (first occurrence of the max distance).
    """
    npts = pts.shape[0]
    out = np.empty(n, dtype=np.int64)
    out[0] = first
    dist = np.empty(npts)
    diff = pts - pts[first]
    np.einsum("ij,ij->i", diff, diff, out=dist)
    for k in range(1, n):
        pick = int(np.argmax(dist))
        out[k] = pick
        diff = pts - pts[pick]
        np.minimum(dist, np.einsum("ij,ij->i", diff, diff), out=dist)
    return out
