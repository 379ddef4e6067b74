"""Forward kinematics, mimic coupling, and fingertip Jacobians.

Joint values ``q`` are radians over the model's full DoF set in file order.
Hand-frame kinematics come from the kernel backend; the caller-supplied
``world_dummy`` (hand base pose captured at the start of a solve) and
``offset`` (calibration transform) are applied on top as one rigid transform
``B = world_dummy * offset``, so fingertips land at ``B.apply(tips_hand)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionMismatch
from .geometry import Pose
from .handmodel import HandModel

LIMIT_SLACK = 1e-9


@dataclass
class MimicResult:
    q: np.ndarray
    clamped: tuple[str, ...]


@dataclass
class FkResult:
    fingertips: np.ndarray  # (M, 3) world frame
    link_poses: dict[str, Pose]
    out_of_limit: tuple[str, ...]


def _check_q(model: HandModel, q) -> np.ndarray:
    arr = np.asarray(q, dtype=float)
    if arr.shape != (model.full_dof,):
        raise DimensionMismatch(
            f"expected q of shape ({model.full_dof},) for hand '{model.name}', got {arr.shape}"
        )
    return arr


def apply_mimic(model: HandModel, q) -> MimicResult:
    """Clamp to limits and enforce q_slave = k * q_master + c exactly.

    When the coupled slave value would leave the slave's own limits, the
    master is pulled back so the pair stays feasible and exactly coupled;
    every joint whose value changed is reported in ``clamped``.
    """
    kin = model.kin
    out = _check_q(model, q).copy()
    clamped: list[str] = []
    for i in kin.active_idx:
        lo, hi = kin.lower[i], kin.upper[i]
        v = min(max(out[i], lo), hi)
        if v != out[i]:
            clamped.append(model.joints[i].name)
            out[i] = v
    slaves = [s for s in range(kin.full_dof) if kin.mimic_master[s] >= 0]
    for s in slaves:  # first pull masters into every slave's feasible interval
        m, k, c = kin.mimic_master[s], kin.mimic_k[s], kin.mimic_c[s]
        if k == 0.0:
            continue
        a = (kin.lower[s] - c) / k
        b = (kin.upper[s] - c) / k
        lo, hi = (a, b) if a <= b else (b, a)
        v = min(max(out[m], lo), hi)
        if v != out[m]:
            clamped.append(model.joints[m].name)
            out[m] = v
    for s in slaves:
        m, k, c = kin.mimic_master[s], kin.mimic_k[s], kin.mimic_c[s]
        value = k * out[m] + c
        feasible = min(max(value, kin.lower[s]), kin.upper[s])
        if out[s] != value:
            clamped.append(model.joints[s].name)
        out[s] = value if value == feasible else feasible
    return MimicResult(out, tuple(dict.fromkeys(clamped)))


def _base_pose(world_dummy: Pose | None, offset: Pose | None) -> Pose:
    base = world_dummy if world_dummy is not None else Pose.identity()
    if offset is not None:
        base = base.compose(offset)
    return base


def _mimic_consistent(kin, q: np.ndarray) -> np.ndarray:
    out = q.copy()
    slave = kin.mimic_master >= 0
    out[slave] = kin.mimic_k[slave] * q[kin.mimic_master[slave]] + kin.mimic_c[slave]
    return out


def fold_mimic_columns(jac: np.ndarray, kin) -> np.ndarray:
    """Fold slave columns into their masters: d(tip)/d(master) += k * d(tip)/d(slave)."""
    out = jac.copy()
    for s in range(kin.full_dof):
        m = kin.mimic_master[s]
        if m >= 0:
            out[:, m] += kin.mimic_k[s] * out[:, s]
            out[:, s] = 0.0
    return out


def forward_kinematics(
    model: HandModel, q, world_dummy: Pose | None = None, offset: Pose | None = None
) -> FkResult:
    """World-frame fingertips and link poses at q (mimic slaves recomputed).

    Joints more than 1e-9 outside their limits are reported in
    ``out_of_limit``; the pose is still evaluated at the given values.
    """
    kin = model.kin
    q_arr = _mimic_consistent(kin, _check_q(model, q))
    over = (q_arr < kin.lower - LIMIT_SLACK) | (q_arr > kin.upper + LIMIT_SLACK)
    base = _base_pose(world_dummy, offset)
    rot, trans = _kernels.fk_frames(
        kin.parent_joint, kin.pre_rot, kin.pre_trans, kin.axis, q_arr, kin.topo_order
    )
    poses: dict[str, Pose] = {}
    for i, lname in enumerate(kin.link_names):
        p = kin.link_parent_joint[i]
        if p < 0:
            local = Pose(kin.link_rot[i], kin.link_trans[i])
        else:
            local = Pose(rot[p] @ kin.link_rot[i], rot[p] @ kin.link_trans[i] + trans[p])
        poses[lname] = base.compose(local)
    tips = np.array([poses[t].trans for t in model.fingertips])
    names = tuple(model.joints[i].name for i in np.nonzero(over)[0])
    return FkResult(tips, poses, names)


def fingertip_positions(
    model: HandModel, q, world_dummy: Pose | None = None, offset: Pose | None = None
) -> np.ndarray:
    """(M, 3) world-frame fingertip positions; cheaper than full FK."""
    kin = model.kin
    q_arr = _mimic_consistent(kin, _check_q(model, q))
    tips, _, _, _ = _kernels.fk_tips_jac(
        kin.parent_joint, kin.pre_rot, kin.pre_trans, kin.axis, q_arr,
        kin.topo_order, kin.tip_parent, kin.tip_trans, kin.reach,
    )
    return _base_pose(world_dummy, offset).apply(tips)


def fingertip_jacobian(
    model: HandModel, q, world_dummy: Pose | None = None, offset: Pose | None = None
) -> np.ndarray:
    """(3M, full_dof) world-frame position Jacobian with mimic columns folded.

    Rows stack fingertips in model order (x, y, z per tip).  Matches central
    finite differences of mimic-consistent FK: perturbing a master joint also
    moves its slaves, so slave columns are folded into the master and zeroed.
    """
    kin = model.kin
    q_arr = _mimic_consistent(kin, _check_q(model, q))
    _, jac, _, _ = _kernels.fk_tips_jac(
        kin.parent_joint, kin.pre_rot, kin.pre_trans, kin.axis, q_arr,
        kin.topo_order, kin.tip_parent, kin.tip_trans, kin.reach,
    )
    base = _base_pose(world_dummy, offset)
    m = kin.tip_parent.shape[0]
    jac = np.einsum("ab,mbj->maj", base.rot, jac.reshape(m, 3, -1)).reshape(3 * m, -1)
    return fold_mimic_columns(jac, kin)
