"""Fingertip retargeting: damped least-squares IK over the active joints.

The hand base is pinned for the duration of a solve: fingertip positions are
``world_dummy * offset * fk(q)`` where ``world_dummy`` is the captured hand
pose for the frame and ``offset`` the adjustable calibration transform.  The
solver minimizes the stacked fingertip position residual; mimic coupling and
joint limits are enforced after every update step, and the best iterate seen
is what gets returned, so a solve never ends worse than it started.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, ParseError, SingularUpdate, ValidationError
from .geometry import Pose
from .handmodel import HandModel
from .kinematics import apply_mimic, fold_mimic_columns

__all__ = [
    "IkConfig",
    "IkResult",
    "TrajectoryResult",
    "CalibrationProfile",
    "solve_ik",
    "mimic_correction_loop",
    "retarget_frame",
    "retarget_trajectory",
    "align_capture_frames",
]


@dataclass(frozen=True)
class IkConfig:
    max_iters: int = 200
    damping: float = 1e-3  # Levenberg damping added to J^T J
    tol: float = 1e-3  # converged when residual RMS (meters) drops to this
    step_scale: float = 1.0
    mimic_iters: int = 5  # correction-loop cycles
    joint_weight: float | None = None  # pull toward mid-range rest pose


@dataclass
class IkResult:
    q: np.ndarray
    residual: np.ndarray  # (M,) per-fingertip error norms, meters
    rms: float
    converged: bool
    iters_used: int
    clamped_joints: tuple[str, ...]


@dataclass
class TrajectoryResult:
    results: list[IkResult]
    converged_flags: np.ndarray  # (T,) bool
    convergence_rate: float


def _check_targets(model: HandModel, targets) -> np.ndarray:
    arr = np.asarray(targets, dtype=float)
    want = (model.n_fingertips, 3)
    if arr.shape != want:
        raise DimensionMismatch(
            f"expected targets of shape {want} for hand '{model.name}', got {arr.shape}"
        )
    return arr


def _eval(kin, base: Pose, q: np.ndarray, targets: np.ndarray):
    """Residual pieces at q: per-tip errors, rms, and the active-column Jacobian."""
    tips, jac, _, _ = _kernels.fk_tips_jac(
        kin.parent_joint, kin.pre_rot, kin.pre_trans, kin.axis, q,
        kin.topo_order, kin.tip_parent, kin.tip_trans, kin.reach,
    )
    err = targets - (tips @ base.rot.T + base.trans)
    per_tip = np.linalg.norm(err, axis=1)
    rms = float(np.sqrt(np.mean(per_tip**2)))
    m = tips.shape[0]
    jac_w = np.einsum("ab,mbj->maj", base.rot, jac.reshape(m, 3, -1)).reshape(3 * m, -1)
    jac_w = fold_mimic_columns(jac_w, kin)[:, kin.active_idx]
    return err.ravel(), per_tip, rms, jac_w


def solve_ik(
    model: HandModel,
    targets,
    world_dummy: Pose | None = None,
    offset: Pose | None = None,
    q_init=None,
    config: IkConfig = IkConfig(),
) -> IkResult:
    """Damped least-squares IK: dq = (J^T J + λI)^-1 J^T e over active joints.

    Limits are clamped and mimic slaves re-derived after every step, so each
    iterate is feasible; the returned q is the best (lowest-rms) iterate.
    Raises SingularUpdate if a step goes non-finite (λ too small).
    """
    kin = model.kin
    targets = _check_targets(model, targets)
    base = world_dummy if world_dummy is not None else Pose.identity()
    if offset is not None:
        base = base.compose(offset)
    q0 = np.asarray(q_init, dtype=float) if q_init is not None else kin.mid_q
    if q0.shape != (kin.full_dof,):
        raise DimensionMismatch(f"q_init shape {q0.shape}, expected ({kin.full_dof},)")
    mim = apply_mimic(model, q0)
    q = mim.q
    clamped = set(mim.clamped)

    rest = kin.mid_q[kin.active_idx]
    weight = None
    if config.joint_weight is not None:
        weight = np.broadcast_to(np.asarray(config.joint_weight, dtype=float), rest.shape)

    best_q, best_per_tip, best_rms, best_clamped = q, None, np.inf, tuple(clamped)
    iters = 0
    converged = False
    for it in range(config.max_iters + 1):
        err, per_tip, rms, jac = _eval(kin, base, q, targets)
        if rms < best_rms:
            best_q, best_per_tip, best_rms = q, per_tip, rms
            best_clamped = tuple(sorted(clamped))
        if rms <= config.tol:
            converged = True
            break
        if it == config.max_iters:
            break
        iters += 1
        na = jac.shape[1]
        lhs = jac.T @ jac + config.damping * np.eye(na)
        rhs = jac.T @ err
        if weight is not None:
            lhs[np.diag_indices(na)] += weight
            rhs += weight * (rest - q[kin.active_idx])
        try:
            dq = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularUpdate(
                f"singular IK system at iteration {it} (damping={config.damping})"
            ) from exc
        if not np.all(np.isfinite(dq)):
            raise SingularUpdate(
                f"non-finite IK update at iteration {it} (damping={config.damping})"
            )
        q = q.copy()
        q[kin.active_idx] += config.step_scale * dq
        mim = apply_mimic(model, q)
        q = mim.q
        clamped.update(mim.clamped)
    return IkResult(
        q=best_q,
        residual=best_per_tip,
        rms=best_rms,
        converged=converged,
        iters_used=iters,
        clamped_joints=best_clamped,
    )


def mimic_correction_loop(
    model: HandModel,
    targets,
    world_dummy: Pose | None,
    offset: Pose | None,
    start: IkResult,
    config: IkConfig = IkConfig(),
) -> IkResult:
    """Alternate exact mimic projection with short re-solves of the free joints.

    Runs up to ``config.mimic_iters`` cycles, stopping early once the rms
    stops moving by more than tol/10.  For a hand without mimic joints this
    is a no-op that reports one iteration.  The returned q satisfies the
    coupling exactly and is never worse than ``start``.
    """
    kin = model.kin
    if not np.any(kin.mimic_master >= 0):
        return replace(start, iters_used=1)
    short = replace(config, max_iters=max(1, config.max_iters // 8))
    best = start
    prev_rms = start.rms
    cycles = 0
    for _ in range(config.mimic_iters):
        cycles += 1
        q = apply_mimic(model, best.q).q
        res = solve_ik(model, targets, world_dummy, offset, q_init=q, config=short)
        if res.rms < best.rms:
            best = res
        if abs(prev_rms - res.rms) < config.tol / 10.0:
            break
        prev_rms = res.rms
    return replace(best, iters_used=cycles, converged=best.rms <= config.tol)


def retarget_frame(
    model: HandModel,
    targets,
    hand_pose: Pose | None = None,
    offset: Pose | None = None,
    q_prev=None,
    config: IkConfig = IkConfig(),
) -> IkResult:
    """One capture frame: solve from q_prev (or mid-range), then mimic correction."""
    first = solve_ik(model, targets, hand_pose, offset, q_init=q_prev, config=config)
    final = mimic_correction_loop(model, targets, hand_pose, offset, first, config)
    return replace(final, iters_used=first.iters_used + final.iters_used)


def retarget_trajectory(
    model: HandModel,
    targets_seq,
    hand_poses,
    offset: Pose | None = None,
    config: IkConfig = IkConfig(),
    q0=None,
) -> TrajectoryResult:
    """Retarget a whole capture, warm-starting each frame from the previous q."""
    targets_seq = list(targets_seq)
    hand_poses = list(hand_poses)
    if len(targets_seq) != len(hand_poses):
        raise DimensionMismatch(
            f"{len(targets_seq)} target frames but {len(hand_poses)} hand poses"
        )
    results: list[IkResult] = []
    q_prev = q0
    for targets, pose in zip(targets_seq, hand_poses):
        res = retarget_frame(model, targets, pose, offset, q_prev=q_prev, config=config)
        results.append(res)
        q_prev = res.q
    flags = np.array([r.converged for r in results], dtype=bool)
    rate = float(flags.mean()) if results else 0.0
    return TrajectoryResult(results, flags, rate)


def align_capture_frames(frames, extrinsic: Pose) -> list[np.ndarray]:
    """Map capture-frame points into the shared world frame: p_world = extrinsic * p."""
    return [extrinsic.apply(np.asarray(f, dtype=float)) for f in frames]


@dataclass(frozen=True)
class CalibrationProfile:
    """Saved per-(dataset, hand) offset so a tuning session can be reproduced."""

    dataset_id: str
    hand_id: str
    xyz: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rpy: tuple[float, float, float] = (0.0, 0.0, 0.0)
    notes: str = ""

    @property
    def offset(self) -> Pose:
        return Pose.from_xyz_rpy(self.xyz, self.rpy)

    def to_json(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "hand_id": self.hand_id,
            "offset": {"xyz": list(self.xyz), "rpy": list(self.rpy)},
            "notes": self.notes,
        }

    @staticmethod
    def from_json(doc: dict) -> "CalibrationProfile":
        for key in ("dataset_id", "hand_id", "offset"):
            if key not in doc:
                raise ValidationError(f"profile: missing required key '{key}'")
        off = doc["offset"]
        xyz = tuple(float(v) for v in off.get("xyz", (0, 0, 0)))
        rpy = tuple(float(v) for v in off.get("rpy", (0, 0, 0)))
        if len(xyz) != 3 or len(rpy) != 3:
            raise ValidationError("profile: offset xyz/rpy must be 3-vectors")
        return CalibrationProfile(
            dataset_id=str(doc["dataset_id"]),
            hand_id=str(doc["hand_id"]),
            xyz=xyz,
            rpy=rpy,
            notes=str(doc.get("notes", "")),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")

    @staticmethod
    def load(path) -> "CalibrationProfile":
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ParseError(f"cannot read profile: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid profile JSON: {exc}") from exc
        return CalibrationProfile.from_json(doc)
