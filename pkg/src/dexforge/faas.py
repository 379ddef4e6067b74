"""The 82-dimensional unified action vector shared by every hand.

Layout: [0..8] left wrist, [9..17] right wrist, [18..49] left-hand joint
slots, [50..81] right-hand joint slots.  A wrist block is 9 numbers: the
rotation's local x-axis, local y-axis (the continuous 6d encoding), then the
translation.  Joint slots hold raw radians; which slots a hand populates is
authored in its ``faas_map`` (thumb 0-4, index 5-9, ..., extras 27-31), so
functionally similar joints of different hands land in the same slot.  The
82-bit validity mask records exactly which entries are populated -- decoding
into a hand whose slots are not all populated fills the gaps with mid-range
defaults, which is the whole cross-hand transfer mechanism.

Chunks of H consecutive vectors encode wrist blocks RELATIVE to the chunk's
first frame (step 0 is the identity); joint slots stay absolute.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, DimensionMismatch, InvalidRotation
from .geometry import Pose
from .handmodel import N_SLOTS, HandModel
from .kinematics import apply_mimic

VECTOR_LEN = 82
WRIST_BASE = {"left": 0, "right": 9}
JOINT_BASE = {"left": 18, "right": 50}
WIRE_BYTES = VECTOR_LEN * 4 + (VECTOR_LEN + 7) // 8  # f32 values + LSB-first mask bits
DEFAULT_HORIZON = 32


def encode_rotation_6d(rot: np.ndarray) -> np.ndarray:
    """First two columns of R, concatenated: (x-axis, y-axis)."""
    rot = np.asarray(rot, dtype=float)
    if rot.shape != (3, 3):
        raise InvalidRotation(f"rotation must be 3x3, got {rot.shape}")
    err = np.abs(rot.T @ rot - np.eye(3)).max()
    if err > 1e-6 or abs(np.linalg.det(rot) - 1.0) > 1e-6:
        raise InvalidRotation(f"matrix is not a rotation (orthonormality error {err:.2e})")
    return np.concatenate([rot[:, 0], rot[:, 1]])


def decode_rotation_6d(v) -> np.ndarray:
    """Gram-Schmidt the two encoded axes back into a proper rotation."""
    v = np.asarray(v, dtype=float)
    if v.shape != (6,):
        raise DimensionMismatch(f"expected 6 scalars, got shape {v.shape}")
    a, b = v[:3], v[3:]
    na = np.linalg.norm(a)
    if na <= 1e-9:
        raise DegenerateInput("first axis vector has near-zero norm")
    x = a / na
    b_orth = b - (b @ x) * x
    nb = np.linalg.norm(b_orth)
    if nb <= 1e-9:
        raise DegenerateInput("second axis vector is parallel to the first")
    y = b_orth / nb
    z = np.cross(x, y)
    return np.column_stack([x, y, z])


def _encode_wrist(pose: Pose) -> np.ndarray:
    return np.concatenate([encode_rotation_6d(pose.rot), pose.trans])


def _decode_wrist(block: np.ndarray) -> Pose:
    return Pose(decode_rotation_6d(block[:6]), block[6:9])


@dataclass(frozen=True)
class FaasVector:
    """82 values + 82 validity bits; unpopulated entries are stored as 0."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.shape != (VECTOR_LEN,) or mask.shape != (VECTOR_LEN,):
            raise DimensionMismatch(
                f"expected {VECTOR_LEN}-element values and mask, got "
                f"{values.shape} and {mask.shape}"
            )
        values = values.copy()
        mask = mask.copy()
        values[~mask] = 0.0
        values.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    def to_bytes(self) -> bytes:
        """339-byte wire form: little-endian float32 values + LSB-first mask bits."""
        return self.values.astype("<f4").tobytes() + np.packbits(
            self.mask, bitorder="little"
        ).tobytes()

    @staticmethod
    def from_bytes(raw: bytes) -> "FaasVector":
        if len(raw) != WIRE_BYTES:
            raise DimensionMismatch(f"expected {WIRE_BYTES} bytes, got {len(raw)}")
        values = np.frombuffer(raw[: VECTOR_LEN * 4], dtype="<f4").astype(float)
        bits = np.unpackbits(
            np.frombuffer(raw[VECTOR_LEN * 4 :], dtype=np.uint8), bitorder="little"
        )[:VECTOR_LEN].astype(bool)
        return FaasVector(values, bits)

    @staticmethod
    def empty() -> "FaasVector":
        return FaasVector(np.zeros(VECTOR_LEN), np.zeros(VECTOR_LEN, dtype=bool))


def _check_side(side: str) -> str:
    if side not in WRIST_BASE:
        raise DimensionMismatch(f"side must be 'left' or 'right', got {side!r}")
    return side


def encode_state(model: HandModel, side: str, wrist: Pose, q) -> FaasVector:
    """Absolute wrist + this hand's joint values dropped into their slots.

    Mimic coupling (and limit clamping) is applied first, so slave slots carry
    k * q_master + c and the populated values are always feasible.
    """
    _check_side(side)
    q_arr = apply_mimic(model, q).q
    values = np.zeros(VECTOR_LEN)
    mask = np.zeros(VECTOR_LEN, dtype=bool)
    wb = WRIST_BASE[side]
    values[wb : wb + 9] = _encode_wrist(wrist)
    mask[wb : wb + 9] = True
    jb = JOINT_BASE[side]
    for j, slot in enumerate(model.kin.slot):
        values[jb + slot] = q_arr[j]
        mask[jb + slot] = True
    return FaasVector(values, mask)


@dataclass
class DecodedState:
    wrist: Pose
    q: np.ndarray
    defaulted: tuple[str, ...]  # joints (or "wrist") filled from rest defaults
    clamped: tuple[str, ...]


def decode_state(vec: FaasVector, model: HandModel, side: str) -> DecodedState:
    """Read a vector into a (possibly different) hand.

    Joints whose slot is populated take the stored value; the rest fall back
    to mid-range and are reported in ``defaulted`` (this is cross-hand
    transfer -- gaps are expected, never fatal).  Mimic slaves are re-derived
    from their master's decoded value and everything is clamped to limits.
    """
    _check_side(side)
    kin = model.kin
    jb = JOINT_BASE[side]
    q = kin.mid_q.copy()
    defaulted: list[str] = []
    for j, slot in enumerate(kin.slot):
        if vec.mask[jb + slot]:
            q[j] = vec.values[jb + slot]
        else:
            defaulted.append(model.joints[j].name)
    wb = WRIST_BASE[side]
    if vec.mask[wb : wb + 9].all():
        wrist = _decode_wrist(vec.values[wb : wb + 9])
    else:
        wrist = Pose.identity()
        defaulted.insert(0, "wrist")
    res = apply_mimic(model, q)
    return DecodedState(wrist, res.q, tuple(defaulted), res.clamped)


@dataclass(frozen=True)
class ActionChunk:
    """H consecutive vectors sharing one mask; wrist blocks relative to step 0."""

    actions: tuple[FaasVector, ...]

    def __post_init__(self) -> None:
        if not self.actions:
            raise DimensionMismatch("action chunk must have H >= 1 steps")
        m0 = self.actions[0].mask
        for a in self.actions[1:]:
            if not np.array_equal(a.mask, m0):
                raise DimensionMismatch("all vectors in a chunk must share one mask")
        object.__setattr__(self, "actions", tuple(self.actions))

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def mask(self) -> np.ndarray:
        return self.actions[0].mask


def encode_chunk(wrists, joint_states, model: HandModel, side: str) -> ActionChunk:
    """Chunk of H steps: wrist t stores wrist_0^-1 * wrist_t, joints absolute."""
    wrists = list(wrists)
    joint_states = list(joint_states)
    if len(wrists) != len(joint_states):
        raise DimensionMismatch(f"{len(wrists)} wrists but {len(joint_states)} joint states")
    if not wrists:
        raise DimensionMismatch("action chunk must have H >= 1 steps")
    inv0 = wrists[0].inverse()
    return ActionChunk(
        tuple(
            encode_state(model, side, inv0.compose(w), q)
            for w, q in zip(wrists, joint_states)
        )
    )


def rebase_chunk(vectors, side: str) -> ActionChunk:
    """Absolute-wrist vectors -> a chunk whose wrists are relative to step 0.

    Works purely at the vector level (no hand model needed): the side's wrist
    block is rewritten as delta_t = wrist_0^-1 * wrist_t, joint slots and the
    mask are untouched.  An unpopulated wrist block stays unpopulated.
    """
    _check_side(side)
    vectors = list(vectors)
    if not vectors:
        raise DimensionMismatch("action chunk must have H >= 1 steps")
    wb = WRIST_BASE[side]
    if not vectors[0].mask[wb : wb + 9].all():
        return ActionChunk(tuple(vectors))
    inv0 = _decode_wrist(vectors[0].values[wb : wb + 9]).inverse()
    out = []
    for vec in vectors:
        values = vec.values.copy()
        values[wb : wb + 9] = _encode_wrist(
            inv0.compose(_decode_wrist(vec.values[wb : wb + 9]))
        )
        out.append(FaasVector(values, vec.mask))
    return ActionChunk(tuple(out))


@dataclass
class DecodedChunk:
    wrists: list[Pose]
    joints: list[np.ndarray]
    defaulted: tuple[str, ...]
    clamped: tuple[str, ...]


def decode_chunk(chunk: ActionChunk, base: Pose, model: HandModel, side: str) -> DecodedChunk:
    """Inverse of encode_chunk: wrist_t = base * delta_t; gaps default per decode_state."""
    wrists: list[Pose] = []
    joints: list[np.ndarray] = []
    defaulted: tuple[str, ...] = ()
    clamped: set[str] = set()
    for i, vec in enumerate(chunk.actions):
        st = decode_state(vec, model, side)
        wrists.append(base.compose(st.wrist))
        joints.append(st.q)
        if i == 0:
            defaulted = st.defaulted
        clamped.update(st.clamped)
    return DecodedChunk(wrists, joints, defaulted, tuple(sorted(clamped)))
