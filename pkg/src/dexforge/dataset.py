"""Trajectory shards, motion downsampling, chunk targets, and the co-training mixer.

A shard is a directory:

    index.json    trajectory metadata + per-frame records + actions checksum
    actions.bin   proprio vectors then action vectors, 339 bytes each (see faas)
    clouds/       content-addressed DFPC pointcloud blobs (sha256 filenames)

Pointclouds are stored once and referenced by hash because H overlapping
chunks share them and they dominate shard size.  Round trips are bit-exact:
the float payloads are already float32 on the wire, and index.json is written
with sorted keys.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    CorruptShard,
    DimensionMismatch,
    InsufficientData,
    InvalidRate,
    ValidationError,
    VersionMismatch,
)
from .faas import ActionChunk, FaasVector, WIRE_BYTES, encode_state, rebase_chunk
from .geometry import Pose
from .pointcloud import PointCloud

SHARD_VERSION = 1
SOURCES = ("human", "robot")


@dataclass
class Frame:
    t: int
    instruction: str
    proprio: FaasVector  # absolute wrist + current joint state
    cloud: PointCloud | None = None
    cloud_ref: str | None = None  # sha256 of the stored blob
    converged: bool = True


@dataclass
class Trajectory:
    id: str
    hand_id: str
    side: str
    source: str  # "human" | "robot"
    fps: float
    frames: list[Frame]
    actions: list[FaasVector]  # same-length table of per-frame action vectors
    valid: bool = True
    segmentation: tuple[int, int] | None = None  # [start, end) in the parent recording
    wrist_frame: str = "wrist"

    def __post_init__(self) -> None:
        if self.source not in SOURCES:
            raise ValidationError(f"trajectory source must be one of {SOURCES}, got {self.source!r}")
        if self.fps <= 0:
            raise ValidationError(f"fps must be positive, got {self.fps}")
        if len(self.actions) != len(self.frames):
            raise ValidationError(
                f"{len(self.actions)} actions for {len(self.frames)} frames"
            )
        ts = [f.t for f in self.frames]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValidationError(f"frame indices must be strictly increasing, got {ts}")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def convergence_rate(self) -> float:
        if not self.frames:
            return 0.0
        return float(np.mean([f.converged for f in self.frames]))


def write_trajectory(traj: Trajectory, shard_dir) -> Path:
    """Write one trajectory as a shard directory; returns the directory path."""
    if not traj.frames:
        raise ValidationError(f"trajectory '{traj.id}' has no frames")
    shard = Path(shard_dir)
    (shard / "clouds").mkdir(parents=True, exist_ok=True)
    payload = b"".join(f.proprio.to_bytes() for f in traj.frames)
    payload += b"".join(a.to_bytes() for a in traj.actions)
    (shard / "actions.bin").write_bytes(payload)

    frames_doc = []
    for f in traj.frames:
        ref = f.cloud_ref
        if f.cloud is not None:
            blob = f.cloud.to_bytes()
            ref = hashlib.sha256(blob).hexdigest()
            blob_path = shard / "clouds" / f"{ref}.dfpc"
            if not blob_path.exists():
                blob_path.write_bytes(blob)
        frames_doc.append(
            {"t": f.t, "instruction": f.instruction, "cloud_ref": ref, "converged": f.converged}
        )
    index = {
        "version": SHARD_VERSION,
        "id": traj.id,
        "hand_id": traj.hand_id,
        "side": traj.side,
        "source": traj.source,
        "fps": traj.fps,
        "valid": traj.valid,
        "segmentation": list(traj.segmentation) if traj.segmentation else None,
        "wrist_frame": traj.wrist_frame,
        "sha256_actions": hashlib.sha256(payload).hexdigest(),
        "frames": frames_doc,
    }
    (shard / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    return shard


def read_trajectory(shard_dir) -> Trajectory:
    """Load a shard; verifies the actions checksum and every cloud reference."""
    shard = Path(shard_dir)
    index_path = shard / "index.json"
    if not index_path.exists():
        raise CorruptShard(f"{shard}: missing index.json")
    try:
        index = json.loads(index_path.read_text())
    except json.JSONDecodeError as exc:
        raise CorruptShard(f"{shard}: unreadable index.json: {exc}") from exc
    version = index.get("version")
    if version != SHARD_VERSION:
        raise VersionMismatch(f"{shard}: shard version {version}, expected {SHARD_VERSION}")
    try:
        payload = (shard / "actions.bin").read_bytes()
    except OSError as exc:
        raise CorruptShard(f"{shard}: missing actions.bin") from exc
    if hashlib.sha256(payload).hexdigest() != index["sha256_actions"]:
        raise CorruptShard(f"{shard}: actions.bin checksum mismatch")
    n = len(index["frames"])
    if len(payload) != 2 * n * WIRE_BYTES:
        raise CorruptShard(
            f"{shard}: actions.bin holds {len(payload)} bytes, expected {2 * n * WIRE_BYTES}"
        )
    frames: list[Frame] = []
    actions: list[FaasVector] = []
    for i, fdoc in enumerate(index["frames"]):
        proprio = FaasVector.from_bytes(payload[i * WIRE_BYTES : (i + 1) * WIRE_BYTES])
        cloud = None
        ref = fdoc.get("cloud_ref")
        if ref:
            blob_path = shard / "clouds" / f"{ref}.dfpc"
            if not blob_path.exists():
                raise CorruptShard(f"{shard}: missing cloud blob {ref}")
            blob = blob_path.read_bytes()
            if hashlib.sha256(blob).hexdigest() != ref:
                raise CorruptShard(f"{shard}: cloud blob {ref} fails its content hash")
            cloud = PointCloud.from_bytes(blob)
        frames.append(
            Frame(
                t=int(fdoc["t"]),
                instruction=str(fdoc.get("instruction", "")),
                proprio=proprio,
                cloud=cloud,
                cloud_ref=ref,
                converged=bool(fdoc.get("converged", True)),
            )
        )
    for i in range(n):
        actions.append(
            FaasVector.from_bytes(payload[(n + i) * WIRE_BYTES : (n + i + 1) * WIRE_BYTES])
        )
    seg = index.get("segmentation")
    return Trajectory(
        id=str(index["id"]),
        hand_id=str(index["hand_id"]),
        side=str(index["side"]),
        source=str(index["source"]),
        fps=float(index["fps"]),
        frames=frames,
        actions=actions,
        valid=bool(index.get("valid", True)),
        segmentation=None if seg is None else (int(seg[0]), int(seg[1])),
        wrist_frame=str(index.get("wrist_frame", "wrist")),
    )


def downsample_motion(traj: Trajectory, target_fps: float) -> Trajectory:
    """Uniform stride selection to a slower rate; frames re-indexed from 0.

    Keeps source frames floor(k * stride + 0.5) for k = 0, 1, ... while in
    range, stride = fps / target_fps.
    """
    if target_fps <= 0:
        raise InvalidRate(f"target fps must be positive, got {target_fps}")
    if target_fps > traj.fps:
        raise InvalidRate(f"target fps {target_fps} exceeds source fps {traj.fps}")
    stride = traj.fps / target_fps
    n = len(traj.frames)
    picks: list[int] = []
    k = 0
    while True:
        idx = int(np.floor(k * stride + 0.5))
        if idx >= n:
            break
        picks.append(idx)
        k += 1
    frames = [replace(traj.frames[i], t=j) for j, i in enumerate(picks)]
    actions = [traj.actions[i] for i in picks]
    return replace(traj, fps=target_fps, frames=frames, actions=actions)


@dataclass
class ChunkTarget:
    """Training target for one frame: H action steps, tail-padded if needed."""

    chunk: ActionChunk
    pad_mask: np.ndarray  # (H,) bool, True where the step is a repeated pad


def build_chunks(traj: Trajectory, horizon: int) -> list[ChunkTarget]:
    """Per-frame H-step chunks over the action table.

    Frame t covers actions t..t+H-1; past the end the last action repeats and
    the pad mask flags it.  Wrist blocks are rewritten relative to each
    chunk's first step (joint slots stay absolute commands).
    """
    if horizon < 1:
        raise ValidationError(f"chunk horizon must be >= 1, got {horizon}")
    out: list[ChunkTarget] = []
    n = len(traj.actions)
    for t in range(n):
        steps = traj.actions[t : t + horizon]
        pad = np.zeros(horizon, dtype=bool)
        if len(steps) < horizon:
            pad[len(steps) :] = True
            steps = steps + [steps[-1]] * (horizon - len(steps))
        out.append(ChunkTarget(rebase_chunk(steps, traj.side), pad))
    return out


@dataclass(frozen=True)
class MixSpec:
    human_count: int
    robot_count: int
    human_weight: float = 1.0
    robot_weight: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.human_count < 0 or self.robot_count < 0:
            raise ValidationError("mix counts must be >= 0")
        if self.human_count + self.robot_count < 1:
            raise ValidationError("mix must include at least one trajectory")
        if self.human_weight < 0 or self.robot_weight < 0:
            raise ValidationError("mix weights must be >= 0")


class BatchStream:
    """Infinite, seeded batch iterator over an h+r trajectory pool.

    Each epoch is one weighted random permutation (sampling without
    replacement) of the pool; batches never cross an epoch boundary, so the
    final batch of an epoch may be short.  ``histograms`` records the
    human/robot counts of every completed epoch (they equal the pool makeup
    by construction -- kept for reporting).
    """

    def __init__(self, human_set, robot_set, spec: MixSpec, batch_size: int):
        if batch_size < 1:
            raise ValidationError(f"batch size must be >= 1, got {batch_size}")
        human_set = list(human_set)
        robot_set = list(robot_set)
        if len(human_set) < spec.human_count:
            raise InsufficientData(
                f"need {spec.human_count} human trajectories, have {len(human_set)}"
            )
        if len(robot_set) < spec.robot_count:
            raise InsufficientData(
                f"need {spec.robot_count} robot trajectories, have {len(robot_set)}"
            )
        self.spec = spec
        self.batch_size = batch_size
        self._items = human_set[: spec.human_count] + robot_set[: spec.robot_count]
        self._weights = np.array(
            [spec.human_weight] * spec.human_count + [spec.robot_weight] * spec.robot_count
        )
        if self._weights.sum() == 0:
            raise ValidationError("at least one mix weight must be positive")
        self._rng = np.random.default_rng(spec.seed)
        self._queue: list = []
        self.histograms: list[dict[str, int]] = []

    def _new_epoch(self) -> None:
        n = len(self._items)
        remaining = np.arange(n)
        weights = self._weights.copy()
        order = []
        for _ in range(n):
            p = weights[remaining]
            total = p.sum()
            if total <= 0:  # only zero-weight items left; keep deterministic order
                order.extend(remaining.tolist())
                break
            pick = self._rng.choice(remaining.shape[0], p=p / total)
            order.append(int(remaining[pick]))
            remaining = np.delete(remaining, pick)
        epoch = [self._items[i] for i in order]
        hist = {"human": 0, "robot": 0}
        for item in epoch:
            hist[item.source] += 1
        self.histograms.append(hist)
        self._queue = [
            epoch[i : i + self.batch_size] for i in range(0, len(epoch), self.batch_size)
        ]

    def __iter__(self) -> "BatchStream":
        return self

    def __next__(self) -> list:
        if not self._queue:
            self._new_epoch()
        return self._queue.pop(0)


def mix_batches(human_set, robot_set, spec: MixSpec, batch_size: int) -> BatchStream:
    """Reproducible co-training batch stream (see BatchStream)."""
    return BatchStream(human_set, robot_set, spec, batch_size)


@dataclass
class FilterReport:
    kept: list[Trajectory]
    dropped: list[tuple[str, str]]  # (trajectory id, reason)


def filter_invalid(
    trajs, min_convergence: float = 1.0, min_frames: int = 1
) -> FilterReport:
    """Drop trajectories failing the convergence-rate or length thresholds."""
    kept: list[Trajectory] = []
    dropped: list[tuple[str, str]] = []
    for traj in trajs:
        if not traj.valid:
            dropped.append((traj.id, "flagged invalid"))
            continue
        if len(traj) < min_frames:
            dropped.append((traj.id, f"length {len(traj)} < {min_frames}"))
            continue
        rate = traj.convergence_rate
        if rate < min_convergence:
            dropped.append((traj.id, f"convergence {rate:.0%} < {min_convergence:.0%}"))
            continue
        kept.append(traj)
    return FilterReport(kept, dropped)


def trajectory_from_retarget(
    traj_id: str,
    model,
    results,
    hand_poses,
    offset: Pose | None = None,
    clouds=None,
    instruction: str = "",
    fps: float = 30.0,
    source: str = "human",
) -> Trajectory:
    """Package retargeting output as a storable trajectory.

    ``results`` are per-frame IkResults and ``hand_poses`` the captured wrist
    poses; the stored wrist is hand_pose * offset (the solver's pinned base).
    The action table equals the per-frame retargeted states.
    """
    results = list(results)
    hand_poses = list(hand_poses)
    if len(results) != len(hand_poses):
        raise DimensionMismatch(f"{len(results)} results vs {len(hand_poses)} hand poses")
    clouds = list(clouds) if clouds is not None else [None] * len(results)
    if len(clouds) != len(results):
        raise DimensionMismatch(f"{len(clouds)} clouds vs {len(results)} results")
    frames: list[Frame] = []
    actions: list[FaasVector] = []
    for t, (res, pose, cloud) in enumerate(zip(results, hand_poses, clouds)):
        wrist = pose.compose(offset) if offset is not None else pose
        vec = encode_state(model, model.side, wrist, res.q)
        frames.append(
            Frame(t=t, instruction=instruction, proprio=vec, cloud=cloud, converged=res.converged)
        )
        actions.append(vec)
    return Trajectory(
        id=traj_id,
        hand_id=model.name,
        side=model.side,
        source=source,
        fps=fps,
        frames=frames,
        actions=actions,
    )
