"""Interactive retargeting sessions: the human-in-the-loop calibration stage.

A session holds one recording (fingertip targets + hand poses + optional
scene clouds per frame) and one hand model, exposes the six degrees of
freedom of the calibration offset (tx, ty, tz, roll, pitch, yaw), re-solves
the current frame on every adjustment, and persists accepted offsets as
CalibrationProfiles.

Determinism contract: sessions are single-writer and every mutating call is
appended to a call log; replaying that log against a fresh session reproduces
results and saved profiles bit-exactly.  Per-frame solve results are cached
until the offset changes, so stepping away and back shows the identical
numbers.

Recording files are JSON:

    {"name": ..., "fps": 30.0, "side": "right", "wrist_frame": "wrist",
     "frames": [{"targets": [[x,y,z], ...],
                 "hand_pose": {"xyz": [...], "rpy": [...]},
                 "cloud": "<base64 DFPC blob>"  (optional)}, ...]}
"""

from __future__ import annotations

import base64
import json
import uuid
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DexforgeError, DimensionMismatch, ParseError, ValidationError
from .geometry import Pose, wrap_angle
from .handmodel import HandModel, load_hand
from .pointcloud import PointCloud, downsample_fps, sample_hand_surface
from .retarget import (
    CalibrationProfile,
    IkConfig,
    IkResult,
    retarget_frame,
    retarget_trajectory,
)

INTERACTIVE_CONFIG = IkConfig(max_iters=50)  # bounded budget keeps sliders responsive


@dataclass
class RecordingFrame:
    targets: np.ndarray  # (M, 3) world-frame fingertip targets
    hand_pose: Pose  # captured wrist/base pose for the dummy-base pin
    cloud: PointCloud | None = None


@dataclass
class Recording:
    name: str
    fps: float
    side: str
    frames: list[RecordingFrame]
    wrist_frame: str = "wrist"

    def __len__(self) -> int:
        return len(self.frames)


def load_recording(path) -> Recording:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read recording: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid recording JSON: {exc}") from exc
    return parse_recording(doc)


def parse_recording(doc: dict) -> Recording:
    for key in ("name", "fps", "side", "frames"):
        if key not in doc:
            raise ValidationError(f"recording: missing required key '{key}'")
    if doc["side"] not in ("left", "right"):
        raise ValidationError(f"recording side must be 'left' or 'right', got {doc['side']!r}")
    frames: list[RecordingFrame] = []
    for i, fdoc in enumerate(doc["frames"]):
        if "targets" not in fdoc or "hand_pose" not in fdoc:
            raise ValidationError(f"recording frame {i}: needs 'targets' and 'hand_pose'")
        targets = np.asarray(fdoc["targets"], dtype=float)
        if targets.ndim != 2 or targets.shape[1] != 3:
            raise ValidationError(f"recording frame {i}: targets must be (M, 3)")
        hp = fdoc["hand_pose"]
        pose = Pose.from_xyz_rpy(hp.get("xyz", (0, 0, 0)), hp.get("rpy", (0, 0, 0)))
        cloud = None
        if fdoc.get("cloud"):
            cloud = PointCloud.from_bytes(base64.b64decode(fdoc["cloud"]))
        frames.append(RecordingFrame(targets, pose, cloud))
    if not frames:
        raise ValidationError("recording has no frames")
    return Recording(
        name=str(doc["name"]),
        fps=float(doc["fps"]),
        side=str(doc["side"]),
        frames=frames,
        wrist_frame=str(doc.get("wrist_frame", "wrist")),
    )


def save_recording(rec: Recording, path) -> None:
    frames = []
    for f in rec.frames:
        xyz, rpy = f.hand_pose.to_xyz_rpy()
        fdoc: dict = {
            "targets": [list(row) for row in f.targets.tolist()],
            "hand_pose": {"xyz": list(xyz), "rpy": list(rpy)},
        }
        if f.cloud is not None:
            fdoc["cloud"] = base64.b64encode(f.cloud.to_bytes()).decode()
        frames.append(fdoc)
    doc = {
        "name": rec.name,
        "fps": rec.fps,
        "side": rec.side,
        "wrist_frame": rec.wrist_frame,
        "frames": frames,
    }
    Path(path).write_text(json.dumps(doc) + "\n")


class Session:
    """Single-operator tuning session over one recording + hand model."""

    def __init__(
        self,
        recording: Recording,
        model: HandModel,
        profile: CalibrationProfile | None = None,
        config: IkConfig = INTERACTIVE_CONFIG,
        session_id: str | None = None,
        scene_cap: int = 4096,
        hand_cap: int = 2048,
        sample_density: float = 200000.0,
    ):
        m = recording.frames[0].targets.shape[0]
        if m != model.n_fingertips:
            raise DimensionMismatch(
                f"recording has {m} targets per frame but hand '{model.name}' has "
                f"{model.n_fingertips} fingertips"
            )
        self.id = session_id or uuid.uuid4().hex[:12]
        self.recording = recording
        self.model = model
        self.config = config
        self.scene_cap = scene_cap
        self.hand_cap = hand_cap
        self.sample_density = sample_density
        self.cursor = 0
        self.dirty = False
        self.notes = ""
        if profile is not None:
            self.offset6 = np.array([*profile.xyz, *map(wrap_angle, profile.rpy)])
        else:
            self.offset6 = np.zeros(6)
        self.call_log: list[dict] = []
        self._cache: dict[int, IkResult] = {}
        self.last_result: IkResult | None = None
        self.last_result = self._solve_frame(0)

    # -- internals ---------------------------------------------------------

    @property
    def offset_pose(self) -> Pose:
        return Pose.from_xyz_rpy(self.offset6[:3], self.offset6[3:])

    def _solve_frame(self, idx: int, q_init=None) -> IkResult:
        if idx in self._cache:
            return self._cache[idx]
        frame = self.recording.frames[idx]
        if q_init is None and self.last_result is not None:
            q_init = self.last_result.q
        res = retarget_frame(
            self.model, frame.targets, frame.hand_pose, self.offset_pose,
            q_prev=q_init, config=self.config,
        )
        self._cache[idx] = res
        return res

    # -- mutating operations (all logged) -----------------------------------

    def set_offset(self, values) -> IkResult:
        """Update the six offset DoF and re-solve the current frame.

        Angles wrap into (-pi, pi].  Setting the identical offset is a no-op
        returning the cached result.  If the solver raises, the new offset is
        retained, the previous solution stays displayed, and the error
        propagates.
        """
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.shape != (6,):
            raise DimensionMismatch(f"offset must have 6 values, got {values.shape}")
        if not np.isfinite(values).all():
            # rejected before logging or storing: the session must stay usable
            raise ValidationError(f"offset values must be finite, got {values.tolist()}")
        values = np.array([*values[:3], *(wrap_angle(a) for a in values[3:])])
        self.call_log.append({"op": "set_offset", "value": values.tolist()})
        if np.array_equal(values, self.offset6) and self.last_result is not None:
            return self.last_result
        warm = self.last_result.q if self.last_result is not None else None
        self.offset6 = values
        self._cache.clear()
        self.dirty = True
        result = self._solve_frame(self.cursor, q_init=warm)
        self.last_result = result
        return result

    def step_frame(self, delta: int) -> IkResult:
        """Move the frame cursor (clamped to the recording) and solve there."""
        self.call_log.append({"op": "step_frame", "delta": int(delta)})
        self.cursor = int(np.clip(self.cursor + delta, 0, len(self.recording) - 1))
        result = self._solve_frame(self.cursor)
        self.last_result = result
        return result

    def solve_all(self) -> dict:
        """Retarget every frame with the current offset; returns a summary."""
        self.call_log.append({"op": "solve_all"})
        rec = self.recording
        out = retarget_trajectory(
            self.model,
            [f.targets for f in rec.frames],
            [f.hand_pose for f in rec.frames],
            self.offset_pose,
            config=self.config,
        )
        for i, res in enumerate(out.results):
            self._cache[i] = res
        self.last_result = self._cache[self.cursor]
        return {
            "convergence_rate": out.convergence_rate,
            "converged": out.converged_flags.tolist(),
            "rms": [r.rms for r in out.results],
        }

    # -- persistence ---------------------------------------------------------

    def profile(self) -> CalibrationProfile:
        return CalibrationProfile(
            dataset_id=self.recording.name,
            hand_id=self.model.name,
            xyz=tuple(self.offset6[:3].tolist()),
            rpy=tuple(self.offset6[3:].tolist()),
            notes=self.notes,
        )

    def save_profile(self, store_path) -> CalibrationProfile:
        """Write the current offset as a profile JSON; clears the dirty flag.

        ``store_path`` may be a .json file path or a directory (the file is
        then named <dataset_id>__<hand_id>.json).
        """
        prof = self.profile()
        path = Path(store_path)
        if path.suffix != ".json":
            path.mkdir(parents=True, exist_ok=True)
            path = path / f"{prof.dataset_id}__{prof.hand_id}.json"
        prof.save(path)
        self.dirty = False
        return prof

    # -- views ---------------------------------------------------------------

    def render_state(self) -> dict:
        """Everything the GUI panels draw, as one JSON-ready payload.

        Clouds are capped (farthest-point sampled, seed 0) and shipped as
        base64 little-endian float32 xyz triplets with raw RGB bytes.
        """
        frame = self.recording.frames[self.cursor]
        res = self.last_result
        hand = sample_hand_surface(
            self.model, res.q, frame.hand_pose, self.offset_pose,
            density=self.sample_density, seed=0,
        )
        if len(hand) > self.hand_cap:
            hand = downsample_fps(hand, self.hand_cap, seed=0)
        scene = frame.cloud
        if scene is not None and len(scene) > self.scene_cap:
            scene = downsample_fps(scene, self.scene_cap, seed=0)
        return {
            "session_id": self.id,
            "hand": self.model.name,
            "side": self.model.side,
            "frame": self.cursor,
            "n_frames": len(self.recording),
            "offset": self.offset6.tolist(),
            "dirty": self.dirty,
            "converged": res.converged,
            "rms": res.rms,
            "iters_used": res.iters_used,
            "residuals": res.residual.tolist(),
            "fingertips": list(self.model.fingertips),
            "targets": frame.targets.tolist(),
            "clamped_joints": list(res.clamped_joints),
            "scene_cloud": _cloud_payload(scene),
            "hand_cloud": _cloud_payload(hand),
        }

    # -- replay ----------------------------------------------------------------

    def export_call_log(self) -> list[dict]:
        return [dict(entry) for entry in self.call_log]


def _cloud_payload(cloud: PointCloud | None) -> dict | None:
    if cloud is None:
        return None
    return {
        "count": len(cloud),
        "xyz": base64.b64encode(cloud.xyz.astype("<f4").tobytes()).decode(),
        "rgb": base64.b64encode(cloud.rgb.tobytes()).decode(),
    }


def open_session(
    recording_path,
    hand_path,
    profile_path=None,
    config: IkConfig = INTERACTIVE_CONFIG,
    session_id: str | None = None,
) -> Session:
    """Load files, apply an optional saved profile, and solve frame 0."""
    recording = load_recording(recording_path)
    model = load_hand(hand_path)
    profile = None
    if profile_path is not None:
        profile = (
            profile_path
            if isinstance(profile_path, CalibrationProfile)
            else CalibrationProfile.load(profile_path)
        )
    return Session(recording, model, profile, config, session_id)


def replay_call_log(
    recording: Recording,
    model: HandModel,
    log,
    profile: CalibrationProfile | None = None,
    config: IkConfig = INTERACTIVE_CONFIG,
) -> Session:
    """Rebuild a session by applying a recorded call log to a fresh one."""
    session = Session(recording, model, profile, config)
    for entry in log:
        op = entry["op"]
        if op == "set_offset":
            try:
                session.set_offset(entry["value"])
            except DexforgeError:
                pass  # original call failed too; state semantics match
        elif op == "step_frame":
            session.step_frame(entry["delta"])
        elif op == "solve_all":
            session.solve_all()
        else:
            raise ValidationError(f"unknown call-log op '{op}'")
    return session
