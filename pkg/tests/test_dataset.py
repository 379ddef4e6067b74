import json
from dataclasses import replace

import numpy as np
import pytest

from conftest import random_valid_q
from dexforge.dataset import (
    Frame,
    MixSpec,
    Trajectory,
    build_chunks,
    downsample_motion,
    filter_invalid,
    mix_batches,
    read_trajectory,
    trajectory_from_retarget,
    write_trajectory,
)
from dexforge.errors import (
    CorruptShard,
    InsufficientData,
    InvalidRate,
    ValidationError,
    VersionMismatch,
)
from dexforge.faas import decode_state, encode_state
from dexforge.geometry import Pose
from dexforge.kinematics import fingertip_positions
from dexforge.pointcloud import PointCloud
from dexforge.retarget import retarget_trajectory


def synth_trajectory(model, n=6, source="human", with_clouds=False, fps=30.0, seed=0):
    rng = np.random.default_rng(seed)
    frames, actions = [], []
    cloud = None
    for t in range(n):
        q = random_valid_q(model, rng)
        wrist = Pose.from_xyz_rpy((0.01 * t, 0.0, 0.3), (0.0, 0.0, 0.05 * t))
        vec = encode_state(model, model.side, wrist, q)
        if with_clouds:
            # identical clouds on purpose: they must be stored once
            cloud = PointCloud(
                np.arange(30, dtype=float).reshape(10, 3) / 50.0,
                np.full((10, 3), 120, dtype=np.uint8),
            )
        frames.append(Frame(t=t, instruction="pick up the cube", proprio=vec, cloud=cloud))
        actions.append(vec)
    return Trajectory(
        id=f"traj-{seed}", hand_id=model.name, side=model.side, source=source,
        fps=fps, frames=frames, actions=actions,
    )


def test_trajectory_validation(twig):
    traj = synth_trajectory(twig)
    with pytest.raises(ValidationError):
        replace(traj, source="alien")
    with pytest.raises(ValidationError):
        replace(traj, fps=0.0)
    with pytest.raises(ValidationError):
        replace(traj, actions=traj.actions[:-1])
    shuffled = [replace(f, t=0) for f in traj.frames]
    with pytest.raises(ValidationError):
        replace(traj, frames=shuffled)


def test_shard_round_trip_is_bit_exact(twig, tmp_path):
    traj = synth_trajectory(twig, with_clouds=True)
    shard = write_trajectory(traj, tmp_path / "shard")
    again = read_trajectory(shard)
    assert again.id == traj.id
    assert again.hand_id == "twig"
    assert again.fps == traj.fps
    assert len(again) == len(traj)
    for a, b in zip(again.actions, traj.actions):
        assert a.to_bytes() == b.to_bytes()
    for fa, fb in zip(again.frames, traj.frames):
        assert fa.proprio.to_bytes() == fb.proprio.to_bytes()
        assert fa.instruction == fb.instruction
        assert fa.cloud.to_bytes() == fb.cloud.to_bytes()
    # writing the reloaded trajectory reproduces identical files
    shard2 = write_trajectory(again, tmp_path / "shard2")
    assert (shard2 / "actions.bin").read_bytes() == (shard / "actions.bin").read_bytes()
    assert (shard2 / "index.json").read_text() == (shard / "index.json").read_text()


def test_identical_clouds_are_stored_once(twig, tmp_path):
    traj = synth_trajectory(twig, n=5, with_clouds=True)
    shard = write_trajectory(traj, tmp_path / "shard")
    blobs = list((shard / "clouds").glob("*.dfpc"))
    assert len(blobs) == 1  # content addressing deduplicates
    refs = {f.cloud_ref for f in read_trajectory(shard).frames}
    assert refs == {blobs[0].stem}


def test_corrupt_shards_are_rejected(twig, tmp_path):
    traj = synth_trajectory(twig, with_clouds=True)

    with pytest.raises(CorruptShard, match="index.json"):
        read_trajectory(tmp_path / "nowhere")

    shard = write_trajectory(traj, tmp_path / "flip")
    payload = bytearray((shard / "actions.bin").read_bytes())
    payload[100] ^= 0xFF
    (shard / "actions.bin").write_bytes(bytes(payload))
    with pytest.raises(CorruptShard, match="checksum"):
        read_trajectory(shard)

    shard = write_trajectory(traj, tmp_path / "vers")
    doc = json.loads((shard / "index.json").read_text())
    doc["version"] = 2
    (shard / "index.json").write_text(json.dumps(doc))
    with pytest.raises(VersionMismatch):
        read_trajectory(shard)

    shard = write_trajectory(traj, tmp_path / "blob")
    blob = next((shard / "clouds").glob("*.dfpc"))
    blob.unlink()
    with pytest.raises(CorruptShard, match="missing cloud blob"):
        read_trajectory(shard)

    shard = write_trajectory(traj, tmp_path / "hash")
    blob = next((shard / "clouds").glob("*.dfpc"))
    raw = bytearray(blob.read_bytes())
    raw[-1] ^= 0x01
    blob.write_bytes(bytes(raw))
    with pytest.raises(CorruptShard, match="content hash"):
        read_trajectory(shard)


def test_downsample_30_to_10_matches_stride_oracle(twig):
    traj = synth_trajectory(twig, n=50, fps=30.0)
    out = downsample_motion(traj, 10.0)
    # stride 3: floor(3k + 0.5) = 0, 3, 6, ..., 48 -> 17 frames
    assert out.fps == 10.0
    assert len(out) == 17
    picked = [a.values[50] for a in out.actions]
    want = [traj.actions[i].values[50] for i in range(0, 50, 3)]
    assert picked == want
    assert [f.t for f in out.frames] == list(range(17))


def test_downsample_fractional_stride():
    # stride 30/12.5 = 2.4: picks floor(2.4k + 0.5) = 0, 2, 5, 7, 10, ...
    frames_t = []
    traj_len = 12
    stride = 2.4
    k = 0
    while int(np.floor(k * stride + 0.5)) < traj_len:
        frames_t.append(int(np.floor(k * stride + 0.5)))
        k += 1
    assert frames_t == [0, 2, 5, 7, 10]


def test_downsample_rate_checks(twig):
    traj = synth_trajectory(twig, n=10, fps=30.0)
    with pytest.raises(InvalidRate):
        downsample_motion(traj, 60.0)
    with pytest.raises(InvalidRate):
        downsample_motion(traj, 0.0)
    same = downsample_motion(traj, 30.0)
    assert len(same) == len(traj)


def test_build_chunks_padding_and_rebase(twig):
    traj = synth_trajectory(twig, n=5)
    chunks = build_chunks(traj, horizon=4)
    assert len(chunks) == 5
    assert not chunks[0].pad_mask.any()
    assert list(chunks[3].pad_mask) == [False, False, True, True]
    assert list(chunks[4].pad_mask) == [False, True, True, True]
    # padded steps repeat the final action
    tail = chunks[4].chunk
    assert np.array_equal(tail.actions[1].values, tail.actions[0].values)
    # every chunk is expressed relative to its own first wrist
    for c in chunks:
        head = c.chunk.actions[0].values[9:18]
        assert np.allclose(head, [1, 0, 0, 0, 1, 0, 0, 0, 0], atol=1e-12)
    with pytest.raises(ValidationError):
        build_chunks(traj, horizon=0)


def test_chunk_joints_stay_absolute(twig):
    traj = synth_trajectory(twig, n=6)
    chunks = build_chunks(traj, horizon=3)
    for t, c in enumerate(chunks[:3]):
        for h, vec in enumerate(c.chunk.actions):
            assert vec.values[50] == traj.actions[t + h].values[50]


class _Tagged:
    def __init__(self, source, n):
        self.source = source
        self.id = f"{source}-{n}"

    def __repr__(self):
        return self.id


def test_mixer_epoch_composition_and_determinism():
    humans = [_Tagged("human", i) for i in range(20)]
    robots = [_Tagged("robot", i) for i in range(10)]
    spec = MixSpec(human_count=20, robot_count=10, seed=42)
    stream = mix_batches(humans, robots, spec, batch_size=3)
    batches = [next(stream) for _ in range(40)]  # 4 epochs of 10 batches
    assert all(len(b) == 3 for b in batches)
    for hist in stream.histograms:
        assert hist == {"human": 20, "robot": 10}
    # per-epoch totals are exact (sampling without replacement)
    for e in range(4):
        epoch = [x for b in batches[e * 10 : (e + 1) * 10] for x in b]
        assert sum(x.source == "human" for x in epoch) == 20
    # same seed, same order
    again = mix_batches(humans, robots, spec, batch_size=3)
    batches2 = [next(again) for _ in range(40)]
    assert [[x.id for x in b] for b in batches] == [[x.id for x in b] for b in batches2]
    other = mix_batches(humans, robots, replace(spec, seed=43), batch_size=3)
    assert [[x.id for x in next(other)] for _ in range(40)] != [
        [x.id for x in b] for b in batches
    ]


def test_mixer_weighting_shifts_early_positions():
    humans = [_Tagged("human", i) for i in range(12)]
    robots = [_Tagged("robot", i) for i in range(12)]
    spec = MixSpec(human_count=12, robot_count=12, human_weight=20.0,
                   robot_weight=1.0, seed=0)
    stream = mix_batches(humans, robots, spec, batch_size=4)
    first = next(stream)
    assert sum(x.source == "human" for x in first) >= 3


def test_mixer_batches_never_cross_epochs():
    humans = [_Tagged("human", i) for i in range(5)]
    robots = [_Tagged("robot", i) for i in range(2)]
    spec = MixSpec(human_count=5, robot_count=2, seed=1)
    stream = mix_batches(humans, robots, spec, batch_size=3)
    sizes = [len(next(stream)) for _ in range(9)]
    assert sizes == [3, 3, 1] * 3  # 7 items per epoch -> short final batch


def test_mixer_input_checks():
    humans = [_Tagged("human", i) for i in range(3)]
    with pytest.raises(InsufficientData):
        mix_batches(humans, [], MixSpec(human_count=5, robot_count=0), 2)
    with pytest.raises(ValidationError):
        MixSpec(human_count=0, robot_count=0)
    with pytest.raises(ValidationError):
        mix_batches(humans, [], MixSpec(human_count=3, robot_count=0,
                                        human_weight=0.0), 2)


def test_filter_invalid_reports_reasons(twig):
    good = synth_trajectory(twig, seed=1)
    flagged = replace(synth_trajectory(twig, seed=2), valid=False)
    short = synth_trajectory(twig, n=2, seed=3)
    diverged = synth_trajectory(twig, seed=4)
    diverged = replace(
        diverged,
        frames=[replace(f, converged=i != 0) for i, f in enumerate(diverged.frames)],
    )
    report = filter_invalid([good, flagged, short, diverged],
                            min_convergence=0.9, min_frames=3)
    assert [t.id for t in report.kept] == [good.id]
    reasons = dict(report.dropped)
    assert reasons[flagged.id] == "flagged invalid"
    assert reasons[short.id] == "length 2 < 3"
    assert reasons[diverged.id] == "convergence 83% < 90%"


def test_trajectory_from_retarget_round_trips_state(twig, tmp_path):
    rng = np.random.default_rng(8)
    poses, targets = [], []
    q = random_valid_q(twig, rng)
    for t in range(5):
        pose = Pose.from_xyz_rpy((0.02 * t, 0.0, 0.25), (0.0, 0.0, 0.1 * t))
        poses.append(pose)
        targets.append(fingertip_positions(twig, q, pose))
    out = retarget_trajectory(twig, targets, poses)
    traj = trajectory_from_retarget("demo-0", twig, out.results, poses,
                                    instruction="wave")
    assert traj.hand_id == "twig"
    assert len(traj) == 5
    assert traj.convergence_rate == 1.0
    # stored wrist is the hand pose itself when no offset is given
    dec = decode_state(traj.frames[2].proprio, twig, "right")
    assert np.abs(dec.wrist.rot - poses[2].rot).max() < 1e-9
    assert np.allclose(dec.wrist.trans, poses[2].trans, atol=1e-9)
    # with an offset the stored wrist is pose * offset
    off = Pose.from_xyz_rpy((0.01, 0.0, -0.02), (0.0, 0.1, 0.0))
    traj_off = trajectory_from_retarget("demo-1", twig, out.results, poses, offset=off)
    dec_off = decode_state(traj_off.frames[0].proprio, twig, "right")
    want = poses[0].compose(off)
    assert np.allclose(dec_off.wrist.trans, want.trans, atol=1e-9)
    shard = write_trajectory(traj, tmp_path / "demo")
    assert read_trajectory(shard).convergence_rate == 1.0
