import json

import numpy as np
import pytest

from conftest import random_valid_q
from dexforge import (
    CalibrationProfile,
    IkConfig,
    forward_kinematics,
    parse_hand,
    retarget_frame,
    solve_ik,
)
from dexforge.errors import ValidationError, ParseError, SingularUpdate
from dexforge.geometry import Pose
from dexforge.kinematics import fingertip_positions
from dexforge.retarget import (
    align_capture_frames,
    mimic_correction_loop,
    retarget_trajectory,
)

SOLVE_HANDS = ["twig", "inspire", "wuji"]


def oracle_targets(model, rng, world=None, offset=None):
    q_star = random_valid_q(model, rng)
    return fingertip_positions(model, q_star, world, offset), q_star


@pytest.mark.parametrize("hand", SOLVE_HANDS)
def test_recovers_fk_oracle_targets(hand, request):
    model = request.getfixturevalue(hand)
    rng = np.random.default_rng(17)
    for _ in range(10):
        targets, _ = oracle_targets(model, rng)
        res = retarget_frame(model, targets)
        assert res.converged, f"rms={res.rms}"
        assert res.rms < 1e-3
        assert res.residual.shape == (len(model.fingertips),)


def test_solves_under_world_pose_and_offset(inspire):
    rng = np.random.default_rng(23)
    world = Pose.from_xyz_rpy((0.4, -0.2, 0.6), (0.1, 0.9, -0.4))
    offset = Pose.from_xyz_rpy((0.015, -0.01, 0.02), (0.05, -0.03, 0.12))
    targets, _ = oracle_targets(inspire, rng, world, offset)
    res = retarget_frame(inspire, targets, world, offset)
    assert res.converged
    # and the recovered q really does place the tips on target
    tips = fingertip_positions(inspire, res.q, world, offset)
    assert np.linalg.norm(tips - targets, axis=1).max() < 2e-3


def test_result_is_never_worse_than_start(twig):
    rng = np.random.default_rng(31)
    cfg = IkConfig(max_iters=4)  # starved on purpose
    for _ in range(25):
        targets = rng.uniform(-0.2, 0.2, (2, 3))
        q0 = random_valid_q(twig, rng)
        start_rms = np.sqrt(
            np.mean(
                np.linalg.norm(fingertip_positions(twig, q0) - targets, axis=1) ** 2
            )
        )
        res = solve_ik(twig, targets, q_init=q0, config=cfg)
        assert res.rms <= start_rms + 1e-12


def stick_plane_distance(target, n=800):
    """Closed-form dense-sampling oracle for the 2-link planar fixture."""
    l1 = l2 = 0.05
    q0 = np.linspace(-1.57, 1.57, n)
    q1 = np.linspace(-1.57, 1.57, n)
    g0, g1 = np.meshgrid(q0, q1)
    x = l1 * np.sin(g0) + l2 * np.sin(g0 + g1)
    z = 0.01 + l1 * np.cos(g0) + l2 * np.cos(g0 + g1)
    d = np.sqrt((x - target[0]) ** 2 + target[1] ** 2 + (z - target[2]) ** 2)
    return d.min()


@pytest.mark.parametrize(
    "target",
    [
        (0.0, 0.0, 0.16),     # straight up, 0.05 beyond full extension
        (0.09, 0.0, 0.12),    # diagonal, out of reach
        (0.02, 0.04, 0.09),   # off-plane: the arm can never leave y=0
    ],
)
def test_unreachable_rms_equals_distance_to_workspace(stick, target):
    cfg = IkConfig(max_iters=400, damping=1e-4)
    res = solve_ik(stick, np.array([target]), config=cfg)
    assert not res.converged
    want = stick_plane_distance(target)
    assert res.rms == pytest.approx(want, abs=2e-3)
    assert res.rms >= want - 4e-3  # cannot beat the workspace boundary


def test_reachable_stick_target_converges(stick):
    targets = np.array([[0.05, 0.0, 0.08]])
    d = stick_plane_distance(targets[0])
    assert d < 1e-4, "sanity: target should be in the workspace"
    res = solve_ik(stick, targets, config=IkConfig(max_iters=300))
    assert res.converged and res.rms < 1e-3


@pytest.mark.parametrize("hand", ["twig", "inspire"])
def test_mimic_correction_never_hurts(hand, request):
    model = request.getfixturevalue(hand)
    rng = np.random.default_rng(41)
    kin = model.kin
    for _ in range(10):
        targets, _ = oracle_targets(model, rng)
        naive = solve_ik(model, targets)
        fixed = mimic_correction_loop(model, targets, None, None, naive)
        assert fixed.rms <= naive.rms + 1e-15
        for j in range(kin.full_dof):
            m = kin.mimic_master[j]
            if m >= 0:
                assert fixed.q[j] == kin.mimic_k[j] * fixed.q[m] + kin.mimic_c[j]


def test_correction_loop_is_noop_without_mimics(wuji):
    rng = np.random.default_rng(43)
    targets, _ = oracle_targets(wuji, rng)
    naive = solve_ik(wuji, targets)
    fixed = mimic_correction_loop(wuji, targets, None, None, naive)
    assert fixed.iters_used == 1
    assert np.array_equal(fixed.q, naive.q)


def test_clamped_joints_are_reported(twig):
    # a target built from an out-of-limit posture drives the solver into the
    # stops, which must show up in clamped_joints
    q_over = np.array([1.9, 0.0, 2.4, 0.0])
    targets = forward_kinematics(twig, q_over).fingertips
    res = solve_ik(twig, targets, config=IkConfig(max_iters=300))
    assert not res.converged
    assert len(res.clamped_joints) >= 1


def test_zero_damping_singular_system_raises():
    # j1 sits past the only fingertip, so its jacobian column is exactly zero
    # and with no damping the normal equations are exactly singular
    doc = {
        "name": "deadend",
        "side": "right",
        "links": [{"name": n} for n in ("palm", "l1", "l2", "tipA")],
        "joints": [
            {
                "name": "j0",
                "type": "revolute",
                "parent": "palm",
                "child": "l1",
                "origin": {"xyz": [0.0, 0.0, 0.01], "rpy": [0.0, 0.0, 0.0]},
                "axis": [1.0, 0.0, 0.0],
                "limit": {"lower": -1.5, "upper": 1.5},
            },
            {
                "name": "tipweld",
                "type": "fixed",
                "parent": "l1",
                "child": "tipA",
                "origin": {"xyz": [0.0, 0.0, 0.05], "rpy": [0.0, 0.0, 0.0]},
            },
            {
                "name": "j1",
                "type": "revolute",
                "parent": "l1",
                "child": "l2",
                "origin": {"xyz": [0.0, 0.0, 0.06], "rpy": [0.0, 0.0, 0.0]},
                "axis": [1.0, 0.0, 0.0],
                "limit": {"lower": -1.5, "upper": 1.5},
            },
        ],
        "fingertips": ["tipA"],
        "faas_map": {"j0": 0, "j1": 27},
    }
    deadend = parse_hand(doc)
    cfg = IkConfig(damping=0.0, max_iters=5)
    with pytest.raises(SingularUpdate):
        solve_ik(deadend, np.array([[0.0, 0.03, 0.05]]), q_init=np.zeros(2),
                 config=cfg)


def test_trajectory_warm_start(twig):
    rng = np.random.default_rng(53)
    q = random_valid_q(twig, rng)
    frames, poses = [], []
    for t in range(12):
        drift = np.array([0.015 * np.sin(0.4 * t), 0.01 * t / 12, 0.012 * t / 12])
        q2 = np.clip(q + drift[0], twig.kin.lower, twig.kin.upper)
        pose = Pose.from_xyz_rpy((0.1 + 0.005 * t, 0.0, 0.3), (0.0, 0.0, 0.05 * t))
        frames.append(fingertip_positions(twig, q2, pose))
        poses.append(pose)
    out = retarget_trajectory(twig, frames, poses)
    assert out.convergence_rate == 1.0
    assert len(out.results) == 12
    assert out.converged_flags.all()


def test_trajectory_accepts_explicit_q0(twig):
    rng = np.random.default_rng(59)
    targets, q_star = oracle_targets(twig, rng)
    out = retarget_trajectory(twig, [targets], [Pose.identity()], q0=q_star)
    assert out.results[0].iters_used <= 3  # already at the answer


def test_align_capture_frames():
    ext = Pose.from_xyz_rpy((0.1, 0.2, 0.3), (0.0, 0.0, np.pi / 2))
    frames = [np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])]
    out = align_capture_frames(frames, ext)
    assert np.allclose(out[0][0], [0.1, 1.2, 0.3], atol=1e-12)
    assert np.allclose(out[0][1], [-0.9, 0.2, 0.3], atol=1e-12)


def test_profile_round_trip(tmp_path):
    prof = CalibrationProfile(
        dataset_id="demo", hand_id="twig", xyz=(0.01, -0.02, 0.005),
        rpy=(0.1, 0.0, -0.2), notes="bench calibration",
    )
    path = tmp_path / "p.json"
    prof.save(path)
    again = CalibrationProfile.load(path)
    assert again.dataset_id == "demo"
    assert again.hand_id == "twig"
    assert np.allclose(again.xyz, prof.xyz)
    assert np.allclose(again.rpy, prof.rpy)
    assert again.notes == "bench calibration"
    off = again.offset
    assert np.allclose(off.trans, prof.xyz)

    with pytest.raises(ParseError):
        CalibrationProfile.load(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"dataset_id": "x"}))
    with pytest.raises(ValidationError):
        CalibrationProfile.load(bad)
