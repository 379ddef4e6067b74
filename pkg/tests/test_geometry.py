import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dexforge.errors import InvalidRotation, ValidationError
from dexforge.geometry import (
    Pose,
    matrix_to_rpy,
    rotation_about_axis,
    rpy_to_matrix,
    wrap_angle,
)

finite_angle = st.floats(-50.0, 50.0, allow_nan=False)


def test_wrap_angle_basics():
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(np.pi) == pytest.approx(np.pi)
    # the wrapped interval is half-open at -pi
    assert wrap_angle(-np.pi) == pytest.approx(np.pi)
    assert wrap_angle(3 * np.pi) == pytest.approx(np.pi)
    assert wrap_angle(2 * np.pi + 0.25) == pytest.approx(0.25)


@given(finite_angle)
def test_wrap_angle_is_idempotent_and_in_range(theta):
    w = wrap_angle(theta)
    assert -np.pi < w <= np.pi
    assert wrap_angle(w) == pytest.approx(w)
    # wrapping preserves the angle modulo a full turn
    assert (theta - w) / (2 * np.pi) == pytest.approx(round((theta - w) / (2 * np.pi)), abs=1e-9)


def test_rotation_about_axis_matches_small_cases():
    rz = rotation_about_axis(np.array([0.0, 0.0, 1.0]), np.pi / 2)
    assert np.allclose(rz @ [1, 0, 0], [0, 1, 0], atol=1e-12)
    rx = rotation_about_axis(np.array([1.0, 0.0, 0.0]), np.pi)
    assert np.allclose(rx @ [0, 1, 0], [0, -1, 0], atol=1e-12)


@given(st.tuples(finite_angle, finite_angle, finite_angle))
@settings(max_examples=200)
def test_rpy_round_trip(angles):
    r = rpy_to_matrix(*angles)
    assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(r) == pytest.approx(1.0)
    back = matrix_to_rpy(r)
    assert np.allclose(rpy_to_matrix(*back), r, atol=1e-9)


def test_rpy_gimbal_branch():
    # pitch = +pi/2 collapses roll/yaw into one DoF; the round trip must
    # still reproduce the matrix even though the angles are not unique
    r = rpy_to_matrix(0.3, np.pi / 2, -0.7)
    back = matrix_to_rpy(r)
    assert np.allclose(rpy_to_matrix(*back), r, atol=1e-9)


def test_pose_compose_inverse_apply():
    a = Pose.from_xyz_rpy((0.1, -0.2, 0.3), (0.4, 0.5, 0.6))
    b = Pose.from_xyz_rpy((-0.05, 0.02, 0.11), (-1.0, 0.2, 2.5))
    ab = a.compose(b)
    pts = np.array([[0.0, 0.0, 0.0], [0.1, 0.2, 0.3]])
    assert np.allclose(ab.apply(pts), a.apply(b.apply(pts)), atol=1e-12)

    ident = a.compose(a.inverse())
    assert np.allclose(ident.rot, np.eye(3), atol=1e-12)
    assert np.allclose(ident.trans, 0.0, atol=1e-12)


def test_pose_round_trips_xyz_rpy():
    xyz = (0.25, -0.75, 1.5)
    rpy = (0.1, -1.2, 2.9)
    pose = Pose.from_xyz_rpy(xyz, rpy)
    got_xyz, got_rpy = pose.to_xyz_rpy()
    assert np.allclose(got_xyz, xyz)
    assert np.allclose(rpy_to_matrix(*got_rpy), pose.rot, atol=1e-9)


def test_pose_rejects_non_rotation():
    with pytest.raises(InvalidRotation):
        Pose(np.eye(3) * 2.0, np.zeros(3))
    with pytest.raises(InvalidRotation):
        Pose(np.zeros((3, 3)), np.zeros(3))


def test_pose_arrays_are_frozen():
    pose = Pose.identity()
    with pytest.raises(ValueError):
        pose.rot[0, 0] = 5.0


def test_pose_is_insulated_from_caller_mutation():
    rot = np.eye(3)
    trans = np.zeros(3)
    pose = Pose(rot, trans)
    trans[0] = 99.0
    assert pose.trans[0] == 0.0
