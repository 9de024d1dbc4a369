import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import central_difference
from wholebody_mpc.errors import JointLimitError, StructuralError
from wholebody_mpc.kinematics import (
    ArmModel,
    JointState,
    RobotModel,
    com_jacobian,
    default_robot,
    forward_kinematics,
    hand_jacobian,
    rotation,
)


def planar_robot():
    arm = ArmModel("arm", [0, 0, 0], [[0, 0, 1], [0, 0, 1]], [0.3, 0.3])
    return RobotModel(30.0, (arm,), [-3, -3], [3, 3], 2.0, 0.3, 0.2, 0.4, 1.0)


def random_state(robot, rng):
    q = rng.uniform(robot.joint_lower, robot.joint_upper)
    return JointState(rng.normal(size=3), q)


def test_straight_planar_chain():
    hands, com = forward_kinematics(planar_robot(), JointState(np.zeros(3), [0, 0]))
    np.testing.assert_allclose(hands[0], [0.6, 0, 0], atol=1e-15)
    np.testing.assert_allclose(com, [0, 0, 0])


def test_quarter_turn():
    hands, _ = forward_kinematics(planar_robot(), JointState(np.zeros(3), [np.pi / 2, 0]))
    np.testing.assert_allclose(hands[0], [0, 0.6, 0], atol=1e-15)


def test_textbook_planar_jacobian():
    J = hand_jacobian(planar_robot(), JointState(np.zeros(3), [0, 0]), "arm")
    np.testing.assert_allclose(J[:, 3:], [[0, 0], [0.6, 0.3], [0, 0]], atol=1e-15)
    np.testing.assert_allclose(J[:, :3], np.eye(3))


def test_rotation_is_orthonormal():
    R = rotation([1, 2, 3], 0.7)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-15)
    assert np.linalg.det(R) == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(10))
def test_jacobian_by_central_differences(seed):
    robot = default_robot()
    rng = np.random.default_rng(seed)
    state = random_state(robot, rng)
    # keep the perturbed configurations inside the limits
    q = np.clip(state.arm_angles, robot.joint_lower + 1e-6, robot.joint_upper - 1e-6)
    v0 = np.concatenate([state.torso_position, q])
    for arm in robot.arm_names:
        idx = robot.arm_index(arm)

        def hand(v):
            return forward_kinematics(robot, JointState(v[:3], v[3:]))[0][idx]

        fd = central_difference(hand, v0)
        J = hand_jacobian(robot, JointState(v0[:3], q), arm)
        assert np.max(np.abs(fd - J)) <= 1e-6


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), scale=st.floats(1e-4, 1e-2))
def test_first_order_taylor_consistency(seed, scale):
    robot = default_robot()
    rng = np.random.default_rng(seed)
    lo, hi = robot.joint_lower + 0.05, robot.joint_upper - 0.05
    q = rng.uniform(lo, hi)
    dq = rng.normal(size=q.size) * scale
    base = JointState(np.zeros(3), q)
    moved = JointState(np.zeros(3), q + dq)
    h0, _ = forward_kinematics(robot, base)
    h1, _ = forward_kinematics(robot, moved)
    for i, arm in enumerate(robot.arm_names):
        pred = h0[i] + hand_jacobian(robot, base, arm)[:, 3:] @ dq
        # chain is at most 0.65 m long, second derivative bounded by that length
        assert np.linalg.norm(h1[i] - pred) <= 0.65 * 6 * np.dot(dq, dq) + 1e-15


def test_com_jacobian_rigid_translation():
    robot = default_robot()
    state = random_state(robot, np.random.default_rng(0))
    v = np.concatenate([[0.3, -0.2, 0.1], np.zeros(robot.n_joints)])
    np.testing.assert_array_equal(com_jacobian(robot, state) @ v, [0.3, -0.2, 0.1])


def test_arm_columns_belong_to_their_arm():
    robot = default_robot()
    state = random_state(robot, np.random.default_rng(1))
    J = hand_jacobian(robot, state, "left")
    assert np.all(J[:, 3 + robot.joint_slice("right").start:] == 0)


def test_joint_limits_enforced():
    robot = default_robot()
    q = np.zeros(robot.n_joints)
    q[2] = 1.0  # elbow upper limit 0.5
    with pytest.raises(JointLimitError):
        forward_kinematics(robot, JointState(np.zeros(3), q))


def test_wrong_joint_count():
    with pytest.raises(StructuralError):
        forward_kinematics(default_robot(), JointState(np.zeros(3), np.zeros(4)))


def test_unknown_arm():
    with pytest.raises(KeyError):
        hand_jacobian(default_robot(), JointState(np.zeros(3), np.zeros(6)), "tail")
