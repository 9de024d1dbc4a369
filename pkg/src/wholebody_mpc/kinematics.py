"""Reduced whole-body kinematics: a translating torso plus revolute arm chains.

The legs are not modeled.  The torso translates freely (a 3-DoF virtual
joint driven by the CoM plan) and carries the CoM at a fixed offset, so
the velocity vector is ``[torso_velocity (3), arm joint rates ...]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import JointLimitError, StructuralError

LIMIT_TOL = 1e-9


def rotation(axis, angle: float) -> np.ndarray:
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * K @ K


@dataclass(frozen=True)
class ArmModel:
    """Serial chain mounted on the torso.

    Joint i rotates about ``axes[i]`` (expressed in the frame left by joints
    0..i-1), then link i extends ``link_lengths[i]`` along ``link_direction``.
    """

    name: str
    mount: np.ndarray
    axes: np.ndarray
    link_lengths: np.ndarray
    link_direction: np.ndarray = None

    def __post_init__(self):
        axes = np.atleast_2d(np.asarray(self.axes, dtype=float))
        lengths = np.asarray(self.link_lengths, dtype=float).reshape(-1)
        if axes.shape != (lengths.shape[0], 3):
            raise StructuralError(f"arm {self.name}: need one 3-vector axis per link")
        if np.any(lengths <= 0):
            raise ValueError(f"arm {self.name}: link lengths must be positive")
        axes = axes / np.linalg.norm(axes, axis=1, keepdims=True)
        direction = np.array([1.0, 0.0, 0.0]) if self.link_direction is None else np.asarray(self.link_direction, dtype=float)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "link_lengths", lengths)
        object.__setattr__(self, "mount", np.asarray(self.mount, dtype=float).reshape(3))
        object.__setattr__(self, "link_direction", direction / np.linalg.norm(direction))

    @property
    def dof(self) -> int:
        return self.link_lengths.shape[0]

    def chain(self, angles):
        """Joint origins, world-frame joint axes and the tip, relative to the torso."""
        R = np.eye(3)
        p = self.mount.copy()
        origins, world_axes = [], []
        for axis, length, q in zip(self.axes, self.link_lengths, angles):
            origins.append(p.copy())
            world_axes.append(R @ axis)
            R = R @ rotation(axis, q)
            p = p + R @ (length * self.link_direction)
        return origins, world_axes, p


@dataclass(frozen=True)
class RobotModel:
    total_mass: float
    arms: tuple
    joint_lower: np.ndarray
    joint_upper: np.ndarray
    joint_vel_limit: np.ndarray
    reach_xy: float
    reach_z: float
    com_floor: float
    com_ceiling: float
    torso_offset: np.ndarray = None
    gravity: float = 9.81

    def __post_init__(self):
        if not self.total_mass > 0:
            raise ValueError("total_mass must be positive")
        n = sum(arm.dof for arm in self.arms)
        lower = np.broadcast_to(np.asarray(self.joint_lower, dtype=float), (n,)).copy()
        upper = np.broadcast_to(np.asarray(self.joint_upper, dtype=float), (n,)).copy()
        vel = np.broadcast_to(np.asarray(self.joint_vel_limit, dtype=float), (n,)).copy()
        if np.any(lower >= upper):
            raise ValueError("joint_lower must be below joint_upper elementwise")
        if np.any(vel <= 0):
            raise ValueError("joint velocity limits must be positive")
        if not (self.reach_xy > 0 and self.reach_z > 0):
            raise ValueError("reach distances must be positive")
        if not self.com_floor < self.com_ceiling:
            raise ValueError("com_floor must be below com_ceiling")
        offset = np.zeros(3) if self.torso_offset is None else np.asarray(self.torso_offset, dtype=float).reshape(3)
        names = [arm.name for arm in self.arms]
        if len(set(names)) != len(names):
            raise ValueError("arm names must be unique")
        object.__setattr__(self, "arms", tuple(self.arms))
        object.__setattr__(self, "joint_lower", lower)
        object.__setattr__(self, "joint_upper", upper)
        object.__setattr__(self, "joint_vel_limit", vel)
        object.__setattr__(self, "torso_offset", offset)

    @property
    def n_joints(self) -> int:
        return self.joint_lower.shape[0]

    @property
    def n_velocity(self) -> int:
        return 3 + self.n_joints

    @property
    def arm_names(self) -> list[str]:
        return [arm.name for arm in self.arms]

    def arm_index(self, arm_id) -> int:
        if isinstance(arm_id, str):
            try:
                return self.arm_names.index(arm_id)
            except ValueError:
                raise KeyError(f"unknown arm {arm_id!r}") from None
        return int(arm_id)

    def joint_slice(self, arm_id) -> slice:
        idx = self.arm_index(arm_id)
        start = sum(arm.dof for arm in self.arms[:idx])
        return slice(start, start + self.arms[idx].dof)


@dataclass(frozen=True)
class JointState:
    torso_position: np.ndarray
    arm_angles: np.ndarray
    arm_velocities: np.ndarray = None

    def __post_init__(self):
        q = np.asarray(self.arm_angles, dtype=float).reshape(-1)
        qd = np.zeros_like(q) if self.arm_velocities is None else np.asarray(self.arm_velocities, dtype=float).reshape(-1)
        object.__setattr__(self, "torso_position", np.asarray(self.torso_position, dtype=float).reshape(3))
        object.__setattr__(self, "arm_angles", q)
        object.__setattr__(self, "arm_velocities", qd)


def check_limits(model: RobotModel, state: JointState) -> None:
    q = state.arm_angles
    if q.shape != (model.n_joints,):
        raise StructuralError(f"expected {model.n_joints} arm angles, got {q.shape[0]}")
    below = model.joint_lower - q
    above = q - model.joint_upper
    worst = float(max(below.max(), above.max()))
    if worst > LIMIT_TOL:
        idx = int(np.argmax(np.maximum(below, above)))
        raise JointLimitError(f"joint {idx} at {q[idx]:.6f} outside [{model.joint_lower[idx]}, {model.joint_upper[idx]}]")


def com_position(model: RobotModel, state: JointState) -> np.ndarray:
    return state.torso_position + model.torso_offset


def forward_kinematics(model: RobotModel, state: JointState):
    """World hand positions (one per arm) and the CoM position."""
    check_limits(model, state)
    hands = []
    for i, arm in enumerate(model.arms):
        *_, tip = arm.chain(state.arm_angles[model.joint_slice(i)])
        hands.append(state.torso_position + tip)
    return hands, com_position(model, state)


def hand_jacobian(model: RobotModel, state: JointState, arm_id) -> np.ndarray:
    check_limits(model, state)
    idx = model.arm_index(arm_id)
    arm = model.arms[idx]
    sl = model.joint_slice(idx)
    origins, axes, tip = arm.chain(state.arm_angles[sl])
    J = np.zeros((3, model.n_velocity))
    J[:, :3] = np.eye(3)
    for k, (o, a) in enumerate(zip(origins, axes)):
        J[:, 3 + sl.start + k] = np.cross(a, tip - o)
    return J


def com_jacobian(model: RobotModel, state: JointState) -> np.ndarray:
    """Arm masses are lumped into the torso, so only the torso columns are nonzero."""
    J = np.zeros((3, model.n_velocity))
    J[:, :3] = np.eye(3)
    return J


def default_robot() -> RobotModel:
    """A 30 kg humanoid-sized model with two 3-DoF arms (pitch, yaw, elbow pitch)."""
    axes = [[0, 1, 0], [0, 0, 1], [0, 1, 0]]
    lengths = [0.05, 0.3, 0.3]
    arms = (
        ArmModel("left", [0.0, 0.2, 0.35], axes, lengths),
        ArmModel("right", [0.0, -0.2, 0.35], axes, lengths),
    )
    lower = np.tile([-2.5, -1.5, -2.6], 2)
    upper = np.tile([2.5, 1.5, 0.5], 2)
    return RobotModel(
        total_mass=30.0, arms=arms, joint_lower=lower, joint_upper=upper,
        joint_vel_limit=3.0, reach_xy=0.35, reach_z=0.2,
        com_floor=0.5, com_ceiling=0.85,
    )
