"""Horizontal CoM jerk, ZMP-shift slack and joint-velocity QP.

Decision vector layout: ``[jerk_x (N), jerk_y (N), dz_x (N), dz_y (N), qdot (nv)]``;
the ``dz`` blocks are absent when the contact force is known in advance.

Two ZMP models are supported:

* known force: the exact ZMP of the contact-loaded robot is affine in the
  horizontal state once the vertical plan and the force are fixed;
* unknown force: the linear-inverted-pendulum ZMP plus a free slack ``dz``
  per step.  A slack far from zero marks a step the feet cannot balance
  alone, which is what triggers contact selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError, UnloadedRobotError
from .kinematics import JointState, RobotModel, com_jacobian, hand_jacobian
from .preview import AxisState, PreviewMatrices
from .qp import DEFAULT_MAX_ITER, DEFAULT_TOL, QpProblem, QpSolution, solve_qp
from .vertical import VerticalPlan
from .zmp import (
    CentroidalParams,
    ExternalContact,
    acceleration_shift_gain,
    build_zmp_preview,
    lipm_coefficients,
    zmp_coefficients,
)

DEFAULT_DELTA_THRESHOLD = 1e-3
SUPPORT_MARGIN = 0.01


@dataclass(frozen=True)
class SupportSchedule:
    """Per-step axis-aligned ZMP bounds, shape (N, 2) each."""

    zmp_lower: np.ndarray
    zmp_upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.zmp_lower, dtype=float).reshape(-1, 2)
        up = np.asarray(self.zmp_upper, dtype=float).reshape(-1, 2)
        if lo.shape != up.shape:
            raise StructuralError("zmp_lower and zmp_upper must have the same shape")
        if np.any(lo >= up):
            raise ValueError("support bounds must satisfy lower < upper at every step")
        object.__setattr__(self, "zmp_lower", lo)
        object.__setattr__(self, "zmp_upper", up)

    @property
    def steps(self) -> int:
        return self.zmp_lower.shape[0]


@dataclass(frozen=True)
class Stage2Weights:
    jerk: float = 1.0
    delta: float = 1e8
    qdot: float = 1e-2
    com_track: float = 1.0
    hand_track: float = 1.0

    def __post_init__(self):
        for name in ("jerk", "delta", "qdot", "com_track", "hand_track"):
            if getattr(self, name) < 0:
                raise ValueError(f"weight {name} must be nonnegative")


@dataclass(frozen=True)
class KinematicRefs:
    """Horizontal reach anchors and first-cycle velocity targets.

    ``anchors`` maps a name to an (N, 2) array of reference positions; the
    CoM must stay within ``reach`` of every anchor on both axes.
    ``hand_velocity`` maps arm names to desired world hand velocities.
    """

    reach: float
    anchors: dict = field(default_factory=dict)
    hand_velocity: dict = field(default_factory=dict)


@dataclass
class Stage2Layout:
    steps: int
    n_velocity: int
    has_delta: bool

    @property
    def size(self) -> int:
        return (4 if self.has_delta else 2) * self.steps + self.n_velocity

    def jerk(self, axis: int) -> slice:
        return slice(axis * self.steps, (axis + 1) * self.steps)

    def delta(self, axis: int) -> slice:
        if not self.has_delta:
            raise KeyError("layout has no slack block")
        return slice((2 + axis) * self.steps, (3 + axis) * self.steps)

    @property
    def qdot(self) -> slice:
        start = (4 if self.has_delta else 2) * self.steps
        return slice(start, start + self.n_velocity)


@dataclass
class Stage2Qp:
    problem: QpProblem
    layout: Stage2Layout
    matrices: PreviewMatrices
    state_xy: tuple
    zmp_ops: object
    vertical_plan: VerticalPlan


@dataclass(frozen=True)
class Stage2Solution:
    jerks_xy: np.ndarray
    delta_z: np.ndarray
    qdot: np.ndarray
    predicted_zmp: np.ndarray
    com_xy: np.ndarray
    com_vel_xy: np.ndarray
    com_acc_xy: np.ndarray
    status: str
    objective: float
    qp: QpSolution = None

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def detect_contact_need(delta_z, threshold: float = DEFAULT_DELTA_THRESHOLD) -> int | None:
    """Index of the first step whose slack exceeds ``threshold`` in infinity norm."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    dz = np.asarray(delta_z, dtype=float).reshape(-1, 2)
    hits = np.flatnonzero(np.max(np.abs(dz), axis=1) > threshold)
    return int(hits[0]) if hits.size else None


def _add_least_squares(H, g, M, b, weight):
    if weight:
        H += 2.0 * weight * M.T @ M
        g -= 2.0 * weight * M.T @ b


def _check_inputs(plan, state_xy, schedule, matrices):
    N = matrices.steps
    if schedule.steps != N:
        raise StructuralError(f"support schedule has {schedule.steps} steps, horizon has {N}")
    if plan.heights.shape[0] != N:
        raise StructuralError(f"vertical plan has {plan.heights.shape[0]} steps, horizon has {N}")
    if len(state_xy) != 2:
        raise StructuralError("state_xy must hold the x and y axis states")


def _assemble(layout, matrices, state_xy, plan, schedule, weights, kin_refs, model,
              joint_state, zmp_rows, extra_eq=None):
    """Common cost, reach band and joint bounds; ``zmp_rows`` supplies the balance rows."""
    N, nv = layout.steps, layout.n_velocity
    n = layout.size
    H = np.zeros((n, n))
    g = np.zeros(n)

    for axis in range(2):
        js = layout.jerk(axis)
        H[js, js] += 2.0 * weights.jerk * np.eye(N)
        if layout.has_delta:
            ds = layout.delta(axis)
            H[ds, ds] += 2.0 * weights.delta * np.eye(N)
    qs = layout.qdot
    H[qs, qs] += 2.0 * weights.qdot * np.eye(nv)

    # CoM tracking couples qdot to the first predicted CoM velocity.
    Jc = com_jacobian(model, joint_state)
    M = np.zeros((3, n))
    b = np.zeros(3)
    M[:, qs] = Jc
    for axis in range(2):
        M[axis, layout.jerk(axis).start] -= matrices.vel_input[0, 0]
        b[axis] = matrices.vel_state[0] @ state_xy[axis].as_array()
    b[2] = plan.velocities[0]
    _add_least_squares(H, g, M, b, weights.com_track)

    for arm, velocity in kin_refs.hand_velocity.items():
        M = np.zeros((3, n))
        M[:, qs] = hand_jacobian(model, joint_state, arm)
        _add_least_squares(H, g, M, np.asarray(velocity, dtype=float), weights.hand_track)

    rows, lower, upper = [], [], []
    for A, lo, up in zmp_rows:
        rows.append(A)
        lower.append(lo)
        upper.append(up)

    if kin_refs.anchors:
        anchors = np.array([np.asarray(a, dtype=float).reshape(N, 2) for a in kin_refs.anchors.values()])
        band_lo = np.max(anchors, axis=0) - kin_refs.reach
        band_hi = np.min(anchors, axis=0) + kin_refs.reach
        for axis in range(2):
            A = np.zeros((N, n))
            A[:, layout.jerk(axis)] = matrices.pos_input
            free = matrices.pos_state @ state_xy[axis].as_array()
            rows.append(A)
            lower.append(band_lo[:, axis] - free)
            upper.append(band_hi[:, axis] - free)

    var_lo = np.full(n, -np.inf)
    var_hi = np.full(n, np.inf)
    dt = matrices.dt
    q = joint_state.arm_angles
    arm_lo = np.maximum(-model.joint_vel_limit, (model.joint_lower - q) / dt)
    arm_hi = np.minimum(model.joint_vel_limit, (model.joint_upper - q) / dt)
    var_lo[qs.start + 3:qs.stop] = np.minimum(arm_lo, 0.0)
    var_hi[qs.start + 3:qs.stop] = np.maximum(arm_hi, 0.0)

    eq_matrix = eq_rhs = None
    if extra_eq is not None and len(extra_eq[1]):
        eq_matrix, eq_rhs = extra_eq
    return QpProblem(
        H, g, eq_matrix, eq_rhs,
        np.vstack(rows), np.concatenate(lower), np.concatenate(upper),
        var_lo, var_hi,
    )


def build_stage2_known(vertical_plan: VerticalPlan, state_xy, contacts, schedule: SupportSchedule,
                       weights: Stage2Weights, kin_refs: KinematicRefs, model: RobotModel,
                       joint_state: JointState, params: CentroidalParams,
                       matrices: PreviewMatrices) -> Stage2Qp:
    """Balance rows use the exact ZMP of the robot loaded by the known ``contacts``
    (one :class:`ExternalContact` per horizon step)."""
    _check_inputs(vertical_plan, state_xy, schedule, matrices)
    N = matrices.steps
    contacts = list(contacts)
    if len(contacts) != N:
        raise StructuralError(f"need one contact per horizon step, got {len(contacts)}")
    coeffs = []
    for i, contact in enumerate(contacts):
        try:
            coeffs.append(zmp_coefficients(params, vertical_plan.heights[i],
                                           vertical_plan.accelerations[i], contact))
        except UnloadedRobotError as err:
            raise UnloadedRobotError(err.denominator, step=i) from None
    ops = build_zmp_preview(coeffs, matrices)
    layout = Stage2Layout(N, model.n_velocity, has_delta=False)
    zmp_rows = []
    for axis in range(2):
        A = np.zeros((N, layout.size))
        A[:, layout.jerk(axis)] = ops.zmp_input
        free = ops.zmp_state @ state_xy[axis].as_array() + ops.zmp_offset[:, axis]
        zmp_rows.append((A, schedule.zmp_lower[:, axis] - free, schedule.zmp_upper[:, axis] - free))
    problem = _assemble(layout, matrices, state_xy, vertical_plan, schedule, weights,
                        kin_refs, model, joint_state, zmp_rows)
    return Stage2Qp(problem, layout, matrices, tuple(state_xy), ops, vertical_plan)


def build_stage2_unknown(vertical_plan: VerticalPlan, state_xy, schedule: SupportSchedule,
                         weights: Stage2Weights, kin_refs: KinematicRefs, model: RobotModel,
                         joint_state: JointState, params: CentroidalParams,
                         matrices: PreviewMatrices, contact_free=None) -> Stage2Qp:
    """Balance rows ``lower <= zmp_lipm + dz <= upper``.

    ``contact_free`` is an optional boolean mask over the horizon; on those
    steps the slack is pinned to the shift produced by vertical acceleration
    alone, i.e. no contact force is allowed there.
    """
    _check_inputs(vertical_plan, state_xy, schedule, matrices)
    if not weights.delta > 0:
        raise ValueError("the slack weight must be positive when the contact force is unknown")
    N = matrices.steps
    ops = build_zmp_preview([lipm_coefficients(h, params.gravity) for h in vertical_plan.heights], matrices)
    layout = Stage2Layout(N, model.n_velocity, has_delta=True)
    zmp_rows = []
    for axis in range(2):
        A = np.zeros((N, layout.size))
        A[:, layout.jerk(axis)] = ops.zmp_input
        A[:, layout.delta(axis)] = np.eye(N)
        free = ops.zmp_state @ state_xy[axis].as_array()
        zmp_rows.append((A, schedule.zmp_lower[:, axis] - free, schedule.zmp_upper[:, axis] - free))

    extra = None
    if contact_free is not None:
        mask = np.asarray(contact_free, dtype=bool).reshape(N)
        rows, rhs = [], []
        for i in np.flatnonzero(mask):
            kappa = acceleration_shift_gain(params, vertical_plan.heights[i], vertical_plan.accelerations[i])
            for axis in range(2):
                row = np.zeros(layout.size)
                row[layout.delta(axis).start + i] = 1.0
                row[layout.jerk(axis)] = -kappa * matrices.acc_input[i]
                rows.append(row)
                rhs.append(kappa * matrices.acc_state[i] @ state_xy[axis].as_array())
        extra = (np.array(rows).reshape(-1, layout.size), np.array(rhs))
    problem = _assemble(layout, matrices, state_xy, vertical_plan, schedule, weights,
                        kin_refs, model, joint_state, zmp_rows, extra)
    return Stage2Qp(problem, layout, matrices, tuple(state_xy), ops, vertical_plan)


def solve_stage2(qp: Stage2Qp, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> Stage2Solution:
    sol = solve_qp(qp.problem, tol, max_iter)
    return decode_stage2(qp, sol)


def decode_stage2(qp: Stage2Qp, sol: QpSolution) -> Stage2Solution:
    layout, matrices = qp.layout, qp.matrices
    x = sol.primal
    N = layout.steps
    jerks = np.column_stack([x[layout.jerk(0)], x[layout.jerk(1)]])
    delta = (np.column_stack([x[layout.delta(0)], x[layout.delta(1)]])
             if layout.has_delta else np.zeros((N, 2)))
    pos, vel, acc, zmp = (np.zeros((N, 2)) for _ in range(4))
    for axis in range(2):
        pos[:, axis], vel[:, axis], acc[:, axis] = matrices.predict(qp.state_xy[axis], jerks[:, axis])
        zmp[:, axis] = qp.zmp_ops.predict(qp.state_xy[axis], jerks[:, axis], axis) + delta[:, axis]
    return Stage2Solution(
        jerks_xy=jerks, delta_z=delta, qdot=x[layout.qdot].copy(), predicted_zmp=zmp,
        com_xy=pos, com_vel_xy=vel, com_acc_xy=acc, status=sol.status,
        objective=sol.objective, qp=sol,
    )
