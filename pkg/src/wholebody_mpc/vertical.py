"""Minimum-jerk CoM height planning inside the kinematic admissible band."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleTaskError, StructuralError
from .preview import AxisState, PreviewMatrices
from .qp import DEFAULT_MAX_ITER, DEFAULT_TOL, QpProblem, solve_qp

CENTERING_WEIGHT = 1e-4


@dataclass(frozen=True)
class VerticalTask:
    """End-effector height reference over the horizon and the admissible distances.

    ``reference[i]`` applies to horizon step i + 1.
    """

    reference: np.ndarray
    reach: float
    com_floor: float
    com_ceiling: float

    def __post_init__(self):
        ref = np.asarray(self.reference, dtype=float).reshape(-1)
        if not np.all(np.isfinite(ref)):
            raise ValueError("vertical reference must be finite")
        if not self.reach > 0:
            raise ValueError("reach must be positive")
        if not self.com_floor < self.com_ceiling:
            raise ValueError("com_floor must be below com_ceiling")
        object.__setattr__(self, "reference", ref)

    def band(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-step admissible CoM heights ``[r - d, r + d] & [floor, ceiling]``."""
        lower = np.maximum(self.reference - self.reach, self.com_floor)
        upper = np.minimum(self.reference + self.reach, self.com_ceiling)
        return lower, upper


@dataclass(frozen=True)
class VerticalPlan:
    heights: np.ndarray
    velocities: np.ndarray
    accelerations: np.ndarray
    jerks: np.ndarray


def build_stage1_qp(task: VerticalTask, state: AxisState, matrices: PreviewMatrices,
                    centering: bool = False) -> QpProblem:
    N = matrices.steps
    if task.reference.shape[0] != N:
        raise StructuralError(f"reference has {task.reference.shape[0]} samples, horizon has {N}")
    lower, upper = task.band()
    empty = np.flatnonzero(lower > upper)
    if empty.size:
        k = int(empty[0])
        raise InfeasibleTaskError(
            f"admissible CoM height interval is empty at horizon step {k}: "
            f"[{lower[k]:.4f}, {upper[k]:.4f}]", step=k,
        )

    free = matrices.pos_state @ state.as_array()
    H = 2.0 * np.eye(N)
    g = np.zeros(N)
    if centering:
        mid = 0.5 * (lower + upper)
        P = matrices.pos_input
        H = H + 2.0 * CENTERING_WEIGHT * P.T @ P
        g = g + 2.0 * CENTERING_WEIGHT * P.T @ (free - mid)
    return QpProblem(
        H, g,
        ineq_matrix=matrices.pos_input,
        ineq_lower=lower - free,
        ineq_upper=upper - free,
    )


def solve_stage1(task: VerticalTask, state: AxisState, matrices: PreviewMatrices,
                 centering: bool = False, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER) -> VerticalPlan:
    problem = build_stage1_qp(task, state, matrices, centering)
    sol = solve_qp(problem, tol, max_iter)
    if not sol.ok:
        heights = matrices.pos_state @ state.as_array() + matrices.pos_input @ sol.primal
        lower, upper = task.band()
        violation = np.maximum(lower - heights, heights - upper)
        k = int(np.argmax(violation))
        raise InfeasibleTaskError(f"vertical QP {sol.status}; worst violation at horizon step {k}", step=k)
    jerks = sol.primal
    heights, velocities, accelerations = matrices.predict(state, jerks)
    return VerticalPlan(heights, velocities, accelerations, jerks)
