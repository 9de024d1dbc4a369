"""Contact selection and force planning for a requested ZMP-shift trajectory.

For a fixed contact point the tangential force is an affine function of the
vertical force (see :func:`zmp.tangential_force_map`), so each candidate
reduces to a small convex QP in the vertical forces.  Exactly one candidate
is chosen, which makes enumerating the per-candidate QPs equivalent to the
mixed-integer program with one binary per candidate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContactInfeasibleError, StructuralError
from .qp import DEFAULT_MAX_ITER, DEFAULT_TOL, QpProblem, solve_qp
from .zmp import CentroidalParams, acceleration_shift_gain, tangential_force_map

ZERO_DEMAND_TOL = 1e-10
UNLOAD_MARGIN = 1e-6


@dataclass(frozen=True)
class ContactCandidate:
    id: str
    point: np.ndarray
    normal: np.ndarray
    mu: float
    weight: float = 0.0
    reachable: bool = True

    def __post_init__(self):
        p = np.asarray(self.point, dtype=float).reshape(3)
        nrm = np.asarray(self.normal, dtype=float).reshape(3)
        if abs(np.linalg.norm(nrm) - 1.0) > 1e-9:
            raise ValueError(f"candidate {self.id}: normal must be a unit vector")
        if not self.mu > 0:
            raise ValueError(f"candidate {self.id}: mu must be positive")
        if self.weight < 0:
            raise ValueError(f"candidate {self.id}: weight must be nonnegative")
        if not p[2] > 0:
            raise ValueError(f"candidate {self.id}: contact point must lie above the feet plane")
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "normal", nrm)

    @property
    def pyramid(self) -> "FrictionPyramid":
        return friction_pyramid(self.normal, self.mu)


@dataclass(frozen=True)
class FrictionPyramid:
    """Four half-spaces ``rows @ f <= 0``; tangential bound mu/sqrt(2) per axis,
    which lies inside the Coulomb cone."""

    rows: np.ndarray
    normal: np.ndarray
    mu: float


def tangent_basis(normal) -> tuple[np.ndarray, np.ndarray]:
    n = np.asarray(normal, dtype=float)
    ref = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = ref - (ref @ n) * n
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(n, t1)


def friction_pyramid(normal, mu: float) -> FrictionPyramid:
    n = np.asarray(normal, dtype=float)
    t1, t2 = tangent_basis(n)
    k = mu / np.sqrt(2.0)
    rows = np.array([t1 - k * n, -t1 - k * n, t2 - k * n, -t2 - k * n])
    return FrictionPyramid(rows, n, float(mu))


def friction_check(pyramid: FrictionPyramid, force) -> tuple[bool, float]:
    residual = pyramid.rows @ np.asarray(force, dtype=float)
    worst = float(max(np.max(residual), 0.0))
    return worst == 0.0, worst


@dataclass(frozen=True)
class ContactDecision:
    selected: str
    candidate: ContactCandidate
    fz_trajectory: np.ndarray
    f_xy_trajectory: np.ndarray
    objective: float
    evaluations: dict = field(default_factory=dict)

    @property
    def forces(self) -> np.ndarray:
        return np.column_stack([self.f_xy_trajectory, self.fz_trajectory])


def contact_demand(params: CentroidalParams, delta_z, coms, com_accs) -> np.ndarray:
    """Part of the requested slack not explained by vertical acceleration."""
    dz = np.asarray(delta_z, dtype=float).reshape(-1, 2)
    out = np.empty_like(dz)
    for i, (c, a) in enumerate(zip(coms, com_accs)):
        out[i] = dz[i] - acceleration_shift_gain(params, c[2], a[2]) * np.asarray(a[:2])
    return out


def _candidate_problem(candidate, delta_z, coms, com_accs, params):
    dz = np.asarray(delta_z, dtype=float).reshape(-1, 2)
    N = dz.shape[0]
    demand = contact_demand(params, dz, coms, com_accs)
    active = np.flatnonzero(np.max(np.abs(demand), axis=1) > ZERO_DEMAND_TOL)
    slopes = np.zeros((N, 2))
    offsets = np.zeros((N, 2))
    for i in active:
        slopes[i], offsets[i] = tangential_force_map(params, coms[i], com_accs[i], candidate.point, dz[i])
    if active.size == 0:
        return None, active, slopes, offsets
    rows = candidate.pyramid.rows
    k = active.size
    A = np.zeros((4 * k, k))
    upper = np.zeros(4 * k)
    for col, i in enumerate(active):
        A[4 * col:4 * col + 4, col] = rows[:, :2] @ slopes[i] + rows[:, 2]
        upper[4 * col:4 * col + 4] = -rows[:, :2] @ offsets[i]
    max_fz = np.array([
        params.mass * (params.gravity + com_accs[i][2]) * (1.0 - UNLOAD_MARGIN) for i in active
    ])
    problem = QpProblem(
        2.0 * np.eye(k), np.zeros(k),
        ineq_matrix=A, ineq_upper=upper,
        var_lower=np.zeros(k), var_upper=max_fz,
    )
    return problem, active, slopes, offsets


def evaluate_candidate(candidate: ContactCandidate, delta_z, coms, com_accs, params: CentroidalParams,
                       tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> ContactDecision | None:
    """Cheapest force trajectory at one candidate, or ``None`` if none exists."""
    problem, active, slopes, offsets = _candidate_problem(candidate, delta_z, coms, com_accs, params)
    N = slopes.shape[0]
    fz = np.zeros(N)
    if problem is not None:
        sol = solve_qp(problem, tol, max_iter)
        if not sol.ok:
            return None
        fz[active] = sol.primal
        cost = float(sol.primal @ sol.primal)
    else:
        cost = 0.0
    f_xy = np.zeros((N, 2))
    f_xy[active] = slopes[active] * fz[active, None] + offsets[active]
    return ContactDecision(candidate.id, candidate, fz, f_xy, cost + candidate.weight)


def solve_contact_selection(candidates, delta_z, coms, com_accs, params: CentroidalParams,
                            tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> ContactDecision:
    """Choose the reachable candidate whose force plan has the least
    ``sum(f_z**2) + weight``; ties go to the lowest id."""
    candidates = list(candidates)
    if not candidates:
        raise StructuralError("no contact candidates supplied")
    coms = np.asarray(coms, dtype=float)
    com_accs = np.asarray(com_accs, dtype=float)
    dz = np.asarray(delta_z, dtype=float).reshape(-1, 2)
    if coms.shape != (dz.shape[0], 3) or com_accs.shape != coms.shape:
        raise StructuralError("need one CoM position and acceleration per slack step")
    reachable = [c for c in candidates if c.reachable]
    if not reachable:
        raise ContactInfeasibleError("no reachable contact candidate")

    evaluations = {}
    best = None
    for cand in sorted(reachable, key=lambda c: c.id):
        decision = evaluate_candidate(cand, dz, coms, com_accs, params, tol, max_iter)
        evaluations[cand.id] = None if decision is None else decision.objective
        if decision is None:
            continue
        if best is None or decision.objective < best.objective - 1e-12 * max(1.0, abs(best.objective)):
            best = decision
    if best is None:
        raise ContactInfeasibleError(
            "no candidate realizes the requested ZMP shift within its friction pyramid"
        )
    return ContactDecision(best.selected, best.candidate, best.fz_trajectory,
                           best.f_xy_trajectory, best.objective, evaluations)
