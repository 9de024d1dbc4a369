"""Dense convex QP solver.

Problems have the form::

    minimize    1/2 x' H x + g' x
    subject to  E x = e
                l <= A x <= u
                lb <= x <= ub

and are solved with a dual active-set method in the style of Goldfarb and
Idnani: start from the unconstrained minimizer and add the most violated
constraint until none is left, dropping constraints whose multiplier would
turn negative.  The final active set is re-solved as a single KKT system
with the unregularized Hessian, which removes the accumulated round-off.

Multiplier sign convention (shared with :func:`kkt_residual`)::

    H x + g = E' nu + A' lam + lam_box

so a multiplier is positive on an active lower bound and negative on an
active upper bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .errors import ModelError, StructuralError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iter"

HESSIAN_REGULARIZATION = 1e-9
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200


def _as_matrix(value, n: int, name: str) -> np.ndarray:
    if value is None:
        return np.zeros((0, n))
    mat = np.atleast_2d(np.asarray(value, dtype=float))
    if mat.size == 0:
        return np.zeros((0, n))
    if mat.ndim != 2 or mat.shape[1] != n:
        raise StructuralError(f"{name} must have {n} columns, got shape {mat.shape}")
    return mat


def _as_vector(value, length: int, fill: float, name: str) -> np.ndarray:
    if value is None:
        return np.full(length, fill)
    vec = np.asarray(value, dtype=float).reshape(-1)
    if vec.shape[0] != length:
        raise StructuralError(f"{name} must have length {length}, got {vec.shape[0]}")
    return vec


@dataclass
class QpProblem:
    """Dense QP data; ``None`` stands for an absent constraint block."""

    hessian: np.ndarray
    gradient: np.ndarray
    eq_matrix: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None
    ineq_matrix: np.ndarray | None = None
    ineq_lower: np.ndarray | None = None
    ineq_upper: np.ndarray | None = None
    var_lower: np.ndarray | None = None
    var_upper: np.ndarray | None = None

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.hessian, dtype=float))
        g = np.asarray(self.gradient, dtype=float).reshape(-1)
        n = g.shape[0]
        if H.shape != (n, n):
            raise StructuralError(f"hessian shape {H.shape} does not match gradient length {n}")
        scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
        if np.max(np.abs(H - H.T), initial=0.0) > 1e-12 * scale:
            raise ModelError("hessian is not symmetric")
        self.hessian, self.gradient = H, g

        self.eq_matrix = _as_matrix(self.eq_matrix, n, "eq_matrix")
        self.eq_rhs = _as_vector(self.eq_rhs, self.eq_matrix.shape[0], 0.0, "eq_rhs")
        self.ineq_matrix = _as_matrix(self.ineq_matrix, n, "ineq_matrix")
        m = self.ineq_matrix.shape[0]
        self.ineq_lower = _as_vector(self.ineq_lower, m, -np.inf, "ineq_lower")
        self.ineq_upper = _as_vector(self.ineq_upper, m, np.inf, "ineq_upper")
        self.var_lower = _as_vector(self.var_lower, n, -np.inf, "var_lower")
        self.var_upper = _as_vector(self.var_upper, n, np.inf, "var_upper")

        for name in ("hessian", "gradient", "eq_matrix", "eq_rhs", "ineq_matrix"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ModelError(f"{name} contains non-finite entries")
        for name in ("ineq_lower", "ineq_upper", "var_lower", "var_upper"):
            if np.any(np.isnan(getattr(self, name))):
                raise ModelError(f"{name} contains NaN")

    @property
    def n(self) -> int:
        return self.gradient.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.hessian @ x + self.gradient @ x)

    def scaled(self, factor: float) -> "QpProblem":
        """Same feasible set, cost multiplied by ``factor``."""
        return QpProblem(
            self.hessian * factor, self.gradient * factor,
            self.eq_matrix, self.eq_rhs,
            self.ineq_matrix, self.ineq_lower, self.ineq_upper,
            self.var_lower, self.var_upper,
        )


@dataclass
class QpSolution:
    primal: np.ndarray
    dual_eq: np.ndarray
    dual_ineq: np.ndarray
    dual_box: np.ndarray
    status: str
    objective: float
    iterations: int = 0
    active: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def kkt_residual(problem: QpProblem, solution: QpSolution) -> float:
    """Largest infinity-norm over stationarity, primal feasibility, dual
    feasibility and complementarity."""
    x = np.asarray(solution.primal, dtype=float)
    if x.shape != (problem.n,):
        raise StructuralError(f"primal has shape {x.shape}, expected ({problem.n},)")
    nu = np.asarray(solution.dual_eq, dtype=float)
    lam = np.asarray(solution.dual_ineq, dtype=float)
    lam_box = np.asarray(solution.dual_box, dtype=float)
    if nu.shape != problem.eq_rhs.shape or lam.shape != problem.ineq_lower.shape:
        raise StructuralError("multiplier lengths do not match the constraint blocks")
    if lam_box.shape != (problem.n,):
        raise StructuralError("box multipliers must have one entry per variable")

    E, A = problem.eq_matrix, problem.ineq_matrix
    stat = problem.hessian @ x + problem.gradient - E.T @ nu - A.T @ lam - lam_box
    parts = [np.max(np.abs(stat), initial=0.0)]

    parts.append(np.max(np.abs(E @ x - problem.eq_rhs), initial=0.0))
    for vals, lo, up, mult in (
        (A @ x, problem.ineq_lower, problem.ineq_upper, lam),
        (x, problem.var_lower, problem.var_upper, lam_box),
    ):
        parts.append(np.max(lo - vals, initial=0.0))
        parts.append(np.max(vals - up, initial=0.0))
        pos, neg = np.maximum(mult, 0.0), np.maximum(-mult, 0.0)
        parts.append(np.max(np.where(np.isfinite(lo), 0.0, pos), initial=0.0))
        parts.append(np.max(np.where(np.isfinite(up), 0.0, neg), initial=0.0))
        with np.errstate(invalid="ignore"):
            low_gap = np.where(np.isfinite(lo), np.abs(vals - lo), 0.0)
            up_gap = np.where(np.isfinite(up), np.abs(up - vals), 0.0)
        parts.append(np.max(pos * low_gap, initial=0.0))
        parts.append(np.max(neg * up_gap, initial=0.0))
    return float(max(parts))


class _Constraints:
    """All constraints rewritten as equalities ``E x = e`` and ``C x >= c``.

    ``*_tags`` map each row back to (block, index, sign) so multipliers can
    be scattered into the caller's layout.
    """

    def __init__(self, problem: QpProblem):
        n = problem.n
        eq_rows, eq_rhs, eq_tags = [], [], []
        ge_rows, ge_rhs, ge_tags = [], [], []
        self.contradiction = False

        for i, row in enumerate(problem.eq_matrix):
            eq_rows.append(row)
            eq_rhs.append(problem.eq_rhs[i])
            eq_tags.append(("eq", i))

        eye = np.eye(n)
        blocks = (
            ("ineq", problem.ineq_matrix, problem.ineq_lower, problem.ineq_upper),
            ("box", eye, problem.var_lower, problem.var_upper),
        )
        for block, mat, lower, upper in blocks:
            for i in range(mat.shape[0]):
                lo, up = lower[i], upper[i]
                if lo > up:
                    self.contradiction = True
                if np.isfinite(lo) and np.isfinite(up) and lo == up:
                    eq_rows.append(mat[i])
                    eq_rhs.append(lo)
                    eq_tags.append((block, i))
                    continue
                if np.isfinite(lo):
                    ge_rows.append(mat[i])
                    ge_rhs.append(lo)
                    ge_tags.append((block, i, 1.0))
                if np.isfinite(up):
                    ge_rows.append(-mat[i])
                    ge_rhs.append(-up)
                    ge_tags.append((block, i, -1.0))

        self.E = np.array(eq_rows).reshape(-1, n)
        self.e = np.array(eq_rhs, dtype=float)
        self.eq_tags = eq_tags
        self.C = np.array(ge_rows).reshape(-1, n)
        self.c = np.array(ge_rhs, dtype=float)
        self.ge_tags = ge_tags

    def scatter(self, problem: QpProblem, eq_mult, ge_mult):
        out = {
            "eq": np.zeros(problem.eq_rhs.shape[0]),
            "ineq": np.zeros(problem.ineq_lower.shape[0]),
            "box": np.zeros(problem.n),
        }
        for (block, i), v in zip(self.eq_tags, eq_mult):
            out[block][i] += v
        for (block, i, sign), v in zip(self.ge_tags, ge_mult):
            out[block][i] += sign * v
        return out["eq"], out["ineq"], out["box"]


def _factor(H: np.ndarray) -> np.ndarray:
    """Inverse Cholesky factor of the regularized Hessian."""
    n = H.shape[0]
    # Proportional to each diagonal entry, so scaling the cost leaves the
    # iterates unchanged; variables absent from the cost get the largest one.
    diag = np.abs(np.diag(H))
    scale = float(np.max(diag, initial=0.0)) or 1.0
    reg = HESSIAN_REGULARIZATION * np.where(diag > 0, diag, scale)
    Hr = H + np.diag(reg)
    try:
        L = cholesky(Hr, lower=True)
    except np.linalg.LinAlgError:
        min_eig = float(np.linalg.eigvalsh(Hr)[0])
        if min_eig < -1e-9 * scale:
            raise ModelError(f"hessian is not positive semidefinite (eigenvalue {min_eig:.3e})")
        L = cholesky(Hr + (abs(min_eig) + HESSIAN_REGULARIZATION * scale) * np.eye(n), lower=True)
    return solve_triangular(L, np.eye(n), lower=True)


def solve_qp(problem: QpProblem, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> QpSolution:
    """Solve ``problem``; status is one of ``optimal``, ``infeasible``, ``max_iter``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    n = problem.n
    cons = _Constraints(problem)
    Linv = _factor(problem.hessian)
    g = problem.gradient

    def finish(x, act_eq, u_eq, act_ge, u_ge, status, iterations):
        eq_mult = np.zeros(len(cons.e))
        ge_mult = np.zeros(len(cons.c))
        eq_mult[act_eq] = u_eq
        ge_mult[act_ge] = u_ge
        dual_eq, dual_ineq, dual_box = cons.scatter(problem, eq_mult, ge_mult)
        return QpSolution(
            primal=x, dual_eq=dual_eq, dual_ineq=dual_ineq, dual_box=dual_box,
            status=status, objective=problem.objective(x), iterations=iterations,
            active=[cons.ge_tags[i] for i in act_ge],
        )

    x = -Linv.T @ (Linv @ g)
    if cons.contradiction:
        return finish(x, [], [], [], [], INFEASIBLE, 0)

    # Active set: normals (with sign for equalities), multipliers, origin.
    normals: list[np.ndarray] = []
    mults: list[float] = []
    origin: list[tuple[str, int, float]] = []

    def direction(normal):
        w = Linv @ normal
        if normals:
            B = Linv @ np.column_stack(normals)
            r, *_ = np.linalg.lstsq(B, w, rcond=None)
            resid = w - B @ r
        else:
            r = np.zeros(0)
            resid = w
        return w, r, resid

    def dependent(w, resid):
        return resid @ resid <= 1e-20 * max(1.0, w @ w)

    iterations = 0
    for j in range(len(cons.e)):
        normal, rhs, sign = cons.E[j], cons.e[j], 1.0
        s = normal @ x - rhs
        if s > 0:
            normal, rhs, sign, s = -normal, -rhs, -1.0, -s
        w, r, resid = direction(normal)
        if dependent(w, resid):
            if -s <= tol * max(1.0, abs(rhs)):
                continue
            return finish(x, [], [], [], [], INFEASIBLE, iterations)
        t = -s / (resid @ resid)
        x = x + t * (Linv.T @ resid)
        mults = [u - t * rk for u, rk in zip(mults, r)] + [t]
        normals.append(normal)
        origin.append(("E", j, sign))
        iterations += 1

    viol_scale = 1e-3 * tol * np.maximum(1.0, np.abs(cons.c))
    ignored: set[int] = set()
    status = OPTIMAL
    while True:
        active_ge = {idx for kind, idx, _ in origin if kind == "C"}
        s_all = cons.C @ x - cons.c
        candidates = [
            i for i in range(len(cons.c))
            if i not in active_ge and i not in ignored and s_all[i] < -viol_scale[i]
        ]
        if not candidates:
            break
        p = min(candidates, key=lambda i: s_all[i] / max(1.0, abs(cons.c[i])))
        normal = cons.C[p]
        u_p = 0.0
        while True:
            if iterations >= max_iter:
                status = MAX_ITER
                break
            iterations += 1
            w, r, resid = direction(normal)
            s_p = normal @ x - cons.c[p]
            z_zero = dependent(w, resid)

            t1, drop = np.inf, None
            for k, (kind, _, _) in enumerate(origin):
                if kind == "C" and r[k] > 1e-14 * max(1.0, np.max(np.abs(r))):
                    ratio = mults[k] / r[k]
                    if ratio < t1:
                        t1, drop = ratio, k
            t2 = np.inf if z_zero else -s_p / (resid @ resid)

            if not np.isfinite(t1) and not np.isfinite(t2):
                if -s_p <= tol * max(1.0, abs(cons.c[p])):
                    ignored.add(p)
                    break
                status = INFEASIBLE
                break
            t = min(t1, t2)
            if np.isfinite(t2):
                x = x + t * (Linv.T @ resid)
            mults = [u - t * rk for u, rk in zip(mults, r)]
            u_p += t
            if t2 <= t1:
                normals.append(normal)
                mults.append(u_p)
                origin.append(("C", p, 1.0))
                break
            del normals[drop], mults[drop], origin[drop]
        if status != OPTIMAL:
            break

    x, mults = _polish(problem, cons, x, normals, mults, origin, status)

    act_eq = [j for kind, j, _ in origin if kind == "E"]
    u_eq = [u * sign for (kind, _, sign), u in zip(origin, mults) if kind == "E"]
    act_ge = [i for kind, i, _ in origin if kind == "C"]
    u_ge = [u for (kind, _, _), u in zip(origin, mults) if kind == "C"]
    return finish(x, act_eq, u_eq, act_ge, u_ge, status, iterations)


def _polish(problem, cons, x, normals, mults, origin, status):
    """Re-solve the final active set as one KKT system with the exact Hessian."""
    if status != OPTIMAL:
        return x, mults
    n = problem.n
    N = np.column_stack(normals) if normals else np.zeros((n, 0))
    q = N.shape[1]
    rhs_act = np.array([
        (cons.e[j] * sign) if kind == "E" else cons.c[j] for kind, j, sign in origin
    ])
    K = np.zeros((n + q, n + q))
    K[:n, :n] = problem.hessian
    K[:n, n:] = -N
    K[n:, :n] = N.T
    try:
        sol = np.linalg.solve(K, np.concatenate([-problem.gradient, rhs_act]))
    except np.linalg.LinAlgError:
        return x, mults
    if not np.all(np.isfinite(sol)):
        return x, mults
    x_new, u_new = sol[:n], sol[n:]

    def score(xv, uv):
        stat = problem.hessian @ xv + problem.gradient - N @ uv
        feas_eq = np.abs(cons.E @ xv - cons.e) if len(cons.e) else np.zeros(0)
        feas_ge = np.maximum(cons.c - cons.C @ xv, 0.0) if len(cons.c) else np.zeros(0)
        dual = [max(-u, 0.0) for (kind, _, _), u in zip(origin, uv) if kind == "C"]
        return max(
            np.max(np.abs(stat), initial=0.0), np.max(feas_eq, initial=0.0),
            np.max(feas_ge, initial=0.0), max(dual, default=0.0),
        )

    if score(x_new, u_new) <= score(x, np.array(mults)):
        return x_new, list(u_new)
    return x, mults
