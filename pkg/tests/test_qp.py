import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from instances import random_problem
from oracles import brute_force_qp, expand_rows
from wholebody_mpc.errors import ModelError, StructuralError
from wholebody_mpc.qp import INFEASIBLE, OPTIMAL, QpProblem, kkt_residual, solve_qp


# -- oracle cases -------------------------------------------------------------

def test_unconstrained_norm_minimum():
    sol = solve_qp(QpProblem(2 * np.eye(2), np.zeros(2)))
    assert sol.status == OPTIMAL
    np.testing.assert_allclose(sol.primal, [0, 0], atol=1e-12)
    assert sol.objective == pytest.approx(0.0, abs=1e-12)


def test_active_lower_bound_multiplier():
    # stationarity 2 x1 - lam = 0 at x1 = 1
    problem = QpProblem(2 * np.eye(2), np.zeros(2), var_lower=[1.0, -np.inf])
    sol = solve_qp(problem)
    np.testing.assert_allclose(sol.primal, [1, 0], atol=1e-10)
    assert sol.dual_box[0] == pytest.approx(2.0, abs=1e-9)
    assert kkt_residual(problem, sol) <= 1e-8


def test_equality_constrained_closed_form():
    # (x1-1)^2 + (x2-2)^2 with x1 + x2 = 1
    problem = QpProblem(2 * np.eye(2), [-2.0, -4.0], eq_matrix=[[1.0, 1.0]], eq_rhs=[1.0])
    sol = solve_qp(problem)
    np.testing.assert_allclose(sol.primal, [0, 1], atol=1e-10)


def test_kkt_residual_zero_and_perturbed():
    zero = QpProblem(2 * np.eye(2), np.zeros(2))
    assert kkt_residual(zero, solve_qp(zero)) == 0.0

    problem = QpProblem(2 * np.eye(2), np.zeros(2), var_lower=[1.0, -np.inf])
    sol = solve_qp(problem)
    sol.primal = sol.primal + np.array([1e-3, 0.0])
    assert kkt_residual(problem, sol) >= 1e-3


@pytest.mark.parametrize("seed", range(40))
def test_matches_exhaustive_active_sets(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 12))
    problem = random_problem(rng, n, int(rng.integers(0, 6)), with_eq=seed % 3 == 0)
    A, b = expand_rows(problem)
    ref = brute_force_qp(problem.hessian, problem.gradient, A, b, problem.eq_matrix, problem.eq_rhs)
    sol = solve_qp(problem)
    assert sol.ok
    assert sol.objective == pytest.approx(ref[1], abs=1e-6)
    assert kkt_residual(problem, sol) <= 1e-8


# -- status and errors --------------------------------------------------------

def test_contradictory_bounds_are_infeasible():
    problem = QpProblem(np.eye(1), [0.0], ineq_matrix=[[1.0], [1.0]],
                        ineq_lower=[1.0, -np.inf], ineq_upper=[np.inf, 0.0])
    assert solve_qp(problem).status == INFEASIBLE


def test_inconsistent_equalities_are_infeasible():
    problem = QpProblem(np.eye(2), np.zeros(2), eq_matrix=[[1, 1], [1, 1]], eq_rhs=[0, 1])
    assert solve_qp(problem).status == INFEASIBLE


def test_shape_mismatch():
    with pytest.raises(StructuralError):
        QpProblem(np.eye(2), np.zeros(3))
    with pytest.raises(StructuralError):
        QpProblem(np.eye(2), np.zeros(2), ineq_matrix=np.ones((1, 3)))


def test_asymmetric_hessian_rejected():
    with pytest.raises(ModelError):
        QpProblem([[1.0, 1.0], [0.0, 1.0]], np.zeros(2))


def test_nonconvex_hessian_rejected():
    with pytest.raises(ModelError):
        solve_qp(QpProblem(np.diag([1.0, -1.0]), np.zeros(2)))


def test_redundant_active_rows():
    # the same half-space written three times
    A = np.array([[1.0, 1.0]] * 3)
    problem = QpProblem(np.eye(2), [-1.0, -1.0], ineq_matrix=A, ineq_upper=[1.0, 1.0, 1.0])
    sol = solve_qp(problem)
    np.testing.assert_allclose(sol.primal, [0.5, 0.5], atol=1e-9)
    assert kkt_residual(problem, sol) <= 1e-8


# -- properties ---------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), factor=st.floats(1e-3, 1e3))
def test_cost_scaling_leaves_minimizer_unchanged(seed, factor):
    rng = np.random.default_rng(seed)
    problem = random_problem(rng, int(rng.integers(1, 8)), int(rng.integers(0, 6)))
    x1 = solve_qp(problem).primal
    x2 = solve_qp(problem.scaled(factor)).primal
    np.testing.assert_allclose(x1, x2, atol=1e-7 * max(1.0, np.abs(x1).max()))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_solution_satisfies_kkt(seed):
    rng = np.random.default_rng(seed)
    problem = random_problem(rng, int(rng.integers(1, 20)), int(rng.integers(0, 10)), with_eq=True)
    sol = solve_qp(problem)
    assert sol.ok
    assert kkt_residual(problem, sol) <= 1e-8
