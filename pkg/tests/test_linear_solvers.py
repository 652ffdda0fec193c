import numpy as np
import pytest
import scipy.sparse.linalg
from numpy.testing import assert_allclose

from src.errors import NumericalBreakdown, PreconditionerError
from src.linear_solvers import (QuadraticProblem, SORPreconditioner, SSORPreconditioner, cg_solve,
                                exact_quadratic_step, pcg_solve, richardson_solve, richardson_step, split,
                                ssor_apply)
from src.models.problem_specs import PoissonSpec
from src.problems import poisson2d_assemble

from tests.oracles import spd_matrix


def dense_ssor(A: np.ndarray, omega: float) -> np.ndarray:
    D = np.diag(np.diag(A))
    L = np.tril(A, -1)
    U = np.triu(A, 1)
    M = (D + omega * L) @ np.linalg.inv(D) @ (D + omega * U) / (omega * (2.0 - omega))
    return np.linalg.inv(M)


def test_richardson_scalar_recursion():
    q = QuadraticProblem(np.array([[0.5]]), np.array([1.0]))
    x = richardson_step(q, np.zeros(1))
    assert x[0] == pytest.approx(1.0)
    assert richardson_step(q, x)[0] == pytest.approx(1.5)


def test_richardson_with_exact_inverse_converges_in_one_step(rng):
    A = spd_matrix(rng, 3)
    q = QuadraticProblem(A, rng.standard_normal(3))
    inv = np.linalg.inv(A)
    x = richardson_step(q, np.zeros(3), lambda v: inv @ v)
    assert_allclose(x, np.linalg.solve(A, q.b), atol=1e-12)


def test_richardson_sgs_error_decreases(small_poisson):
    sgs = SSORPreconditioner(small_poisson.A, 1.0)
    exact = scipy.sparse.linalg.spsolve(small_poisson.A.tocsc(), small_poisson.b)

    def energy_error(x):
        e = x - exact
        return float(e @ small_poisson.apply(e))

    x = np.zeros(small_poisson.dimension)
    previous = energy_error(x)
    for _ in range(50):
        x = richardson_step(small_poisson, x, sgs)
        current = energy_error(x)
        assert current < previous
        previous = current


@pytest.mark.parametrize("omega", [1.0, 1.5, 0.7])
def test_ssor_matches_dense_formula(rng, omega):
    A = spd_matrix(rng, 20)
    P = SSORPreconditioner(A, omega).dense()
    assert_allclose(P, dense_ssor(A, omega), atol=1e-11)
    assert_allclose(P, P.T, atol=1e-11)
    assert np.linalg.eigvalsh((P + P.T) / 2).min() > 0.0


def test_ssor_apply_on_diagonal_operator(rng):
    d = rng.uniform(1.0, 3.0, 5)
    A = np.diag(d)
    D, L, U = split(A)
    v = rng.standard_normal(5)
    assert_allclose(ssor_apply(D, L, U, 1.0, v), v / d)
    assert_allclose(ssor_apply(D, L, U, 1.4, v), 1.4 * 0.6 * v / d)


def test_ssor_rejects_bad_setup(rng):
    A = spd_matrix(rng, 4)
    with pytest.raises(PreconditionerError):
        SSORPreconditioner(A, 2.0)
    with pytest.raises(PreconditionerError):
        SSORPreconditioner(A, 0.0)
    singular = A.copy()
    singular[2, 2] = 0.0
    with pytest.raises(PreconditionerError):
        SSORPreconditioner(singular, 1.0)


def test_sor_preconditioner_dense(rng):
    A = spd_matrix(rng, 6)
    sor = SORPreconditioner(A, 1.2)
    v = rng.standard_normal(6)
    D = np.diag(np.diag(A))
    expected = 1.2 * np.linalg.solve(D + 1.2 * np.tril(A, -1), v)
    assert_allclose(sor(v), expected, atol=1e-12)
    assert sor.name == "sor(1.2)"
    assert SORPreconditioner(A).name == "gs"


def test_cg_identity_converges_in_one_iteration(rng):
    q = QuadraticProblem(np.eye(5), rng.standard_normal(5))
    result = cg_solve(q, np.zeros(5))
    assert result.converged
    assert result.iterations == 1


def test_cg_distinct_eigenvalue_count_bounds_iterations(rng):
    d = np.repeat([1.0, 4.0, 9.0], 10)
    q = QuadraticProblem(np.diag(d), rng.standard_normal(30))
    result = cg_solve(q, np.zeros(30), tol=1e-10)
    assert result.converged
    assert result.iterations <= 4


def test_pcg_solves_spd_problem(spd_problem):
    sgs = SSORPreconditioner(spd_problem.A, 1.0)
    result = pcg_solve(spd_problem, np.zeros(spd_problem.dimension), sgs, tol=1e-10)
    assert result.converged
    assert_allclose(result.x, np.linalg.solve(spd_problem.A, spd_problem.b), atol=1e-8)
    assert [h["k"] for h in result.history] == list(range(1, result.iterations + 1))


def test_pcg_zero_iteration_cap(spd_problem):
    result = pcg_solve(spd_problem, np.zeros(spd_problem.dimension), maxit=0)
    assert not result.converged
    assert result.history == []


def test_pcg_rejects_indefinite_operator():
    q = QuadraticProblem(-np.eye(3), np.ones(3))
    with pytest.raises(NumericalBreakdown):
        cg_solve(q, np.zeros(3))


def test_richardson_solve_converges(rng):
    q = QuadraticProblem(spd_matrix(rng, 20) + 200.0 * np.eye(20), rng.standard_normal(20))
    result = richardson_solve(q, np.zeros(20), SSORPreconditioner(q.A, 1.0), tol=1e-8, maxit=500)
    assert result.converged
    assert q.scaled_residual(result.x) < 1e-8


def test_exact_quadratic_step(rng, spd_problem):
    q1 = QuadraticProblem(np.eye(3), np.ones(3))
    x = np.zeros(3)
    assert exact_quadratic_step(q1, x, q1.residual(x)) == pytest.approx(1.0)
    q2 = QuadraticProblem(2.0 * np.eye(3), np.ones(3))
    assert exact_quadratic_step(q2, x, q2.residual(x)) == pytest.approx(0.5)

    x = rng.standard_normal(spd_problem.dimension)
    p = rng.standard_normal(spd_problem.dimension)
    alpha = exact_quadratic_step(spd_problem, x, p)
    scan = np.linspace(alpha - 0.1 * abs(alpha), alpha + 0.1 * abs(alpha), 41)
    values = [spd_problem.objective(x + t * p) for t in scan]
    assert spd_problem.objective(x + alpha * p) <= min(values) + 1e-12 * abs(min(values))


def test_exact_quadratic_step_nonpositive_curvature():
    q = QuadraticProblem(-np.eye(2), np.ones(2))
    with pytest.raises(NumericalBreakdown):
        exact_quadratic_step(q, np.zeros(2), np.ones(2))


def test_quadratic_problem_validation(rng):
    with pytest.raises(ValueError):
        QuadraticProblem(np.eye(3), np.ones(4))
    q = QuadraticProblem(spd_matrix(rng, 8), rng.standard_normal(8))
    assert q.is_symmetric(rng)
    assert not QuadraticProblem(np.triu(np.ones((8, 8))), np.ones(8)).is_symmetric(rng)


def test_poisson_operator_is_symmetric(small_poisson, rng):
    assert small_poisson.is_symmetric(rng)
    assert small_poisson.dimension == 81


@pytest.mark.slow
def test_poisson_preconditioner_ordering():
    q = poisson2d_assemble(PoissonSpec(h=0.02))
    x0 = np.zeros(q.dimension)
    cg = cg_solve(q, x0, tol=1e-10, maxit=5000)
    sgs = pcg_solve(q, x0, SSORPreconditioner(q.A, 1.0), tol=1e-10, maxit=5000)
    ssor = pcg_solve(q, x0, SSORPreconditioner(q.A, 1.9), tol=1e-10, maxit=5000)
    assert cg.converged and sgs.converged and ssor.converged
    assert ssor.iterations < sgs.iterations < cg.iterations
    direct = scipy.sparse.linalg.spsolve(q.A.tocsc(), q.b)
    assert_allclose(ssor.x, direct, atol=1e-8 * np.abs(direct).max())
