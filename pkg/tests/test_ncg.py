import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.linear_solvers import SSORPreconditioner, cg_solve, pcg_solve
from src.ncg import NCGState, beta_hat, beta_plain, compute_beta, ncg_step, npncg_step
from src.nonlinear_precond import IdentityPreconditioner, linear_preconditioner
from src.objectives import Objective


def run_ncg(q, handle, rule, form, iterations, objective):
    state = NCGState.initial(objective, handle, np.zeros(q.dimension))
    residuals = []
    for _ in range(iterations):
        state = npncg_step(objective, state, rule, form, "exact-quadratic", quadratic=q)
        residuals.append(q.scaled_residual(state.x))
        if residuals[-1] < 1e-12:
            break
    return state, residuals


def compare_until(reference, candidate, floor=1e-9, rtol=1e-5):
    for ref, got in zip(reference, candidate):
        if ref < floor:
            break
        assert got == pytest.approx(ref, rel=rtol)


def test_first_direction_is_negative_preconditioned_gradient(spd_problem):
    objective = Objective(spd_problem.objective, spd_problem.gradient)
    sgs = SSORPreconditioner(spd_problem.A, 1.0)
    state = NCGState.initial(objective, linear_preconditioner(spd_problem, sgs), np.zeros(spd_problem.dimension))
    assert_allclose(state.p, -sgs(spd_problem.gradient(np.zeros(spd_problem.dimension))))


@pytest.mark.parametrize("rule", ["pr", "hs"])
def test_plain_ncg_with_exact_steps_is_linear_cg(spd_problem, rule):
    objective = Objective(spd_problem.objective, spd_problem.gradient)
    _, residuals = run_ncg(spd_problem, IdentityPreconditioner(objective), rule, "plain", 40, objective)
    cg = cg_solve(spd_problem, np.zeros(spd_problem.dimension), tol=1e-12, maxit=40)
    compare_until([h["residual"] for h in cg.history], residuals)


def test_hat_hs_with_linear_preconditioner_is_pcg(spd_problem):
    objective = Objective(spd_problem.objective, spd_problem.gradient)
    sgs = SSORPreconditioner(spd_problem.A, 1.0)
    _, residuals = run_ncg(spd_problem, linear_preconditioner(spd_problem, sgs), "hs", "hat", 30, objective)
    pcg = pcg_solve(spd_problem, np.zeros(spd_problem.dimension), sgs, tol=1e-12, maxit=30)
    compare_until([h["residual"] for h in pcg.history], residuals)


def test_identity_preconditioner_collapses_forms(rng):
    g_new, g, p = rng.standard_normal((3, 5))
    for rule in ("pr", "hs", "hz"):
        plain = compute_beta(rule, "plain", g_new, g, g_new, g, p)
        assert compute_beta(rule, "tilde", g_new, g, g_new, g, p) == pytest.approx(plain)
        assert compute_beta(rule, "hat", g_new, g, g_new, g, p) == pytest.approx(plain)


def test_beta_formulas_on_crafted_vectors():
    g = np.array([1.0, 0.0, 0.0])
    g_new = np.array([0.0, 2.0, 1.0])
    p = np.array([-1.0, 0.5, 0.0])
    y = g_new - g
    assert beta_plain("pr", g_new, g, p) == pytest.approx(g_new @ y / (g @ g))
    assert beta_plain("hs", g_new, g, p) == pytest.approx(g_new @ y / (y @ p))
    yp = y @ p
    hz = (y - 2.0 * p * (y @ y) / yp) @ g_new / yp
    assert beta_plain("hz", g_new, g, p) == pytest.approx(hz)

    gbar = np.array([0.5, 0.5, 0.0])
    gbar_new = np.array([0.0, 1.0, 0.25])
    ybar = gbar_new - gbar
    assert beta_hat("hs", g_new, g, gbar_new, gbar, p) == pytest.approx(g_new @ ybar / yp)
    assert beta_hat("pr", g_new, g, gbar_new, gbar, p) == pytest.approx(g_new @ ybar / (g @ gbar))
    expected_hz = g_new @ ybar / yp - 2.0 * (p @ g_new) * (y @ ybar) / yp ** 2
    assert beta_hat("hz", g_new, g, gbar_new, gbar, p) == pytest.approx(expected_hz)


def test_beta_zero_denominator_gives_zero():
    z = np.zeros(2)
    assert beta_plain("pr", np.ones(2), z, np.ones(2)) == 0.0
    assert beta_plain("hz", np.ones(2), np.ones(2), np.ones(2)) == 0.0
    with pytest.raises(ValueError):
        compute_beta("fr", "plain", z, z, z, z, z)
    with pytest.raises(ValueError):
        compute_beta("hs", "bar", z, z, z, z, z)


def test_restart_every_sets_beta_to_zero(small_cp_problem):
    problem = small_cp_problem
    handle = problem.make_preconditioner()
    state = NCGState.initial(problem.objective, handle, problem.x0)
    for _ in range(4):
        state = npncg_step(problem.objective, state, "hs", "hat", "wolfe", restart_every=2)
        if state.k % 2 == 0:
            assert state.beta == 0.0
            assert "restart" in state.flags or "reset" in state.flags


def test_ncg_step_plain_alias(spd_problem):
    objective = Objective(spd_problem.objective, spd_problem.gradient)
    state = NCGState.initial(objective, IdentityPreconditioner(objective), np.zeros(spd_problem.dimension))
    f0 = state.f
    state = ncg_step(objective, state, "pr", "wolfe")
    assert state.k == 1
    assert state.f < f0
