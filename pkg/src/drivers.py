"""Budgeted solver loops producing trace records.

Budgets are checked before each iteration, so no iteration starts once the
iteration cap or the function-evaluation cap has been reached. An iteration
that starts under the evaluation cap always completes, so its line search can
carry the count past the cap; the excess is reported as ``fevals_overshoot``.
Records are written for completed iterations only.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .linear_solvers import SSORPreconditioner, pcg_solve
from .manifold import ProductGrassmann, manifold_npqn_iteration
from .models.experiment import ExperimentConfig, TraceRecord
from .ncg import NCGState, npncg_step
from .nonlinear_precond import NPQNState, PreconditionerHandle, npqn_iteration
from .problems import ProblemInstance

logger = logging.getLogger(__name__)


@dataclass
class SolverBudget:
    max_iters: int = 1000
    max_fevals: int = 10000
    tol: float = 1e-7

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> "SolverBudget":
        return cls(config.max_iters, config.max_fevals, config.tol)


@dataclass
class SolverRun:
    x: np.ndarray
    converged: bool
    iterations: int
    stop_reason: str
    initial_measure: float
    final_measure: float
    final_f: float
    records: List[TraceRecord] = field(default_factory=list)
    fevals_overshoot: int = 0


@dataclass
class FixedPointState:
    x: np.ndarray
    f: float
    g: np.ndarray
    k: int = 0
    alpha: float = 1.0
    flags: List[str] = field(default_factory=list)


def _run_loop(problem: ProblemInstance, handle: PreconditionerHandle, state, step: Callable, budget: SolverBudget,
              records: List[TraceRecord]) -> SolverRun:
    objective, space = problem.objective, problem.space
    initial = problem.measure(state.f, space.norm(state.g))
    current = initial
    while True:
        if current < budget.tol:
            stop = "converged"
            break
        if state.k >= budget.max_iters:
            stop = "max-iters"
            break
        if objective.f_evals >= budget.max_fevals:
            stop = "max-fevals"
            break
        state = step(state)
        current = problem.measure(state.f, space.norm(state.g))
        record = TraceRecord(k=state.k, f=state.f, gnorm_scaled=current, alpha=state.alpha, flags=",".join(state.flags),
                             q_applies=handle.q_applies, f_evals=objective.f_evals, g_evals=objective.g_evals)
        records.append(record)
        logger.debug(f"k={record.k} f={record.f:.10e} gnorm={record.gnorm_scaled:.3e} "
                     f"alpha={record.alpha:.3g} flags={record.flags or '-'}")
    overshoot = max(0, objective.f_evals - budget.max_fevals)
    if overshoot:
        logger.warning(f"{problem.name}: {objective.f_evals} evaluations, {overshoot} past the cap")
    if stop != "converged":
        logger.warning(f"{problem.name}: stopped by {stop} after {state.k} iterations at measure {current:.3e}")
    return SolverRun(state.x, stop == "converged", state.k, stop, initial, current, state.f, records, overshoot)


def run_fixed_point(problem: ProblemInstance, handle: PreconditionerHandle, budget: SolverBudget,
                    records: Optional[List[TraceRecord]] = None) -> SolverRun:
    """Plain preconditioner iteration x+ = Q(x); one f evaluation per sweep"""
    objective = problem.objective
    x0 = problem.x0
    state = FixedPointState(x0, objective.value(x0), objective.gradient(x0))

    def step(s: FixedPointState) -> FixedPointState:
        x = handle.q_apply(s.x)
        return FixedPointState(x, objective.value(x), objective.gradient(x), s.k + 1)

    return _run_loop(problem, handle, state, step, budget, [] if records is None else records)


def run_npqn(problem: ProblemInstance, handle: PreconditionerHandle, budget: SolverBudget, config: ExperimentConfig,
             records: Optional[List[TraceRecord]] = None) -> SolverRun:
    objective = problem.objective
    state = NPQNState.initial(objective, handle, problem.x0, config.m, space=problem.space,
                              variant=config.precond, family=config.method, eta_policy=config.eta_policy,
                              damping=config.damping, two_loop=config.two_loop, reuse_lead=config.reuse_tp_lead,
                              window_transport=config.window_transport)
    if isinstance(problem.space, ProductGrassmann):
        def step(s: NPQNState) -> NPQNState:
            return manifold_npqn_iteration(objective, s, config.linesearch)
    else:
        def step(s: NPQNState) -> NPQNState:
            return npqn_iteration(objective, s, config.linesearch, problem.quadratic)
    return _run_loop(problem, handle, state, step, budget, [] if records is None else records)


def run_npncg(problem: ProblemInstance, handle: PreconditionerHandle, budget: SolverBudget, config: ExperimentConfig,
              records: Optional[List[TraceRecord]] = None) -> SolverRun:
    objective = problem.objective
    state = NCGState.initial(objective, handle, problem.x0, problem.space)

    def step(s: NCGState) -> NCGState:
        return npncg_step(objective, s, config.beta, config.beta_form, config.linesearch, config.restart_every,
                          problem.quadratic)

    return _run_loop(problem, handle, state, step, budget, [] if records is None else records)


def run_linear(problem: ProblemInstance, budget: SolverBudget, omega: Optional[float] = None,
               records: Optional[List[TraceRecord]] = None) -> SolverRun:
    """CG (omega None) or PCG with the SSOR preconditioner on a quadratic problem"""
    q = problem.quadratic
    if q is None:
        raise ValueError(f"{problem.name} is not a quadratic problem")
    records = [] if records is None else records
    precond = SSORPreconditioner(q.A, omega) if omega is not None else None
    result = pcg_solve(q, problem.x0, precond, tol=budget.tol, maxit=min(budget.max_iters, budget.max_fevals))
    for entry in result.history:
        k = int(entry["k"])
        records.append(TraceRecord(k=k, f=entry["f"], gnorm_scaled=entry["residual"], alpha=entry["alpha"],
                                   q_applies=k if precond is not None else 0, f_evals=k, g_evals=k + 1))
    initial = q.scaled_residual(problem.x0)
    final = records[-1].gnorm_scaled if records else initial
    stop = "converged" if result.converged else "max-iters"
    return SolverRun(result.x, result.converged, result.iterations, stop, initial, final, q.objective(result.x),
                     records)


def solve(problem: ProblemInstance, config: ExperimentConfig,
          records: Optional[List[TraceRecord]] = None) -> SolverRun:
    """Run the configured method; ``config`` must be resolved"""
    budget = SolverBudget.from_config(config)
    records = [] if records is None else records
    if config.method == "cg":
        return run_linear(problem, budget, None, records)
    if config.method == "pcg":
        return run_linear(problem, budget, config.omega, records)
    if config.method in ("als", "hooi", "richardson"):
        return run_fixed_point(problem, problem.make_preconditioner(), budget, records)
    handle = problem.identity_preconditioner() if config.precond == "none" else problem.make_preconditioner()
    if config.method == "ncg":
        return run_npncg(problem, handle, budget, config, records)
    return run_npqn(problem, handle, budget, config, records)
