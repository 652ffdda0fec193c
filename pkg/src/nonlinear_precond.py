"""Nonlinearly preconditioned quasi-Newton methods.

A preconditioner is a fixed-point sweep Q (one CP-ALS or HOOI sweep, or a
Richardson step on a quadratic). Its residual gbar = x - Q(x) stands in for
the gradient. Left preconditioning (LP) substitutes gbar and ybar everywhere
in the L-BFGS / L-Broyden compact forms. Transformation preconditioning (TP)
keeps g in the correction terms and uses gbar only in the leading term and in
the Ybar block.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .errors import MemoryResetRequired, NumericalBreakdown
from .line_search import search_step
from .linear_solvers import QuadraticProblem, richardson_step
from .objectives import EuclideanSpace, Objective
from .quasi_newton import (QNMemory, bfgs_compact, broyden_compact, damp_bfgs_pair, gamma_scaling,
                           lbfgs_compact_apply, lbfgs_hessian_apply, lbfgs_two_loop, lbroyden_compact_apply)

logger = logging.getLogger(__name__)

VARIANTS = ("none", "lp", "tp")
FAMILIES = ("lbfgs", "lbroyden")
ETA_POLICIES = ("unit", "gamma")

PAIR_ADMISSION_TOL = 1e-14


class PreconditionerHandle:
    """A fixed-point sweep Q together with its application counter"""

    identity = False

    def __init__(self, sweep: Callable[[np.ndarray], np.ndarray], name: str):
        self._sweep = sweep
        self.name = name
        self.q_applies = 0
        self.last_fallback = False

    def q_apply(self, x: np.ndarray) -> np.ndarray:
        self.q_applies += 1
        qx = np.asarray(self._sweep(x), dtype=np.float64)
        if not np.all(np.isfinite(qx)):
            raise NumericalBreakdown(f"Preconditioner {self.name} produced non-finite values")
        return qx

    def preconditioned_gradient(self, x: np.ndarray) -> np.ndarray:
        return x - self.q_apply(x)


class IdentityPreconditioner(PreconditionerHandle):
    """Q(x) = x - g(x): gbar is the gradient itself and no sweep is counted"""

    identity = True

    def __init__(self, objective: Objective):
        super().__init__(lambda x: x - objective.gradient(x), "none")
        self._objective = objective

    def preconditioned_gradient(self, x: np.ndarray) -> np.ndarray:
        return self._objective.gradient(x)


def linear_preconditioner(q: QuadraticProblem, precond: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                          name: Optional[str] = None) -> PreconditionerHandle:
    """Richardson map Q(x) = x - P(Ax - b), so gbar = P g"""
    label = name or getattr(precond, "name", "richardson")
    return PreconditionerHandle(lambda x: richardson_step(q, x, precond), label)


def preconditioned_gradient(handle: PreconditionerHandle, x: np.ndarray) -> np.ndarray:
    return handle.preconditioned_gradient(x)


@dataclass
class NPQNState:
    x: np.ndarray
    f: float
    g: np.ndarray
    gbar: np.ndarray
    memory: QNMemory
    handle: PreconditionerHandle
    variant: str = "lp"
    family: str = "lbfgs"
    eta_policy: str = "gamma"
    damping: bool = False
    two_loop: bool = False
    reuse_lead: bool = False
    window_transport: bool = False
    space: object = field(default_factory=EuclideanSpace)
    k: int = 0
    alpha: float = 0.0
    flags: List[str] = field(default_factory=list)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"Unknown preconditioning variant {self.variant}")
        if self.family not in FAMILIES:
            raise ValueError(f"Unknown quasi-Newton family {self.family}")
        if self.eta_policy not in ETA_POLICIES:
            raise ValueError(f"Unknown eta policy {self.eta_policy}")

    @classmethod
    def initial(cls, objective: Objective, handle: PreconditionerHandle, x0: np.ndarray, m: int = 1,
                space=None, **options) -> "NPQNState":
        space = space or EuclideanSpace()
        x0 = np.array(x0, dtype=np.float64)
        return cls(x=x0, f=objective.value(x0), g=objective.gradient(x0), gbar=handle.preconditioned_gradient(x0),
                   memory=QNMemory(m), handle=handle, space=space, **options)

    @property
    def secant(self) -> str:
        """Family whose products with S build the D/R (or SY) blocks"""
        return "y" if self.variant == "tp" else "ybar"


def matching_gamma(state: NPQNState) -> float:
    """gamma~ = s^T ybar / ybar^T ybar for LP, gamma^ = s^T y / y^T ybar for TP, from the newest pair"""
    memory = state.memory
    try:
        if state.variant == "tp":
            return gamma_scaling(memory.last("s"), memory.last("y"), memory.last("ybar"))
        return gamma_scaling(memory.last("s"), memory.last("ybar"))
    except NumericalBreakdown as e:
        raise MemoryResetRequired(str(e))


def _eta(state: NPQNState) -> float:
    return 1.0 if state.eta_policy == "unit" else matching_gamma(state)


def _tp_lead(state: NPQNState) -> np.ndarray:
    if state.reuse_lead:
        return state.gbar
    # the leading term is re-evaluated at the current iterate
    return state.handle.preconditioned_gradient(state.x)


def npqn_lbfgs_lp_apply(state: NPQNState) -> np.ndarray:
    memory = state.memory
    if not len(memory):
        return -state.gbar
    gamma = matching_gamma(state)
    if state.two_loop:
        return -lbfgs_two_loop(lambda v: gamma * v, state.gbar, memory, secant="ybar")
    return -lbfgs_compact_apply(gamma, memory, state.gbar, secant="ybar")


def npqn_lbfgs_tp_apply(state: NPQNState) -> np.ndarray:
    memory = state.memory
    lead = _tp_lead(state)
    if not len(memory):
        return -lead
    gamma = matching_gamma(state)
    sy = memory.gram("s", "y")
    return -bfgs_compact(lead, gamma, memory.S, memory.Ybar, np.diag(np.diag(sy)), np.triu(sy),
                         memory.gram("y", "ybar"), state.g)


def npqn_lbroyden_lp_apply(state: NPQNState) -> np.ndarray:
    memory = state.memory
    if not len(memory):
        return -state.gbar
    return -lbroyden_compact_apply(_eta(state), memory, state.gbar, secant="ybar")


def npqn_lbroyden_tp_apply(state: NPQNState) -> np.ndarray:
    memory = state.memory
    lead = _tp_lead(state)
    if not len(memory):
        return -lead
    eta = _eta(state)
    inner = memory.Mbar + eta * memory.gram("s", "y")
    return -broyden_compact(lead, eta, memory.S, memory.Ybar, inner, state.g)


_APPLIES = {
    ("lbfgs", "lp"): npqn_lbfgs_lp_apply,
    ("lbfgs", "tp"): npqn_lbfgs_tp_apply,
    ("lbroyden", "lp"): npqn_lbroyden_lp_apply,
    ("lbroyden", "tp"): npqn_lbroyden_tp_apply,
}


def npqn_direction(state: NPQNState) -> np.ndarray:
    # with the identity preconditioner gbar = g and ybar = y, so LP is the plain method
    variant = "lp" if state.variant == "none" else state.variant
    return _APPLIES[(state.family, variant)](state)


def _damping_operator(memory: QNMemory, secant: str, s: np.ndarray, w: np.ndarray):
    if len(memory):
        try:
            sigma = 1.0 / gamma_scaling(memory.last("s"), memory.last(secant))
            return lambda v: lbfgs_hessian_apply(sigma, memory, v, secant=secant)
        except NumericalBreakdown:
            pass
    sigma = float(np.linalg.norm(w) / np.linalg.norm(s))
    return lambda v: sigma * v


def _store_pair(state: NPQNState, s: np.ndarray, y: np.ndarray, ybar: np.ndarray, g_start: np.ndarray,
                flags: List[str]) -> None:
    memory = state.memory
    secant = state.secant
    w = y if secant == "y" else ybar
    if state.family == "lbfgs" and state.damping:
        B = _damping_operator(memory, secant, s, w)
        try:
            w, theta = damp_bfgs_pair(s, w, B)
        except MemoryResetRequired:
            memory.clear()
            flags.append("reset")
            w, theta = damp_bfgs_pair(s, w, _damping_operator(memory, secant, s, w))
        if theta < 1.0:
            flags.append("damped")
        if secant == "y":
            y = w
        else:
            ybar = w
            if state.variant == "none":
                y = w
    curvature = float(s @ w)
    threshold = PAIR_ADMISSION_TOL * np.linalg.norm(s) * np.linalg.norm(w)
    admissible = curvature > threshold if state.family == "lbfgs" else abs(curvature) > threshold
    if not admissible:
        flags.append("skipped")
        logger.debug(f"Skipping pair with s^T w = {curvature:.3e}")
        return
    memory.append(s, y, ybar, g_start)


def npqn_iteration(objective: Objective, state: NPQNState, linesearch: str = "modbt",
                   quadratic: Optional[QuadraticProblem] = None) -> NPQNState:
    """One outer step: direction, line search on the original f, pair update"""
    space = state.space
    flags: List[str] = []
    try:
        p = npqn_direction(state)
    except MemoryResetRequired as e:
        logger.warning(f"Clearing quasi-Newton memory at iteration {state.k + 1}: {e}")
        state.memory.clear()
        flags.append("reset")
        p = -state.gbar
    p = space.project(state.x, p)
    outcome = search_step(linesearch, objective, state.x, state.f, p, -state.gbar, state.k + 1, space, quadratic)
    if outcome.reset:
        logger.warning(f"Line search {outcome.flag.value} at iteration {state.k + 1}, memory cleared")
        state.memory.clear()
        flags.append(outcome.flag.value)

    step = outcome.alpha * outcome.direction
    x_new = outcome.x
    g_new = objective.gradient(x_new)
    gbar_new = state.handle.preconditioned_gradient(x_new)
    if state.handle.last_fallback:
        flags.append("log-fallback")

    def carry(v: np.ndarray) -> np.ndarray:
        return space.transport(state.x, step, v)

    if state.window_transport and len(state.memory):
        state.memory.transform(carry)
    g_start = carry(state.g)
    _store_pair(state, carry(step), g_new - g_start, gbar_new - carry(state.gbar), g_start, flags)

    state.x, state.f, state.g, state.gbar = x_new, outcome.f, g_new, gbar_new
    state.k += 1
    state.alpha = outcome.alpha
    state.flags = flags
    return state
