"""Nonlinear conjugate gradients, plain and nonlinearly preconditioned.

Three beta forms are supported:

- ``plain``: the textbook rules on g
- ``tilde``: the same rules with g replaced by gbar (left preconditioning)
- ``hat``: rules mixing g and gbar (transformation preconditioning)
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .line_search import search_step
from .linear_solvers import QuadraticProblem
from .nonlinear_precond import PreconditionerHandle
from .objectives import EuclideanSpace, Objective

logger = logging.getLogger(__name__)

BETA_RULES = ("pr", "hs", "hz")
BETA_FORMS = ("plain", "tilde", "hat")


def _ratio(num: float, den: float) -> float:
    if den == 0.0 or not np.isfinite(den):
        return 0.0
    return float(num) / float(den)


def beta_plain(rule: str, g_new: np.ndarray, g: np.ndarray, p: np.ndarray) -> float:
    y = g_new - g
    if rule == "pr":
        return _ratio(g_new @ y, g @ g)
    if rule == "hs":
        return _ratio(g_new @ y, y @ p)
    if rule == "hz":
        yp = float(y @ p)
        if yp == 0.0:
            return 0.0
        return float((y - 2.0 * p * float(y @ y) / yp) @ g_new) / yp
    raise ValueError(f"Unknown beta rule {rule}")


def beta_tilde(rule: str, gbar_new: np.ndarray, gbar: np.ndarray, p: np.ndarray) -> float:
    return beta_plain(rule, gbar_new, gbar, p)


def beta_hat(rule: str, g_new: np.ndarray, g: np.ndarray, gbar_new: np.ndarray, gbar: np.ndarray,
             p: np.ndarray) -> float:
    y = g_new - g
    ybar = gbar_new - gbar
    if rule == "pr":
        return _ratio(g_new @ ybar, g @ gbar)
    yp = float(y @ p)
    if rule == "hs":
        return _ratio(g_new @ ybar, yp)
    if rule == "hz":
        if yp == 0.0:
            return 0.0
        return float(g_new @ ybar) / yp - 2.0 * float(p @ g_new) * float(y @ ybar) / yp ** 2
    raise ValueError(f"Unknown beta rule {rule}")


def compute_beta(rule: str, form: str, g_new: np.ndarray, g: np.ndarray, gbar_new: np.ndarray,
                 gbar: np.ndarray, p: np.ndarray) -> float:
    if form == "plain":
        return beta_plain(rule, g_new, g, p)
    if form == "tilde":
        return beta_tilde(rule, gbar_new, gbar, p)
    if form == "hat":
        return beta_hat(rule, g_new, g, gbar_new, gbar, p)
    raise ValueError(f"Unknown beta form {form}")


@dataclass
class NCGState:
    x: np.ndarray
    f: float
    g: np.ndarray
    gbar: np.ndarray
    p: np.ndarray
    handle: PreconditionerHandle
    space: object = field(default_factory=EuclideanSpace)
    k: int = 0
    alpha: float = 0.0
    beta: float = 0.0
    flags: List[str] = field(default_factory=list)

    @classmethod
    def initial(cls, objective: Objective, handle: PreconditionerHandle, x0: np.ndarray, space=None) -> "NCGState":
        space = space or EuclideanSpace()
        x0 = np.array(x0, dtype=np.float64)
        gbar = handle.preconditioned_gradient(x0)
        return cls(x=x0, f=objective.value(x0), g=objective.gradient(x0), gbar=gbar,
                   p=space.project(x0, -gbar), handle=handle, space=space)


def npncg_step(objective: Objective, state: NCGState, rule: str = "hs", form: str = "tilde",
               linesearch: str = "wolfe", restart_every: int = 0,
               quadratic: Optional[QuadraticProblem] = None) -> NCGState:
    """x+ = R_x(alpha p), p+ = -gbar+ + beta p; the line search sees the original f and g"""
    space = state.space
    flags: List[str] = []
    outcome = search_step(linesearch, objective, state.x, state.f, state.p, -state.gbar, state.k + 1, space,
                          quadratic)
    step = outcome.alpha * outcome.direction
    x_new = outcome.x
    g_new = objective.gradient(x_new)
    gbar_new = state.handle.preconditioned_gradient(x_new)
    if state.handle.last_fallback:
        flags.append("log-fallback")

    def carry(v: np.ndarray) -> np.ndarray:
        return space.transport(state.x, step, v)

    p_old = carry(outcome.direction)
    k_new = state.k + 1
    if outcome.reset:
        flags.append(outcome.flag.value)
        beta = 0.0
    elif restart_every and k_new % restart_every == 0:
        flags.append("restart")
        beta = 0.0
    else:
        beta = compute_beta(rule, form, g_new, carry(state.g), gbar_new, carry(state.gbar), p_old)

    state.p = space.project(x_new, -gbar_new + beta * p_old)
    state.x, state.f, state.g, state.gbar = x_new, outcome.f, g_new, gbar_new
    state.k = k_new
    state.alpha = outcome.alpha
    state.beta = beta
    state.flags = flags
    return state


def ncg_step(objective: Objective, state: NCGState, rule: str = "hs", linesearch: str = "wolfe",
             restart_every: int = 0, quadratic: Optional[QuadraticProblem] = None) -> NCGState:
    return npncg_step(objective, state, rule, "plain", linesearch, restart_every, quadratic)
