import logging
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np
import scipy.optimize

from .errors import LineSearchError, NumericalBreakdown
from .linear_solvers import exact_quadratic_step
from .objectives import EuclideanSpace, Objective

logger = logging.getLogger(__name__)

MODBT_STEPS = (1.0, 0.5, 0.25)
MODBT_FALLBACK_STEP = 0.125


class LineSearchFlag(str, Enum):
    ACCEPTED = "accepted"
    FALLBACK = "fallback"  # preconditioner step taken, memory cleared
    RESET = "reset"        # memory cleared, search repeated along the fallback direction


@dataclass
class LineSearchOutcome:
    alpha: float
    x: np.ndarray
    f: float
    flag: LineSearchFlag
    direction: np.ndarray

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ValueError(f"Step length must be positive, got {self.alpha}")

    @property
    def reset(self) -> bool:
        return self.flag is not LineSearchFlag.ACCEPTED


def modbt_search(f: Callable[[np.ndarray], float], x: np.ndarray, f_k: float, p: np.ndarray,
                 fallback: np.ndarray, iteration: int, space=None) -> LineSearchOutcome:
    """Relaxed backtracking.

    Tries steps 1, 1/2, 1/4 and accepts the first with
    f+ <= f_k + exp(-2 iter) |f_k|, which is (1 + e) f_k for nonnegative
    objectives and (1 - e) f_k for negative ones. Otherwise a step of 1/8 is
    taken along ``fallback`` without testing.
    """
    space = space or EuclideanSpace()
    bound = f_k + math.exp(-2.0 * iteration) * abs(f_k)
    for alpha in MODBT_STEPS:
        trial = space.retract(x, alpha * p)
        try:
            f_trial = f(trial)
        except NumericalBreakdown:
            continue
        if f_trial <= bound:
            return LineSearchOutcome(alpha, trial, f_trial, LineSearchFlag.ACCEPTED, p)
    trial = space.retract(x, MODBT_FALLBACK_STEP * fallback)
    logger.debug(f"modBT rejected all steps at iteration {iteration}, taking fallback step")
    return LineSearchOutcome(MODBT_FALLBACK_STEP, trial, f(trial), LineSearchFlag.FALLBACK, fallback)


def _scalar_wolfe(phi: Callable[[float], float], derphi: Callable[[float], float], phi0: float, derphi0: float,
                  c1: float, c2: float, maxiter: int) -> Optional[float]:
    """Bracketing strong-Wolfe search on a scalar curve, initial trial step 1"""
    if not derphi0 < 0.0:
        return None

    def f(z):
        try:
            return phi(float(z[0]))
        except NumericalBreakdown:
            return np.inf

    def fprime(z):
        try:
            return np.array([derphi(float(z[0]))])
        except NumericalBreakdown:
            return np.array([np.nan])

    # scipy warns (LineSearchWarning) and still hands back its last trial when maxiter runs out
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        alpha, _, _, phi_star, _, slope_star = scipy.optimize.line_search(
            f, fprime, np.zeros(1), np.ones(1), gfk=np.array([derphi0]), old_fval=phi0, c1=c1, c2=c2,
            maxiter=maxiter)
    if alpha is None or slope_star is None or not np.isfinite(alpha) or alpha <= 0.0:
        return None
    slope = float(np.ravel(slope_star)[0])
    if not (phi_star <= phi0 + c1 * alpha * derphi0 and abs(slope) <= c2 * abs(derphi0)):
        logger.debug(f"Wolfe step {alpha:.3g} fails verification (phi={phi_star:.3e}, slope={slope:.3e})")
        return None
    return float(alpha)


def strong_wolfe_search(objective: Objective, x: np.ndarray, p: np.ndarray, fallback: Optional[np.ndarray] = None,
                        c1: float = 1e-4, c2: float = 1e-2, maxiter: int = 20, space=None) -> LineSearchOutcome:
    """Strong-Wolfe search along the retraction curve t -> R_x(t p).

    An ascent direction or a failed search clears the caller's memory (flag
    RESET) and repeats the search along ``fallback`` (default -g).
    """
    space = space or EuclideanSpace()
    f0 = objective.value(x)
    g0 = objective.gradient(x)

    def search(direction: np.ndarray) -> Optional[float]:
        def phi(t: float) -> float:
            return objective.value(space.retract(x, t * direction))

        def derphi(t: float) -> float:
            point = space.retract(x, t * direction)
            return space.inner(objective.gradient(point), space.transport(x, t * direction, direction))

        return _scalar_wolfe(phi, derphi, f0, space.inner(g0, direction), c1, c2, maxiter)

    flag = LineSearchFlag.ACCEPTED
    direction = p
    alpha = search(direction)
    if alpha is None:
        flag = LineSearchFlag.RESET
        direction = -g0 if fallback is None else fallback
        if not space.inner(g0, direction) < 0.0:
            direction = -g0
        logger.debug("Wolfe search failed, retrying along the fallback direction")
        alpha = search(direction)
        if alpha is None:
            raise LineSearchError("Strong-Wolfe search failed along the fallback direction")
    x_new = space.retract(x, alpha * direction)
    return LineSearchOutcome(alpha, x_new, objective.value(x_new), flag, direction)


def exact_step_search(q, x: np.ndarray, p: np.ndarray, fallback: np.ndarray, objective: Objective) -> LineSearchOutcome:
    """Exact minimizer along p on a quadratic; a non-descent p is swapped for the fallback"""
    flag = LineSearchFlag.ACCEPTED
    direction = p
    alpha = exact_quadratic_step(q, x, direction)
    if not alpha > 0.0:
        flag = LineSearchFlag.RESET
        direction = fallback
        alpha = exact_quadratic_step(q, x, direction)
        if not alpha > 0.0:
            raise LineSearchError(f"Fallback direction is not a descent direction (alpha = {alpha})")
    x_new = x + alpha * direction
    return LineSearchOutcome(alpha, x_new, objective.value(x_new), flag, direction)


LINE_SEARCHES = ("modbt", "wolfe", "exact-quadratic")


def search_step(method: str, objective: Objective, x: np.ndarray, f: float, p: np.ndarray, fallback: np.ndarray,
                iteration: int, space=None, quadratic=None) -> LineSearchOutcome:
    if method == "modbt":
        return modbt_search(objective.value, x, f, p, fallback, iteration, space)
    if method == "wolfe":
        return strong_wolfe_search(objective, x, p, fallback=fallback, space=space)
    if method == "exact-quadratic":
        if quadratic is None:
            raise ValueError("The exact step needs a quadratic problem")
        return exact_step_search(quadratic, x, p, fallback, objective)
    raise ValueError(f"Unknown line search {method}")
