import logging
from typing import Callable, Optional

import numpy as np

from .errors import NumericalBreakdown

logger = logging.getLogger(__name__)


class Objective:
    """Counts every objective and gradient evaluation.

    The most recent point is cached, so asking twice for the value or gradient
    at the same iterate costs one evaluation.
    """

    def __init__(self, value: Callable[[np.ndarray], float], gradient: Callable[[np.ndarray], np.ndarray]):
        self._value = value
        self._gradient = gradient
        self.f_evals = 0
        self.g_evals = 0
        self._f_cache: Optional[tuple] = None
        self._g_cache: Optional[tuple] = None

    def value(self, x: np.ndarray) -> float:
        if self._f_cache is not None and np.array_equal(self._f_cache[0], x):
            return self._f_cache[1]
        self.f_evals += 1
        f = float(self._value(x))
        if not np.isfinite(f):
            raise NumericalBreakdown(f"Objective is not finite ({f})")
        self._f_cache = (np.array(x, copy=True), f)
        return f

    def gradient(self, x: np.ndarray) -> np.ndarray:
        if self._g_cache is not None and np.array_equal(self._g_cache[0], x):
            return self._g_cache[1].copy()
        self.g_evals += 1
        g = np.asarray(self._gradient(x), dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise NumericalBreakdown("Gradient has non-finite entries")
        self._g_cache = (np.array(x, copy=True), g)
        return g.copy()


class EuclideanSpace:
    """Flat geometry: straight-line retraction, identity transport"""

    def retract(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return x + v

    def transport(self, x: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        return w

    def project(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return v

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(u @ v)

    def norm(self, v: np.ndarray) -> float:
        return float(np.linalg.norm(v))
