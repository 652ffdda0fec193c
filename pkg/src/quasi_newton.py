"""Limited-memory quasi-Newton building blocks.

Stored pairs are columns of S (steps), Y (gradient differences), Ybar
(preconditioned-gradient differences) and G (gradient at the start of each
step), oldest first. Inner products between the families are cached and
updated one row and column at a time.
"""
import logging
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg

from .errors import MemoryResetRequired, NumericalBreakdown

logger = logging.getLogger(__name__)

Apply = Callable[[np.ndarray], np.ndarray]

FAMILIES = ("s", "y", "ybar", "g")
GRAM_PAIRS = (("s", "y"), ("s", "ybar"), ("s", "s"), ("g", "s"), ("y", "y"), ("y", "ybar"), ("ybar", "ybar"))


class QNMemory:
    """FIFO window of at most ``m`` (s, y, ybar, g) columns"""

    def __init__(self, m: int):
        if m < 1:
            raise ValueError(f"Window size must be positive, got {m}")
        self.m = m
        self.clear()

    def clear(self) -> None:
        self._vectors: Dict[str, List[np.ndarray]] = {family: [] for family in FAMILIES}
        self._gram: Dict[Tuple[str, str], np.ndarray] = {pair: np.zeros((0, 0)) for pair in GRAM_PAIRS}

    def __len__(self) -> int:
        return len(self._vectors["s"])

    def append(self, s: np.ndarray, y: np.ndarray, ybar: Optional[np.ndarray] = None,
               g: Optional[np.ndarray] = None) -> None:
        columns = {
            "s": s,
            "y": y,
            "ybar": y if ybar is None else ybar,
            "g": np.zeros_like(s) if g is None else g,
        }
        if len(self) == self.m:
            self._evict()
        for family in FAMILIES:
            self._vectors[family].append(np.array(columns[family], dtype=np.float64))
        k = len(self)
        for a, b in GRAM_PAIRS:
            grown = np.empty((k, k))
            grown[:k - 1, :k - 1] = self._gram[(a, b)]
            left, right = self._vectors[a], self._vectors[b]
            grown[k - 1, :] = [left[-1] @ v for v in right]
            grown[:, k - 1] = [v @ right[-1] for v in left]
            self._gram[(a, b)] = grown

    def _evict(self) -> None:
        for family in FAMILIES:
            self._vectors[family].pop(0)
        for pair in GRAM_PAIRS:
            self._gram[pair] = self._gram[pair][1:, 1:]

    def transform(self, fn: Callable[[np.ndarray], np.ndarray]) -> None:
        """Map every stored column through ``fn`` (e.g. a vector transport)"""
        for family in FAMILIES:
            self._vectors[family] = [np.asarray(fn(v), dtype=np.float64) for v in self._vectors[family]]
        self._gram = self.recomputed_grams()

    def recomputed_grams(self) -> Dict[Tuple[str, str], np.ndarray]:
        grams = {}
        for a, b in GRAM_PAIRS:
            if len(self):
                grams[(a, b)] = self.matrix(a).T @ self.matrix(b)
            else:
                grams[(a, b)] = np.zeros((0, 0))
        return grams

    def matrix(self, family: str) -> np.ndarray:
        vectors = self._vectors[family]
        if not vectors:
            raise ValueError("Memory is empty")
        return np.column_stack(vectors)

    def last(self, family: str) -> np.ndarray:
        return self._vectors[family][-1]

    def gram(self, a: str, b: str) -> np.ndarray:
        return self._gram[(a, b)].copy()

    @property
    def S(self) -> np.ndarray:
        return self.matrix("s")

    @property
    def Y(self) -> np.ndarray:
        return self.matrix("y")

    @property
    def Ybar(self) -> np.ndarray:
        return self.matrix("ybar")

    @property
    def G(self) -> np.ndarray:
        return self.matrix("g")

    @property
    def D(self) -> np.ndarray:
        return np.diag(np.diag(self._gram[("s", "y")]))

    @property
    def L(self) -> np.ndarray:
        return np.tril(self._gram[("s", "y")], k=-1)

    @property
    def R(self) -> np.ndarray:
        return np.triu(self._gram[("s", "y")])

    @property
    def M(self) -> np.ndarray:
        return -np.tril(self._gram[("s", "s")], k=-1)

    @property
    def Mbar(self) -> np.ndarray:
        return np.tril(self._gram[("g", "s")], k=-1)

    @property
    def Dbar(self) -> np.ndarray:
        return np.diag(np.diag(self._gram[("s", "ybar")]))

    @property
    def Rbar(self) -> np.ndarray:
        return np.triu(self._gram[("s", "ybar")])


def gamma_scaling(s: np.ndarray, y: np.ndarray, w: Optional[np.ndarray] = None) -> float:
    """s^T y / y^T w, with w = y by default"""
    w = y if w is None else w
    denom = float(y @ w)
    if denom == 0.0 or not np.isfinite(denom):
        raise NumericalBreakdown(f"Cannot scale with y^T w = {denom}")
    return float(s @ y) / denom


def damp_bfgs_pair(s: np.ndarray, y: np.ndarray, B_apply: Apply) -> Tuple[np.ndarray, float]:
    """Powell damping: returns (theta y + (1 - theta) B s, theta)"""
    bs = B_apply(s)
    sbs = float(s @ bs)
    sy = float(s @ y)
    if sy >= 0.1 * sbs:
        return y, 1.0
    theta = 0.9 * sbs / (sbs - sy)
    return theta * y + (1.0 - theta) * bs, theta


def lbfgs_two_loop(h0_apply: Apply, g: np.ndarray, memory: QNMemory, secant: str = "y") -> np.ndarray:
    """H_k g by the two-loop recursion over pairs (s_i, secant_i)"""
    k = len(memory)
    if k == 0:
        return h0_apply(g)
    S = memory.matrix("s")
    Y = memory.matrix(secant)
    rho = 1.0 / np.einsum("ij,ij->j", S, Y)
    q = np.array(g, dtype=np.float64)
    alpha = np.empty(k)
    for i in range(k - 1, -1, -1):
        alpha[i] = rho[i] * (S[:, i] @ q)
        q -= alpha[i] * Y[:, i]
    r = h0_apply(q)
    for i in range(k):
        beta = rho[i] * (Y[:, i] @ r)
        r += (alpha[i] - beta) * S[:, i]
    return r


def _check_triangular(R: np.ndarray) -> None:
    # relative only: s^T y scales with the square of the step length
    diag = np.abs(np.diag(R))
    if not np.all(np.isfinite(R)) or diag.min() <= np.finfo(np.float64).eps * diag.max():
        raise MemoryResetRequired("Triangular block of the compact form is singular")


def bfgs_compact(lead: np.ndarray, gamma: float, S: np.ndarray, Ybar: np.ndarray,
                 D: np.ndarray, R: np.ndarray, YtYbar: np.ndarray, v: np.ndarray) -> np.ndarray:
    """gamma lead + [S, gamma Ybar] [[R^-T (D + gamma YtYbar) R^-1, -R^-T], [-R^-1, 0]] [S^T v; gamma Ybar^T v]

    With Ybar = Y and lead = v this is the plain compact inverse BFGS apply;
    the preconditioned variants differ only in which blocks are passed in.
    """
    if S.shape[1] == 0:
        return gamma * lead
    _check_triangular(R)
    a = S.T @ v
    b = gamma * (Ybar.T @ v)
    r_inv_a = scipy.linalg.solve_triangular(R, a, lower=False)
    top = scipy.linalg.solve_triangular(R, (D + gamma * YtYbar) @ r_inv_a - b, lower=False, trans="T")
    return gamma * lead + S @ top - gamma * (Ybar @ r_inv_a)


def broyden_compact(lead: np.ndarray, eta: float, S: np.ndarray, Ybar: np.ndarray,
                    inner: np.ndarray, v: np.ndarray) -> np.ndarray:
    """eta (lead - (eta Ybar - S) inner^{-1} S^T v), inner solved by pivoted LU"""
    if S.shape[1] == 0:
        return eta * lead
    if not np.all(np.isfinite(inner)):
        raise MemoryResetRequired("Non-finite Broyden inner matrix")
    lu, piv = scipy.linalg.lu_factor(inner, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= np.finfo(np.float64).eps * pivots.max():
        raise MemoryResetRequired("Broyden inner matrix is singular")
    coeffs = scipy.linalg.lu_solve((lu, piv), S.T @ v, check_finite=False)
    return eta * (lead - (eta * Ybar - S) @ coeffs)


def lbfgs_compact_apply(gamma: float, memory: QNMemory, g: np.ndarray, secant: str = "y") -> np.ndarray:
    """H_k g from the compact inverse form with H_0 = gamma I"""
    if len(memory) == 0:
        return gamma * g
    sy = memory.gram("s", secant)
    yy = memory.gram(secant, secant)
    return bfgs_compact(g, gamma, memory.S, memory.matrix(secant), np.diag(np.diag(sy)), np.triu(sy), yy, g)


def lbroyden_compact_apply(eta: float, memory: QNMemory, g: np.ndarray, secant: str = "y") -> np.ndarray:
    """A_k^{-1} g from the compact good-Broyden form with A_0^{-1} = eta I"""
    if len(memory) == 0:
        return eta * g
    inner = memory.M + eta * memory.gram("s", secant)
    return broyden_compact(g, eta, memory.S, memory.matrix(secant), inner, g)


def lbfgs_hessian_apply(sigma: float, memory: QNMemory, v: np.ndarray, secant: str = "y") -> np.ndarray:
    """B_k v from the compact direct form with B_0 = sigma I"""
    if len(memory) == 0:
        return sigma * v
    S = memory.S
    Y = memory.matrix(secant)
    sy = memory.gram("s", secant)
    k = len(memory)
    block = np.empty((2 * k, 2 * k))
    block[:k, :k] = sigma * memory.gram("s", "s")
    block[:k, k:] = np.tril(sy, k=-1)
    block[k:, :k] = np.tril(sy, k=-1).T
    block[k:, k:] = -np.diag(np.diag(sy))
    try:
        coeffs = scipy.linalg.solve(block, np.concatenate([sigma * (S.T @ v), Y.T @ v]))
    except scipy.linalg.LinAlgError as e:
        raise MemoryResetRequired(f"Compact Hessian block is singular: {e}")
    return sigma * v - sigma * (S @ coeffs[:k]) - Y @ coeffs[k:]
