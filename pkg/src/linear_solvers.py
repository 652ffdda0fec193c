import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .errors import NumericalBreakdown, PreconditionerError

logger = logging.getLogger(__name__)

Operator = Union[np.ndarray, scipy.sparse.spmatrix]
Apply = Callable[[np.ndarray], np.ndarray]


@dataclass
class QuadraticProblem:
    """f(x) = 1/2 x^T A x - b^T x with A SPD; g(x) = A x - b"""
    A: Operator
    b: np.ndarray

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=np.float64).ravel()
        if self.A.shape != (self.b.size, self.b.size):
            raise ValueError(f"Operator of shape {self.A.shape} does not match rhs of length {self.b.size}")

    @property
    def dimension(self) -> int:
        return self.b.size

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.A @ x, dtype=np.float64).ravel()

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.apply(x) - self.b @ x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.apply(x) - self.b

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.b - self.apply(x)

    def scaled_residual(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(self.residual(x)) / np.linalg.norm(self.b))

    def norm_estimate(self) -> float:
        if scipy.sparse.issparse(self.A):
            return float(scipy.sparse.linalg.norm(self.A))
        return float(np.linalg.norm(self.A))

    def is_symmetric(self, rng: np.random.Generator, probes: int = 3) -> bool:
        """Sampled check |x^T A y - y^T A x| <= 1e-12 ||x|| ||y|| ||A||"""
        scale = self.norm_estimate()
        for _ in range(probes):
            x = rng.standard_normal(self.dimension)
            y = rng.standard_normal(self.dimension)
            gap = abs(x @ self.apply(y) - y @ self.apply(x))
            if gap > 1e-12 * np.linalg.norm(x) * np.linalg.norm(y) * scale:
                return False
        return True


def split(A: Operator) -> Tuple[np.ndarray, scipy.sparse.csr_matrix, scipy.sparse.csr_matrix]:
    """A = D + L + U with D the diagonal, L strictly lower, U strictly upper"""
    A = scipy.sparse.csr_matrix(A)
    return A.diagonal().astype(np.float64), scipy.sparse.tril(A, k=-1, format="csr"), scipy.sparse.triu(A, k=1, format="csr")


def _check_omega(omega: float) -> None:
    if not 0.0 < omega < 2.0:
        raise PreconditionerError(f"Relaxation parameter must lie in (0, 2), got {omega}")


def _check_diagonal(D: np.ndarray) -> None:
    zeros = np.flatnonzero(D == 0.0)
    if zeros.size:
        raise PreconditionerError(f"Zero diagonal entry at row {zeros[0]}")


def _ssor_solve(lower, upper, D: np.ndarray, omega: float, v: np.ndarray) -> np.ndarray:
    w = scipy.sparse.linalg.spsolve_triangular(lower, np.asarray(v, dtype=np.float64), lower=True)
    w = scipy.sparse.linalg.spsolve_triangular(upper, D * w, lower=False)
    return omega * (2.0 - omega) * w


def ssor_apply(D: np.ndarray, L: Operator, U: Operator, omega: float, v: np.ndarray) -> np.ndarray:
    """P v for P = [(D + w U^T) D^{-1} (D + w U) / (w (2 - w))]^{-1}; w = 1 gives SGS.

    Two triangular solves and a diagonal scaling. L is accepted for the full
    splitting signature; for symmetric A it equals U^T.
    """
    _check_omega(omega)
    _check_diagonal(D)
    diag = scipy.sparse.diags(D, format="csr")
    U = scipy.sparse.csr_matrix(U)
    upper = scipy.sparse.csr_matrix(diag + omega * U)
    lower = scipy.sparse.csr_matrix(diag + omega * U.T)
    return _ssor_solve(lower, upper, D, omega, v)


class SSORPreconditioner:
    """Symmetric SOR matrix of a fixed SPD operator"""

    def __init__(self, A: Operator, omega: float = 1.0):
        _check_omega(omega)
        self.omega = omega
        D, _, U = split(A)
        _check_diagonal(D)
        self.D = D
        diag = scipy.sparse.diags(D, format="csr")
        self._upper = scipy.sparse.csr_matrix(diag + omega * U)
        self._lower = scipy.sparse.csr_matrix(diag + omega * U.T)

    @property
    def name(self) -> str:
        return "sgs" if self.omega == 1.0 else f"ssor({self.omega:g})"

    def apply(self, v: np.ndarray) -> np.ndarray:
        return _ssor_solve(self._lower, self._upper, self.D, self.omega, v)

    __call__ = apply

    def dense(self) -> np.ndarray:
        return np.column_stack([self.apply(e) for e in np.eye(self.D.size)])


class SORPreconditioner:
    """Forward SOR matrix P = w (D + w L)^{-1}; w = 1 gives Gauss-Seidel. Not symmetric."""

    def __init__(self, A: Operator, omega: float = 1.0):
        _check_omega(omega)
        self.omega = omega
        D, L, _ = split(A)
        _check_diagonal(D)
        self._lower = scipy.sparse.csr_matrix(scipy.sparse.diags(D) + omega * L)

    @property
    def name(self) -> str:
        return "gs" if self.omega == 1.0 else f"sor({self.omega:g})"

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.omega * scipy.sparse.linalg.spsolve_triangular(self._lower, np.asarray(v, dtype=np.float64), lower=True)

    __call__ = apply


def richardson_step(q: QuadraticProblem, x: np.ndarray, precond: Optional[Apply] = None) -> np.ndarray:
    """x - P (A x - b)"""
    g = q.gradient(x)
    return x - (precond(g) if precond is not None else g)


def exact_quadratic_step(q: QuadraticProblem, x: np.ndarray, p: np.ndarray) -> float:
    """Exact minimizer of f(x + a p); equals r^T r / p^T A p when p = r"""
    curvature = float(p @ q.apply(p))
    if not np.isfinite(curvature) or curvature <= 0.0:
        raise NumericalBreakdown(f"Nonpositive curvature p^T A p = {curvature}")
    return float(q.residual(x) @ p) / curvature


@dataclass
class LinearSolveResult:
    x: np.ndarray
    converged: bool
    iterations: int
    history: List[Dict[str, float]] = field(default_factory=list)


def _check_finite(name: str, value) -> None:
    if not np.all(np.isfinite(value)):
        raise NumericalBreakdown(f"Non-finite {name} encountered")


def pcg_solve(q: QuadraticProblem, x0: np.ndarray, precond: Optional[Apply] = None,
              tol: float = 1e-10, maxit: int = 1000) -> LinearSolveResult:
    """Preconditioned CG in x variables: d_0 = -P g_0, beta = g+^T P g+ / g^T P g"""
    P = precond if precond is not None else (lambda v: v)
    b_norm = float(np.linalg.norm(q.b)) or 1.0
    x = np.array(x0, dtype=np.float64)
    g = q.gradient(x)
    pg = P(g)
    d = -pg
    gpg = float(g @ pg)
    history: List[Dict[str, float]] = []
    if np.linalg.norm(g) / b_norm < tol:
        return LinearSolveResult(x, True, 0, history)
    for k in range(1, maxit + 1):
        ad = q.apply(d)
        curvature = float(d @ ad)
        if curvature <= 0.0:
            raise NumericalBreakdown(f"Nonpositive curvature {curvature} at iteration {k}")
        alpha = -float(d @ g) / curvature
        x = x + alpha * d
        g = g + alpha * ad
        _check_finite("iterate", x)
        scaled = float(np.linalg.norm(g)) / b_norm
        history.append({"k": k, "f": q.objective(x), "residual": scaled, "alpha": alpha})
        if scaled < tol:
            return LinearSolveResult(x, True, k, history)
        pg = P(g)
        gpg_next = float(g @ pg)
        beta = gpg_next / gpg
        gpg = gpg_next
        d = -pg + beta * d
    final = history[-1]["residual"] if history else float(np.linalg.norm(g)) / b_norm
    logger.warning(f"PCG stopped after {maxit} iterations at scaled residual {final:.3e}")
    return LinearSolveResult(x, False, maxit, history)


def cg_solve(q: QuadraticProblem, x0: np.ndarray, tol: float = 1e-10, maxit: int = 1000) -> LinearSolveResult:
    return pcg_solve(q, x0, None, tol=tol, maxit=maxit)


def richardson_solve(q: QuadraticProblem, x0: np.ndarray, precond: Optional[Apply] = None,
                     tol: float = 1e-10, maxit: int = 1000) -> LinearSolveResult:
    b_norm = float(np.linalg.norm(q.b)) or 1.0
    x = np.array(x0, dtype=np.float64)
    history: List[Dict[str, float]] = []
    if q.scaled_residual(x) < tol:
        return LinearSolveResult(x, True, 0, history)
    for k in range(1, maxit + 1):
        x = richardson_step(q, x, precond)
        _check_finite("iterate", x)
        scaled = float(np.linalg.norm(q.residual(x))) / b_norm
        history.append({"k": k, "f": q.objective(x), "residual": scaled, "alpha": 1.0})
        if scaled < tol:
            return LinearSolveResult(x, True, k, history)
    return LinearSolveResult(x, False, maxit, history)
