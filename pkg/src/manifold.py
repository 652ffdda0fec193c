"""Grassmann geometry on orthonormal representatives and the product space used for Tucker.

A point is an n x p matrix Y with Y^T Y = I standing for its column space.
Tangent vectors are horizontal: Y^T Z = 0.
"""
import logging
from typing import List, Sequence, Tuple

import numpy as np
import scipy.linalg

from .errors import CutLocusError
from .nonlinear_precond import NPQNState, PreconditionerHandle, npqn_iteration
from .objectives import Objective

logger = logging.getLogger(__name__)

LOG_CONDITION_LIMIT = 1e12
TRANSPORTS = ("parallel", "projection")


def project_horizontal(Y: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """(I - Y Y^T) Z"""
    return Z - Y @ (Y.T @ Z)


def _orthonormalize(Y: np.ndarray) -> np.ndarray:
    q, r = scipy.linalg.qr(Y, mode="economic")
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def _compact_svd(xi: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    u, s, vt = scipy.linalg.svd(xi, full_matrices=False)
    return u, s, vt.T


def grassmann_exp(Y: np.ndarray, xi: np.ndarray, t: float = 1.0) -> np.ndarray:
    """Geodesic Y V cos(S t) V^T + U sin(S t) V^T, re-orthonormalized"""
    if t == 0.0 or not np.any(xi):
        return np.array(Y, dtype=np.float64)
    u, s, v = _compact_svd(xi)
    moved = (Y @ v) * np.cos(s * t) @ v.T + u * np.sin(s * t) @ v.T
    return _orthonormalize(moved)


def grassmann_log(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Tangent at X pointing to span(Y): U arctan(S) V^T from the SVD of (I - X X^T) Y (X^T Y)^{-1}"""
    m = X.T @ Y
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > LOG_CONDITION_LIMIT:
        raise CutLocusError(f"X^T Y is singular to working precision (cond = {cond:.2e})")
    z = project_horizontal(X, scipy.linalg.solve(m.T, Y.T).T)
    u, s, v = _compact_svd(z)
    return (u * np.arctan(s)) @ v.T


def vector_transport(X: np.ndarray, xi: np.ndarray, t: float, eta: np.ndarray, mode: str = "parallel") -> np.ndarray:
    """Move eta from X to Exp_X(t xi) by parallel transport or by horizontal projection"""
    if mode == "projection":
        return project_horizontal(grassmann_exp(X, xi, t), eta)
    if mode != "parallel":
        raise ValueError(f"Unknown transport {mode}")
    if t == 0.0 or not np.any(xi):
        return np.array(eta, dtype=np.float64)
    u, s, v = _compact_svd(xi)
    w = -(X @ v) * np.sin(s * t) + u * np.cos(s * t)
    ut_eta = u.T @ eta
    return w @ ut_eta + eta - u @ ut_eta


def self_transport(X: np.ndarray, xi: np.ndarray, t: float) -> np.ndarray:
    """Parallel transport of xi along its own geodesic: (-X V sin(S t) + U cos(S t)) S V^T"""
    u, s, v = _compact_svd(xi)
    return (-(X @ v) * np.sin(s * t) + u * np.cos(s * t)) * s @ v.T


def product_inner(us: Sequence[np.ndarray], vs: Sequence[np.ndarray]) -> float:
    """Sum of the component trace inner products"""
    return float(sum(np.vdot(u, v) for u, v in zip(us, vs)))


def procrustes_direction(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Horizontal part of Y O - X, with O the orthogonal p x p matrix best aligning Y to X"""
    u, _, vt = scipy.linalg.svd(Y.T @ X)
    return project_horizontal(X, Y @ (u @ vt) - X)


class ProductGrassmann:
    """Product of Grassmannians with points and tangents flattened factor by factor, column-major"""

    def __init__(self, shapes: Sequence[Tuple[int, int]], transport: str = "parallel"):
        if transport not in TRANSPORTS:
            raise ValueError(f"Unknown transport {transport}")
        self.shapes = [(int(r), int(c)) for r, c in shapes]
        self.transport_mode = transport
        self.size = sum(r * c for r, c in self.shapes)

    def split(self, v: np.ndarray) -> List[np.ndarray]:
        blocks, offset = [], 0
        for rows, cols in self.shapes:
            blocks.append(v[offset:offset + rows * cols].reshape((rows, cols), order="F"))
            offset += rows * cols
        return blocks

    def join(self, blocks: Sequence[np.ndarray]) -> np.ndarray:
        return np.concatenate([np.asarray(b, dtype=np.float64).ravel(order="F") for b in blocks])

    def retract(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return self.join([grassmann_exp(X, V) for X, V in zip(self.split(x), self.split(v))])

    def transport(self, x: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        return self.join([vector_transport(X, V, 1.0, W, self.transport_mode)
                          for X, V, W in zip(self.split(x), self.split(v), self.split(w))])

    def project(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return self.join([project_horizontal(X, V) for X, V in zip(self.split(x), self.split(v))])

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return product_inner(self.split(u), self.split(v))

    def norm(self, v: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(v, v), 0.0)))

    def orthonormality_gap(self, x: np.ndarray) -> float:
        return max(float(np.linalg.norm(X.T @ X - np.eye(X.shape[1]))) for X in self.split(x))


class GrassmannPreconditioner(PreconditionerHandle):
    """gbar = -Log_x(Q(x)) blockwise; a cut-locus block falls back to the aligned projection"""

    def __init__(self, space: ProductGrassmann, sweep, name: str):
        super().__init__(sweep, name)
        self.space = space
        self.fallbacks = 0

    def preconditioned_gradient(self, x: np.ndarray) -> np.ndarray:
        qx = self.q_apply(x)
        self.last_fallback = False
        blocks = []
        for n, (X, Q) in enumerate(zip(self.space.split(x), self.space.split(qx))):
            try:
                blocks.append(-grassmann_log(X, Q))
            except CutLocusError as e:
                logger.warning(f"Log map failed for factor {n}, using projected direction: {e}")
                self.last_fallback = True
                self.fallbacks += 1
                blocks.append(-procrustes_direction(X, Q))
        return self.space.join(blocks)


def manifold_npqn_iteration(objective: Objective, state: NPQNState, linesearch: str = "modbt") -> NPQNState:
    if not isinstance(state.space, ProductGrassmann):
        raise TypeError("The manifold iteration needs a ProductGrassmann state space")
    state = npqn_iteration(objective, state, linesearch)
    logger.debug(f"Manifold step {state.k}: orthonormality gap {state.space.orthonormality_gap(state.x):.1e}")
    return state
