"""CP and Tucker models, their objectives, gradients and fixed-point sweeps.

Factor tuples are flattened for the optimizers by concatenating the factors
in mode order, each column-major.
"""
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import scipy.linalg

from .errors import TensorShapeError
from .tensor_core import as_tensor, frob_norm, khatri_rao, matricize, multi_mode_product

logger = logging.getLogger(__name__)

ORTHONORMAL_TOL = 1e-10
SWEEP_ORDERS = ("f", "fb")


def sweep_modes(order: int, sweep: str = "f") -> List[int]:
    """F visits 0..N-1; FB continues back down to 0"""
    if sweep == "f":
        return list(range(order))
    if sweep == "fb":
        return list(range(order)) + list(range(order - 2, -1, -1))
    raise ValueError(f"Unknown sweep type {sweep}")


def factors_to_vector(factors: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(a, dtype=np.float64).ravel(order="F") for a in factors])


def vector_to_factors(v: np.ndarray, shapes: Sequence[Tuple[int, int]]) -> List[np.ndarray]:
    v = np.asarray(v, dtype=np.float64)
    expected = sum(r * c for r, c in shapes)
    if v.size != expected:
        raise TensorShapeError(f"Vector of length {v.size} does not hold factors {list(shapes)}")
    factors, offset = [], 0
    for rows, cols in shapes:
        factors.append(v[offset:offset + rows * cols].reshape((rows, cols), order="F"))
        offset += rows * cols
    return factors


def fix_signs(u: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of every column positive"""
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def leading_left_singular_vectors(m: np.ndarray, rank: int) -> np.ndarray:
    u, _, _ = scipy.linalg.svd(m, full_matrices=False)
    return fix_signs(u[:, :rank])


def check_orthonormal(a: np.ndarray, tol: float = ORTHONORMAL_TOL) -> float:
    gap = float(np.linalg.norm(a.T @ a - np.eye(a.shape[1])))
    if gap > tol:
        raise TensorShapeError(f"Factor columns are not orthonormal (||A^T A - I|| = {gap:.2e})")
    return gap


@dataclass
class KTensor:
    factors: List[np.ndarray]

    def __post_init__(self):
        self.factors = [np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in self.factors]
        if not self.factors:
            raise TensorShapeError("A CP model needs at least one factor")
        ranks = {a.shape[1] for a in self.factors}
        if len(ranks) != 1:
            raise TensorShapeError(f"Factor column counts differ: {[a.shape for a in self.factors]}")

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(a.shape[0] for a in self.factors)

    @property
    def numel(self) -> int:
        return sum(a.size for a in self.factors)

    def to_vector(self) -> np.ndarray:
        return factors_to_vector(self.factors)

    @classmethod
    def from_vector(cls, v: np.ndarray, shape: Sequence[int], rank: int) -> "KTensor":
        return cls(vector_to_factors(v, [(extent, rank) for extent in shape]))


@dataclass
class TuckerTensor:
    core: np.ndarray
    factors: List[np.ndarray]

    def __post_init__(self):
        self.core = as_tensor(self.core)
        self.factors = [np.asarray(a, dtype=np.float64) for a in self.factors]
        if len(self.factors) != self.core.ndim:
            raise TensorShapeError(f"Core of order {self.core.ndim} needs {self.core.ndim} factors")
        for n, a in enumerate(self.factors):
            if a.shape[1] != self.core.shape[n]:
                raise TensorShapeError(f"Factor {n} has {a.shape[1]} columns, core extent is {self.core.shape[n]}")
            check_orthonormal(a)

    @property
    def ranks(self) -> Tuple[int, ...]:
        return self.core.shape

    def full(self) -> np.ndarray:
        return multi_mode_product(self.core, self.factors)


def cp_full(kt: KTensor) -> np.ndarray:
    """Sum of rank-one terms; the column index of the reversed Khatri-Rao product is the F-order linear index"""
    kr = khatri_rao(*reversed(kt.factors))
    return (kr @ np.ones(kt.rank)).reshape(kt.shape, order="F")


def _check_cp_shape(X: np.ndarray, kt: KTensor) -> None:
    if X.shape != kt.shape:
        raise TensorShapeError(f"Tensor shape {X.shape} does not match CP model shape {kt.shape}")


def _other_factors(factors: Sequence[np.ndarray], n: int) -> List[np.ndarray]:
    return [factors[m] for m in reversed(range(len(factors))) if m != n]


def _gram_hadamard(factors: Sequence[np.ndarray], n: int) -> np.ndarray:
    rank = factors[0].shape[1]
    gamma = np.ones((rank, rank))
    for m, a in enumerate(factors):
        if m != n:
            gamma *= a.T @ a
    return gamma


def gram_pinv(gamma: np.ndarray) -> np.ndarray:
    """Pseudoinverse of a symmetric PSD matrix, eigenvalues below R eps lambda_max dropped"""
    w, v = scipy.linalg.eigh(gamma)
    cutoff = gamma.shape[0] * np.finfo(np.float64).eps * max(w.max(), 0.0)
    inv = np.zeros_like(w)
    keep = w > cutoff
    inv[keep] = 1.0 / w[keep]
    return (v * inv) @ v.T


def cp_objective(X: np.ndarray, kt: KTensor) -> float:
    _check_cp_shape(X, kt)
    return 0.5 * frob_norm(X - cp_full(kt)) ** 2


def cp_gradient(X: np.ndarray, kt: KTensor) -> List[np.ndarray]:
    _check_cp_shape(X, kt)
    grads = []
    for n, a in enumerate(kt.factors):
        mttkrp = matricize(X, n) @ khatri_rao(*_other_factors(kt.factors, n))
        grads.append(-mttkrp + a @ _gram_hadamard(kt.factors, n))
    return grads


def cp_als_sweep(X: np.ndarray, kt: KTensor, sweep: str = "f") -> KTensor:
    """One CP-ALS sweep; each block solve already sees the factors updated before it"""
    _check_cp_shape(X, kt)
    factors = [a.copy() for a in kt.factors]
    for n in sweep_modes(len(factors), sweep):
        mttkrp = matricize(X, n) @ khatri_rao(*_other_factors(factors, n))
        factors[n] = mttkrp @ gram_pinv(_gram_hadamard(factors, n))
    return KTensor(factors)


def _check_tucker_factors(X: np.ndarray, factors: Sequence[np.ndarray]) -> None:
    if len(factors) != X.ndim:
        raise TensorShapeError(f"Order-{X.ndim} tensor needs {X.ndim} factors, got {len(factors)}")
    for n, a in enumerate(factors):
        if a.shape[0] != X.shape[n] or a.shape[1] > a.shape[0]:
            raise TensorShapeError(f"Factor {n} of shape {a.shape} does not fit extent {X.shape[n]}")


def tucker_objective(X: np.ndarray, factors: Sequence[np.ndarray]) -> float:
    """-1/2 ||(A_0^T, ..., A_{N-1}^T) . X||^2"""
    _check_tucker_factors(X, factors)
    for a in factors:
        check_orthonormal(a)
    return -0.5 * frob_norm(multi_mode_product(X, factors, transpose=True)) ** 2


def _partial_core(X: np.ndarray, factors: Sequence[np.ndarray], n: int) -> np.ndarray:
    """Mode-n unfolding of X contracted with every factor except the n-th"""
    mats = [None if m == n else a for m, a in enumerate(factors)]
    return matricize(multi_mode_product(X, mats, transpose=True), n)


def tucker_gradient(X: np.ndarray, factors: Sequence[np.ndarray], riemannian: bool = True) -> List[np.ndarray]:
    _check_tucker_factors(X, factors)
    grads = []
    for n, a in enumerate(factors):
        y = _partial_core(X, factors, n)
        g = -y @ (y.T @ a)
        if riemannian:
            g = g - a @ (a.T @ g)
        grads.append(g)
    return grads


def hooi_sweep(X: np.ndarray, factors: Sequence[np.ndarray], sweep: str = "f") -> List[np.ndarray]:
    _check_tucker_factors(X, factors)
    factors = [np.array(a, dtype=np.float64) for a in factors]
    for n in sweep_modes(len(factors), sweep):
        factors[n] = leading_left_singular_vectors(_partial_core(X, factors, n), factors[n].shape[1])
    return factors


def hosvd_truncate(X: np.ndarray, ranks: Sequence[int]) -> TuckerTensor:
    X = as_tensor(X)
    if len(ranks) != X.ndim:
        raise TensorShapeError(f"Order-{X.ndim} tensor needs {X.ndim} ranks, got {len(ranks)}")
    for n, (rank, extent) in enumerate(zip(ranks, X.shape)):
        if not 1 <= rank <= extent:
            raise TensorShapeError(f"Rank {rank} for mode {n} must lie in [1, {extent}]")
    factors = [leading_left_singular_vectors(matricize(X, n), rank) for n, rank in enumerate(ranks)]
    return TuckerTensor(multi_mode_product(X, factors, transpose=True), factors)
