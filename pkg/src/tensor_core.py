"""Dense tensor kernels.

Tensors are float64 ``numpy.ndarray`` values. The documented linearization is
first index fastest (Fortran order), and modes are 0-based.

The mode-n matricization keeps the natural fiber ordering: the column index
runs over the remaining modes with the lowest mode varying fastest. Under this
ordering the identities used throughout the package read

    cp_full(A)_(n)       = A_n (A_{N-1} ⊙ ... ⊙ A_{n+1} ⊙ A_{n-1} ⊙ ... ⊙ A_0)^T
    (S x_0 A_0 ... )_(n) = A_n S_(n) (A_{N-1} ⊗ ... ⊗ A_{n+1} ⊗ A_{n-1} ⊗ ... ⊗ A_0)^T

i.e. both Khatri-Rao and Kronecker factors appear in reversed mode order.
"""
from functools import reduce
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import TensorShapeError


def as_tensor(data) -> np.ndarray:
    t = np.asarray(data, dtype=np.float64)
    if t.ndim < 1 or any(extent < 1 for extent in t.shape):
        raise TensorShapeError(f"Tensor needs order >= 1 and positive extents, got shape {t.shape}")
    return t


def from_flat(data: Sequence[float], shape: Sequence[int]) -> np.ndarray:
    """Build a tensor from its first-index-fastest linearization"""
    flat = np.asarray(data, dtype=np.float64).ravel()
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != flat.size:
        raise TensorShapeError(f"{flat.size} values do not fill shape {shape}")
    return as_tensor(flat.reshape(shape, order="F"))


def to_flat(t: np.ndarray) -> np.ndarray:
    return np.asarray(t, dtype=np.float64).ravel(order="F")


def _check_mode(t: np.ndarray, n: int) -> None:
    if not 0 <= n < t.ndim:
        raise TensorShapeError(f"Mode {n} out of range for order-{t.ndim} tensor")


def matricize(t: np.ndarray, n: int) -> np.ndarray:
    """Mode-n unfolding: I_n rows, remaining modes as columns (lowest mode fastest)"""
    t = np.asarray(t, dtype=np.float64)
    _check_mode(t, n)
    return np.reshape(np.moveaxis(t, n, 0), (t.shape[n], -1), order="F")


def tensorize(m: np.ndarray, shape: Sequence[int], n: int) -> np.ndarray:
    """Inverse of matricize"""
    shape = tuple(int(s) for s in shape)
    m = np.asarray(m, dtype=np.float64)
    if not 0 <= n < len(shape):
        raise TensorShapeError(f"Mode {n} out of range for shape {shape}")
    rest = shape[:n] + shape[n + 1:]
    if m.shape != (shape[n], int(np.prod(rest, dtype=int))):
        raise TensorShapeError(f"Matrix of shape {m.shape} does not unfold shape {shape} in mode {n}")
    return np.moveaxis(np.reshape(m, (shape[n],) + rest, order="F"), 0, n)


def mode_n_product(t: np.ndarray, a: np.ndarray, n: int) -> np.ndarray:
    """Y = t x_n a, so that Y_(n) = a X_(n)"""
    t = np.asarray(t, dtype=np.float64)
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    _check_mode(t, n)
    if a.shape[1] != t.shape[n]:
        raise TensorShapeError(f"Matrix with {a.shape[1]} columns cannot act on mode {n} of extent {t.shape[n]}")
    return np.moveaxis(np.tensordot(a, t, axes=(1, n)), 0, n)


def multi_mode_product(t: np.ndarray, mats: Sequence[Optional[np.ndarray]], transpose: bool = False) -> np.ndarray:
    """Apply one matrix per mode; ``None`` marks an identity slot.

    With ``transpose=True`` each matrix enters transposed, which is the
    (A_0^T, ..., A_{N-1}^T) . X contraction used by Tucker.
    """
    t = np.asarray(t, dtype=np.float64)
    if len(mats) != t.ndim:
        raise TensorShapeError(f"Expected {t.ndim} matrices, got {len(mats)}")
    result = t
    for n, a in enumerate(mats):
        if a is None:
            continue
        result = mode_n_product(result, a.T if transpose else a, n)
    return result


def khatri_rao(*mats: np.ndarray, skip: Optional[int] = None) -> np.ndarray:
    """Columnwise Kronecker product: column k is kron(m0_k, m1_k, ...)"""
    mats = [np.asarray(m, dtype=np.float64) for i, m in enumerate(mats) if i != skip]
    if not mats:
        raise TensorShapeError("khatri_rao needs at least one matrix")
    cols = mats[0].shape[1]
    if any(m.ndim != 2 or m.shape[1] != cols for m in mats):
        raise TensorShapeError(f"Column counts differ: {[m.shape for m in mats]}")
    result = mats[0]
    for m in mats[1:]:
        result = (result[:, None, :] * m[None, :, :]).reshape(-1, cols)
    return result


def kronecker(*mats: np.ndarray) -> np.ndarray:
    if not mats:
        raise TensorShapeError("kronecker needs at least one matrix")
    return reduce(np.kron, (np.asarray(m, dtype=np.float64) for m in mats))


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise TensorShapeError(f"Hadamard product of shapes {a.shape} and {b.shape}")
    return a * b


def inner_product(s: np.ndarray, t: np.ndarray) -> float:
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if s.shape != t.shape:
        raise TensorShapeError(f"Inner product of shapes {s.shape} and {t.shape}")
    return float(np.vdot(s, t))


def frob_norm(t: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(t, dtype=np.float64).ravel()))


def pinv(a: np.ndarray) -> np.ndarray:
    """SVD pseudoinverse with cutoff max(dim) * eps * sigma_max"""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    return scipy.linalg.pinv(a, atol=0.0, rtol=max(a.shape) * np.finfo(np.float64).eps)


def khatri_rao_pinv(*mats: np.ndarray) -> np.ndarray:
    """(A ⊙ B ⊙ ...)^† via the Gram identity ((A^T A) * (B^T B) * ...)^† (A ⊙ B ⊙ ...)^T"""
    gram = reduce(np.multiply, (m.T @ m for m in mats))
    return pinv(gram) @ khatri_rao(*mats).T


def random_orthonormal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """QR of a standard-normal matrix with the R diagonal made positive"""
    if cols > rows:
        raise TensorShapeError(f"Cannot draw {cols} orthonormal columns in dimension {rows}")
    q, r = scipy.linalg.qr(rng.standard_normal((rows, cols)), mode="economic")
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs
