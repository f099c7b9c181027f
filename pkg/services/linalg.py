"""Dense linear-algebra kernel shared by every estimator.

Symmetric positive-definite systems are always solved through a Cholesky
factorization; no routine here forms an explicit inverse.
"""
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from data_types.errors import DimensionMismatchError

DEFAULT_RANK_TOL = 1e-10


def frozen(array: NDArray) -> NDArray:
    out = np.array(array, dtype=float, copy=True)
    out.setflags(write=False)
    return out


def as_matrix(
    value: ArrayLike,
    name: str,
    shape: Optional[tuple[Optional[int], Optional[int]]] = None,
) -> NDArray[np.float64]:
    """
    Converts `value` to a finite 2-D float array, checking an optional shape.

    Scalars become 1x1 matrices. `None` entries in `shape` are not checked.
    """
    array = np.asarray(value, dtype=float)
    if array.ndim == 0:
        array = array.reshape(1, 1)
    if array.ndim != 2 or array.size == 0:
        raise DimensionMismatchError(
            f"{name} must be a non-empty 2-D matrix, got shape {array.shape}"
        )
    if not np.all(np.isfinite(array)):
        raise DimensionMismatchError(f"{name} has non-finite entries")
    if shape is not None:
        for axis, expected in enumerate(shape):
            if expected is not None and array.shape[axis] != expected:
                raise DimensionMismatchError(
                    f"{name} must have shape {shape}, got {array.shape}"
                )
    return array


def as_vector(
    value: ArrayLike, name: str, size: Optional[int] = None
) -> NDArray[np.float64]:
    array = np.asarray(value, dtype=float)
    if array.ndim == 0:
        array = array.reshape(1)
    if array.ndim != 1:
        raise DimensionMismatchError(f"{name} must be a vector, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise DimensionMismatchError(f"{name} has non-finite entries")
    if size is not None and array.size != size:
        raise DimensionMismatchError(f"{name} must have length {size}, got {array.size}")
    return array


def as_square(value: ArrayLike, name: str) -> NDArray[np.float64]:
    array = as_matrix(value, name)
    if array.shape[0] != array.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {array.shape}")
    return array


def symmetrize(matrix: NDArray) -> NDArray:
    return 0.5 * (matrix + matrix.T)


def singular_values(matrix: NDArray) -> NDArray:
    if matrix.size == 0:
        return np.zeros(0)
    return linalg.svd(matrix, compute_uv=False)


def numerical_rank(matrix: NDArray, rank_tol: float = DEFAULT_RANK_TOL) -> int:
    """Counts singular values >= rank_tol times the largest one (0 for a zero matrix)."""
    s = singular_values(np.atleast_2d(matrix))
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s >= rank_tol * s[0]))


def spd_solve(matrix: NDArray, rhs: NDArray) -> NDArray:
    """Solves `matrix @ X = rhs` for symmetric positive-definite `matrix`."""
    factor = linalg.cho_factor(symmetrize(matrix), lower=True, check_finite=False)
    return linalg.cho_solve(factor, rhs, check_finite=False)


def spd_solve_right(lhs: NDArray, matrix: NDArray) -> NDArray:
    """Returns `lhs @ matrix^{-1}` for symmetric positive-definite `matrix`."""
    return spd_solve(matrix, lhs.T).T


def outer_sum(left: NDArray, right: NDArray) -> NDArray:
    """Σ_t left_t right_t* for row-stacked vectors."""
    return left.T @ right


def frobenius(matrix: NDArray) -> float:
    return float(np.linalg.norm(matrix))
