"""
Small dense linear-algebra kernel.

Provides the SPD solve/inverse used by the MAP and LS oracles, the largest
eigenvalue needed for the step-width bound, and positive-definiteness repair
of covariance matrices. All values are float64 numpy arrays.
"""

import logging
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh

from .errors import NoConvergence, NotPositiveDefinite, NotSymmetric, RepairFailed

logger = logging.getLogger(__name__)

Vector = NDArray[np.float64]
Matrix = NDArray[np.float64]

SYMMETRY_TOL = 1e-10
EIGEN_TOL = 1e-12
# Automatic repair tries sigma = scale * 10**e for these exponents
REPAIR_EXPONENTS = range(-10, 1)


def as_vector(values: ArrayLike, name: str = "vector") -> Vector:
    """Validate and convert to a finite 1-D float64 array"""
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim == 0:
        vec = vec.reshape(1)
    if vec.ndim != 1 or vec.size < 1:
        raise ValueError(f"{name} must be a non-empty 1-D array, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ValueError(f"{name} contains non-finite entries")
    return vec


def as_matrix(values: ArrayLike, name: str = "matrix") -> Matrix:
    """Validate and convert to a finite 2-D float64 array"""
    mat = np.asarray(values, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] < 1 or mat.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ValueError(f"{name} contains non-finite entries")
    return mat


def check_symmetric(A: Matrix, tol: float = SYMMETRY_TOL) -> None:
    """Raise NotSymmetric unless A is square and symmetric relative to max |entry|"""
    if A.shape[0] != A.shape[1]:
        raise NotSymmetric(f"matrix is not square: shape {A.shape}")
    scale = float(np.max(np.abs(A)))
    if scale == 0.0:
        return
    asymmetry = float(np.max(np.abs(A - A.T)))
    if asymmetry > tol * scale:
        raise NotSymmetric(f"asymmetry {asymmetry:.3e} exceeds {tol:g} * {scale:.3e}")


def _factor(A: Matrix):
    try:
        return cho_factor(A, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise NotPositiveDefinite(f"Cholesky factorization failed: {exc}") from exc


def is_positive_definite(A: ArrayLike) -> bool:
    """True when A is symmetric and its Cholesky factorization succeeds"""
    mat = as_matrix(A, "A")
    try:
        check_symmetric(mat)
        _factor(mat)
    except (NotSymmetric, NotPositiveDefinite):
        return False
    return True


def spd_solve(A: ArrayLike, b: ArrayLike) -> Vector:
    """
    Solve A x = b for symmetric positive definite A.

    Args:
        A: SPD matrix p x p
        b: right-hand side of length p

    Returns:
        Solution vector x
    """
    mat = as_matrix(A, "A")
    rhs = as_vector(b, "b")
    if mat.shape != (rhs.size, rhs.size):
        raise ValueError(f"A has shape {mat.shape}, b has length {rhs.size}")
    check_symmetric(mat)
    return cho_solve(_factor(mat), rhs, check_finite=False)


def spd_inverse(A: ArrayLike) -> Matrix:
    """Inverse of an SPD matrix via its Cholesky factor (result symmetrized)"""
    mat = as_matrix(A, "A")
    check_symmetric(mat)
    inverse = cho_solve(_factor(mat), np.eye(mat.shape[0]), check_finite=False)
    return 0.5 * (inverse + inverse.T)


def largest_eigenvalue(A: ArrayLike, tol: float = EIGEN_TOL) -> float:
    """
    Largest eigenvalue of a symmetric PSD matrix.

    Diagonal matrices return their largest diagonal entry. Otherwise the top
    eigenpair comes from LAPACK (scipy.linalg.eigh restricted to the last
    index) and is accepted only when its residual ||A x - lambda x|| is at
    most tol * max(|lambda|, max |entry|).

    Raises:
        NoConvergence: when LAPACK fails or the residual check does not hold
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    mat = as_matrix(A, "A")
    check_symmetric(mat)
    p = mat.shape[0]
    if np.count_nonzero(mat - np.diag(np.diag(mat))) == 0:
        return float(np.max(np.diag(mat)))

    sym = 0.5 * (mat + mat.T)
    try:
        values, vectors = eigh(sym, subset_by_index=[p - 1, p - 1], check_finite=False)
    except LinAlgError as exc:
        raise NoConvergence(f"eigenvalue solver failed: {exc}", 0) from exc
    lam = float(values[0])
    x = vectors[:, 0]
    residual = float(np.linalg.norm(sym @ x - lam * x))
    scale = max(abs(lam), float(np.max(np.abs(sym))))
    if residual > tol * scale:
        raise NoConvergence(f"eigen-residual {residual:.3e} exceeds {tol:g} * {scale:.3e}", 0)
    logger.debug("largest eigenvalue %.17g (residual %.3e)", lam, residual)
    return lam


def ensure_positive_definite(C: ArrayLike, sigma: Optional[float] = None) -> Matrix:
    """
    Repair a symmetric matrix into a positive definite one by adding sigma*I.

    Args:
        C: symmetric matrix
        sigma: explicit shift; None selects the automatic repair, which
            takes the first of sigma = 1e-10, 1e-9, ..., 1 times the mean
            diagonal that makes C + sigma*I PD (a PD input gets the 1e-10 shift)

    Raises:
        RepairFailed: when no admissible shift makes C + sigma*I PD
    """
    mat = as_matrix(C, "C")
    check_symmetric(mat)
    identity = np.eye(mat.shape[0])

    if sigma is not None:
        if sigma <= 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        repaired = mat + sigma * identity
        if not is_positive_definite(repaired):
            raise RepairFailed(f"C + {sigma:g} I is not positive definite")
        return repaired

    mean_diag = float(np.mean(np.diag(mat)))
    scale = mean_diag if mean_diag > 0 else 1.0
    for exponent in REPAIR_EXPONENTS:
        shift = scale * 10.0 ** exponent
        repaired = mat + shift * identity
        if is_positive_definite(repaired):
            logger.debug("repaired covariance with sigma=%.3e", shift)
            return repaired
    raise RepairFailed(f"C + sigma I not positive definite up to sigma={scale:g}")
