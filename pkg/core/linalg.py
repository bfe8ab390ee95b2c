"""
Small dense linear algebra for hidden-vi
File: core/linalg.py
Matrix/vector helpers, SPD solves, pseudo-inverse solves and spectral estimates
used by the Gauss-Newton family and the verification suites
"""

import math

import numpy as np
from scipy import linalg as sla

from .errors import DimensionMismatch, InvalidArgument, NotPositiveDefinite, ZeroMatrix

# Eigenvalues of J^T J below RANK_TOL * max eigenvalue count as zero
RANK_TOL = 1e-12
SYMMETRY_TOL = 1e-10
# Squared Cholesky pivots below PIVOT_TOL * max diagonal mean the matrix is numerically singular
PIVOT_TOL = 1e-13


def as_vector(values, name: str = "vector") -> np.ndarray:
    """Return a finite 1-D float64 array"""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidArgument(f"{name} has non-finite entries")
    return v


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Return a finite 2-D float64 array"""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidArgument(f"{name} has non-finite entries")
    return m


def mat_vec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product with a shape check"""
    m = as_matrix(m)
    v = as_vector(v)
    if m.shape[1] != v.shape[0]:
        raise DimensionMismatch(f"cannot apply {m.shape} matrix to vector of length {v.shape[0]}")
    return m @ v


def solve_spd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a x = b for symmetric positive-definite a by Cholesky"""
    a = as_matrix(a)
    b = as_vector(b)
    if a.shape[0] != a.shape[1] or a.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"solve_spd needs square a matching b, got {a.shape} and {b.shape}")
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_TOL:
        raise NotPositiveDefinite("matrix is not symmetric")
    try:
        lower = sla.cholesky(a, lower=True)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefinite(f"non-positive pivot: {e}") from e
    pivot = float(np.min(np.diag(lower)))
    if pivot * pivot <= PIVOT_TOL * float(np.max(np.diag(a))):
        raise NotPositiveDefinite(f"numerically singular: smallest pivot {pivot:.3e}")
    y = sla.solve_triangular(lower, b, lower=True)
    return sla.solve_triangular(lower.T, y, lower=False)


def pinv_solve(j: np.ndarray, b: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """
    Minimum-norm least-squares solution of j x = b.

    Uses the symmetric eigendecomposition of the Gram matrix j^T j; eigenvalues
    below tol times the largest are dropped.
    """
    j = as_matrix(j)
    b = as_vector(b)
    if j.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"pinv_solve: j has {j.shape[0]} rows, b has length {b.shape[0]}")
    w, vecs = np.linalg.eigh(j.T @ j)
    top = w[-1] if w.size else 0.0
    if top <= 0.0:
        raise ZeroMatrix("Gram matrix has no positive eigenvalue")
    keep = w > tol * top
    basis = vecs[:, keep]
    return basis @ ((basis.T @ (j.T @ b)) / w[keep])


def _eig2_modulus(m: np.ndarray) -> float:
    trace = m[0, 0] + m[1, 1]
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    disc = trace * trace - 4.0 * det
    if disc >= 0.0:
        root = math.sqrt(disc)
        return max(abs(trace + root), abs(trace - root)) / 2.0
    # complex pair: |lambda|^2 = det
    return math.sqrt(det)


def spectral_radius(m: np.ndarray, iters: int = 500) -> float:
    """
    Spectral size of a square matrix.

    2x2 matrices use the closed-form eigenvalue modulus. Larger matrices return
    the operator norm sqrt(lambda_max(m^T m)) from power iteration.
    """
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"spectral_radius needs a square matrix, got {m.shape}")
    if not np.any(m):
        return 0.0
    if m.shape == (2, 2):
        return _eig2_modulus(m)
    gram = m.T @ m
    x = np.linspace(1.0, 2.0, m.shape[0])
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(iters):
        y = gram @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        x = y / norm
        estimate = float(x @ (gram @ x))
    return math.sqrt(max(estimate, 0.0))


def sym_eig_extremes(m: np.ndarray):
    """Smallest and largest eigenvalue of the symmetric part of m"""
    sym = 0.5 * (m + m.T)
    w = np.linalg.eigvalsh(sym)
    return float(w[0]), float(w[-1])
