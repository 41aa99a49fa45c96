"""Dense complex linear algebra used throughout the package.

Matrices are plain ``numpy.ndarray`` objects of dtype ``complex128`` stored in
C (row-major) order; entry ``(i, j)`` lives at flat offset ``i * cols + j``.
Vectorization of density matrices (column stacking) is a separate convention
owned by :mod:`lindlearn.engine`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "as_matrix",
    "kron",
    "commutator",
    "anticommutator",
    "trace",
    "adjoint",
    "frobenius_inner",
    "is_hermitian",
    "expm",
    "eig_general",
    "EigenDecomposition",
    "DefectiveMatrixError",
    "MAX_EIG_DIM",
]

HERMITIAN_TOL = 1e-12
# Mandatory support is 256; 1024 (five-site chain superoperator) is best effort.
MAX_EIG_DIM = 1024


class DefectiveMatrixError(np.linalg.LinAlgError):
    """Raised when the eigenvector matrix is numerically singular."""

    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


def as_matrix(a) -> np.ndarray:
    m = np.ascontiguousarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {m.shape}")
    return m


def _check_square(m: np.ndarray, name: str = "matrix") -> None:
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def kron(a, b) -> np.ndarray:
    """Kronecker product; block ``(i, j)`` of the result is ``a[i, j] * b``."""
    return np.kron(as_matrix(a), as_matrix(b))


def commutator(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    _check_square(a)
    _check_same_shape(a, b)
    return a @ b - b @ a


def anticommutator(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    _check_square(a)
    _check_same_shape(a, b)
    return a @ b + b @ a


def trace(a) -> complex:
    a = as_matrix(a)
    _check_square(a)
    return complex(np.trace(a))


def adjoint(a) -> np.ndarray:
    return as_matrix(a).conj().T.copy()


def frobenius_inner(a, b) -> complex:
    """``Tr[a^dagger b]``."""
    a, b = as_matrix(a), as_matrix(b)
    _check_same_shape(a, b)
    return complex(np.vdot(a, b))


def is_hermitian(a, tol: float = HERMITIAN_TOL) -> bool:
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        return False
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol)


def expm(m) -> np.ndarray:
    """Matrix exponential (Pade scaling and squaring)."""
    m = as_matrix(m)
    _check_square(m)
    return scipy.linalg.expm(m)


@dataclass(frozen=True)
class EigenDecomposition:
    """Right and left eigenvectors with ``left[:, m].conj() @ right[:, n] == delta_mn``.

    Columns of ``right`` are unit-norm; ``left`` is scaled to make the pair
    biorthonormal. ``condition`` is the 2-norm condition number of ``right``.
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    condition: float

    def reconstruct(self) -> np.ndarray:
        return (self.right * self.eigenvalues) @ self.left.conj().T


def eig_general(m, max_condition: float = 1e12) -> EigenDecomposition:
    """Eigendecomposition of a general (non-Hermitian) square matrix.

    The left vectors are taken from the rows of the inverse of the right
    eigenvector matrix, which makes the pair biorthonormal by construction
    whenever the matrix is diagonalizable (also inside degenerate
    eigenspaces). A numerically singular eigenvector matrix raises
    :class:`DefectiveMatrixError` carrying the condition estimate.
    """
    m = as_matrix(m)
    _check_square(m)
    n = m.shape[0]
    if n > MAX_EIG_DIM:
        raise ValueError(f"dimension {n} exceeds the supported limit {MAX_EIG_DIM}")
    if not np.all(np.isfinite(m)):
        raise np.linalg.LinAlgError("matrix contains non-finite entries")
    w, u = scipy.linalg.eig(m, right=True)
    u = u / np.linalg.norm(u, axis=0)
    cond = float(np.linalg.cond(u))
    if not np.isfinite(cond) or cond > max_condition:
        raise DefectiveMatrixError(
            f"eigenvector matrix is near-singular (condition {cond:.3e}); "
            "the matrix is defective or nearly so",
            cond,
        )
    left_h = np.linalg.solve(u, np.eye(n, dtype=np.complex128))
    return EigenDecomposition(eigenvalues=w, right=u, left=left_h.conj().T, condition=cond)
