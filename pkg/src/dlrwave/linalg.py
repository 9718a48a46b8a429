"""Dense linear-algebra kernels: thin QR, truncated SVD, matrix exponential.

Everything here is a pure function of its inputs. QR and SVD sit on top of
LAPACK (Householder QR, Golub-Kahan SVD), so repeated calls on identical
input give identical output.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple
import warnings

import numpy as np
import scipy.linalg as la

__all__ = [
    "DimensionError",
    "NonFiniteError",
    "SingularFactorWarning",
    "QRPair",
    "LowRankFactor",
    "as_matrix",
    "thin_qr",
    "truncated_svd",
    "expm",
]

#: relative threshold below which a triangular/core diagonal counts as zero
DEGENERATE_RTOL = 1e-14


class DimensionError(ValueError):
    """Raised when matrix shapes are incompatible with an operation."""


class NonFiniteError(ValueError):
    """Raised when an input matrix holds NaN or Inf entries."""


class SingularFactorWarning(UserWarning):
    """Emitted when a low-rank core is numerically singular."""


def as_matrix(A, name: str = "A") -> np.ndarray:
    """Return `A` as a finite 2-D float64 array, or raise."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {A.shape}")
    if A.size and not np.isfinite(A).all():
        raise NonFiniteError(f"{name} contains non-finite entries")
    return A


class QRPair(NamedTuple):
    """Thin QR factors ``A = Q @ R`` with ``diag(R) >= 0``."""

    Q: np.ndarray
    R: np.ndarray
    degenerate: bool = False


def thin_qr(A) -> QRPair:
    """Thin Householder QR with a nonnegative diagonal in R.

    Parameters
    ----------
    A : (m, r) array_like, m >= r

    Returns
    -------
    QRPair
        ``Q`` has orthonormal columns, ``R`` is upper triangular. The flag
        ``degenerate`` is set when some diagonal entry of ``R`` falls below
        ``1e-14 * ||A||_F``; ``Q`` is still orthonormal in that case.
    """
    A = as_matrix(A)
    m, r = A.shape
    if m < r:
        raise DimensionError(f"thin_qr needs m >= r, got {A.shape}")
    Q, R = np.linalg.qr(A, mode="reduced")
    signs = np.where(np.diag(R) < 0.0, -1.0, 1.0)
    Q = Q * signs
    R = signs[:, None] * R
    R = np.triu(R)
    scale = np.linalg.norm(A)
    degenerate = bool(r) and bool(np.min(np.diag(R)) <= DEGENERATE_RTOL * scale)
    return QRPair(Q, R, degenerate)


@dataclass(frozen=True, eq=False)
class LowRankFactor:
    """Rank-r matrix stored as ``U @ S @ V.T``.

    ``U`` (m x r) and ``V`` (n x r) have orthonormal columns; the core ``S``
    is r x r and need not be diagonal.
    """

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        m, r = self.U.shape
        n, rv = self.V.shape
        if rv != r or self.S.shape != (r, r):
            raise DimensionError(
                f"inconsistent factor shapes U{self.U.shape} S{self.S.shape} V{self.V.shape}"
            )
        if r > min(m, n):
            raise DimensionError(f"rank {r} exceeds min{(m, n)}")

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.U.shape[0], self.V.shape[0]

    def dense(self) -> np.ndarray:
        return (self.U @ self.S) @ self.V.T

    def transpose(self) -> "LowRankFactor":
        return LowRankFactor(self.V, self.S.T, self.U)

    @property
    def T(self) -> "LowRankFactor":
        return self.transpose()

    def orthogonality_error(self) -> float:
        """Largest of ``||U^T U - I||_F`` and ``||V^T V - I||_F``."""
        eye = np.eye(self.rank)
        return max(
            np.linalg.norm(self.U.T @ self.U - eye),
            np.linalg.norm(self.V.T @ self.V - eye),
        )

    def is_singular(self, rtol: float = DEGENERATE_RTOL) -> bool:
        sv = np.linalg.svd(self.S, compute_uv=False)
        return sv.size == 0 or sv[-1] <= rtol * max(sv[0], np.finfo(float).tiny)

    def is_finite(self) -> bool:
        return bool(
            np.isfinite(self.U).all() and np.isfinite(self.S).all() and np.isfinite(self.V).all()
        )


def truncated_svd(A, r: int, warn: bool = False) -> LowRankFactor:
    """Best rank-`r` approximation of `A` in the Frobenius norm.

    The returned core is ``diag(s_1, ..., s_r)`` in nonincreasing order. If
    `A` has rank below `r` the trailing entries are (numerically) zero and the
    factor is singular; pass ``warn=True`` to get a `SingularFactorWarning`.
    """
    A = as_matrix(A)
    m, n = A.shape
    if not 1 <= r <= min(m, n):
        raise DimensionError(f"rank {r} out of range for shape {A.shape}")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    factor = LowRankFactor(U[:, :r].copy(), np.diag(s[:r]), Vt[:r].T.copy())
    if warn and factor.is_singular():
        warnings.warn(
            f"rank-{r} truncation of a matrix with numerical rank below {r}",
            SingularFactorWarning,
            stacklevel=2,
        )
    return factor


def expm(A) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a Pade approximant."""
    A = as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"expm needs a square matrix, got {A.shape}")
    return la.expm(A)
