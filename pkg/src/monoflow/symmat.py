"""Dense symmetric-matrix algebra for diffusion matrices and PSD side conditions.

All matrices in this package are tiny (dimension <= 8) and well scaled, so
everything is dense and eigenvalue based.  PSD tests go through a symmetric
eigendecomposition rather than Cholesky so that the signed gap (the minimum
eigenvalue) is available for margin reporting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, SingularMatrixError

#: inverses are refused beyond this condition number
COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class SymMatrix:
    """Immutable dense symmetric matrix, symmetrized on construction."""

    a: np.ndarray

    def __init__(self, entries):
        a = np.asarray(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
        if a.shape[0] < 1:
            raise DimensionMismatch("matrix dimension must be >= 1")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.a)

    def min_eig(self) -> float:
        return float(self.eigenvalues()[0])

    def tolist(self):
        return [[float(v) for v in row] for row in self.a]

    def __add__(self, other: "SymMatrix") -> "SymMatrix":
        if self.dim != other.dim:
            raise DimensionMismatch("dimension mismatch in matrix sum")
        return SymMatrix(self.a + other.a)

    def __sub__(self, other: "SymMatrix") -> "SymMatrix":
        if self.dim != other.dim:
            raise DimensionMismatch("dimension mismatch in matrix difference")
        return SymMatrix(self.a - other.a)

    def scaled(self, c: float) -> "SymMatrix":
        return SymMatrix(float(c) * self.a)

    def allclose(self, other: "SymMatrix", tol: float = 1e-12) -> bool:
        return self.dim == other.dim and bool(
            np.all(np.abs(self.a - other.a) <= tol)
        )

    def __repr__(self):
        return f"SymMatrix({self.tolist()})"


@dataclass(frozen=True, eq=False)
class LinearMap:
    """Real matrix viewed as a map from R^cols to R^rows."""

    a: np.ndarray

    def __init__(self, entries):
        a = np.asarray(entries, dtype=float)
        if a.ndim != 2:
            raise DimensionMismatch(f"expected a matrix, got shape {a.shape}")
        if min(a.shape) < 1:
            raise DimensionMismatch("map dimensions must be >= 1")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def rows(self) -> int:
        return self.a.shape[0]

    @property
    def cols(self) -> int:
        return self.a.shape[1]

    def is_surjective(self, tol: float = 1e-10) -> bool:
        s = np.linalg.svd(self.a, compute_uv=False)
        return len(s) >= self.rows and s[self.rows - 1] > tol * max(s[0], 1.0)

    def is_isometry(self, tol: float = 1e-12) -> bool:
        """True when the rows are orthonormal (L L* = identity)."""
        g = self.a @ self.a.T
        return bool(np.all(np.abs(g - np.eye(self.rows)) <= tol))

    def tolist(self):
        return [[float(v) for v in row] for row in self.a]

    def __repr__(self):
        return f"LinearMap({self.tolist()})"


def identity(n: int) -> SymMatrix:
    return SymMatrix(np.eye(n))


def diag(values) -> SymMatrix:
    return SymMatrix(np.diag(np.asarray(values, dtype=float)))


def is_psd(s: SymMatrix, tol: float) -> bool:
    """True iff the minimum eigenvalue of ``s`` is >= -tol."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return s.min_eig() >= -tol


def psd_leq(s1: SymMatrix, s2: SymMatrix, tol: float = 0.0) -> bool:
    """Loewner order test: true iff ``s2 - s1`` is PSD within tol."""
    if s1.dim != s2.dim:
        raise DimensionMismatch(
            f"psd_leq: dimension mismatch {s1.dim} vs {s2.dim}"
        )
    return is_psd(s2 - s1, tol)


def direct_sum(s1: SymMatrix, s2: SymMatrix) -> SymMatrix:
    """Block-diagonal sum; dimension is the sum of the dimensions."""
    n1, n2 = s1.dim, s2.dim
    out = np.zeros((n1 + n2, n1 + n2))
    out[:n1, :n1] = s1.a
    out[n1:, n1:] = s2.a
    return SymMatrix(out)


def congruence(l: LinearMap, s: SymMatrix) -> SymMatrix:
    """Pullback L* S L of a form on R^rows to a form on R^cols."""
    if l.rows != s.dim:
        raise DimensionMismatch(
            f"congruence: map has {l.rows} rows but matrix has dim {s.dim}"
        )
    return SymMatrix(l.a.T @ s.a @ l.a)


def det(s: SymMatrix) -> float:
    return float(np.linalg.det(s.a))


def trace(s: SymMatrix) -> float:
    return float(np.trace(s.a))


def inverse(s: SymMatrix) -> SymMatrix:
    """Inverse with a hard conditioning guard.

    Raises SingularMatrixError when the eigenvalue spread exceeds
    ``COND_LIMIT`` or the matrix is numerically singular, so that certificate
    derivation fails loudly instead of silently degrading.
    """
    w = s.eigenvalues()
    small = np.abs(w).min()
    large = np.abs(w).max()
    if small == 0.0 or large / small > COND_LIMIT:
        raise SingularMatrixError(
            f"matrix is singular or ill-conditioned (|eig| range "
            f"[{small:.3e}, {large:.3e}], det={det(s):.3e})"
        )
    return SymMatrix(np.linalg.inv(s.a))


def random_spd(n: int, rng: np.random.Generator, spread: float = 2.0) -> SymMatrix:
    """Well-conditioned random SPD matrix with eigenvalues in [1/spread, spread]."""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.exp(rng.uniform(-np.log(spread), np.log(spread), size=n))
    return SymMatrix((q * w) @ q.T)
