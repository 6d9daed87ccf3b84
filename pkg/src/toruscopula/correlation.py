"""Parametric correlation structures and Cholesky-based linear algebra.

The inverse correlation matrix is never formed: determinants, quadratic
forms and conditional partitions all go through the lower-triangular factor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.linalg import lapack, solve_triangular

# Minimum admissible Cholesky pivot (squared diagonal of the factor).
PIVOT_TOL = 1e-12


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Correlation matrix is not (numerically) positive definite."""

    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = pivot
        super().__init__(message or f"matrix is not positive definite (failing pivot index {pivot})")


@dataclass(frozen=True)
class AR1:
    """Serial correlation ``rho ** |h - k|`` on ``dim`` equally spaced times."""

    rho: float
    dim: int

    def __post_init__(self):
        if not abs(self.rho) < 1.0:
            raise ValueError(f"AR1 requires |rho| < 1, got {self.rho}")
        if self.dim < 1:
            raise ValueError("dimension must be at least 1")

    def matrix(self) -> np.ndarray:
        lag = np.abs(np.subtract.outer(np.arange(self.dim), np.arange(self.dim)))
        return np.power(float(self.rho), lag)


@dataclass(frozen=True, eq=False)
class ExpDecay:
    """Spatial correlation ``exp(-rho * d(h, k))`` from a distance matrix."""

    rho: float
    distances: np.ndarray

    def __post_init__(self):
        if not (self.rho > 0.0 and np.isfinite(self.rho)):
            raise ValueError(f"ExpDecay requires rho > 0, got {self.rho}")
        d = np.asarray(self.distances, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("distances must be a square matrix")
        if np.any(d < 0) or np.any(np.diag(d) != 0) or not np.allclose(d, d.T, rtol=0, atol=1e-12):
            raise ValueError("distances must be symmetric, non-negative, with zero diagonal")
        object.__setattr__(self, "distances", d)

    @property
    def dim(self) -> int:
        return self.distances.shape[0]

    def matrix(self) -> np.ndarray:
        return np.exp(-self.rho * self.distances)


@dataclass(frozen=True, eq=False)
class Unstructured:
    """An arbitrary positive definite correlation matrix."""

    corr: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.corr, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("correlation matrix must be square")
        if not np.allclose(np.diag(m), 1.0, rtol=0, atol=1e-12):
            raise ValueError("correlation matrix must have unit diagonal")
        if not np.allclose(m, m.T, rtol=0, atol=1e-12):
            raise ValueError("correlation matrix must be symmetric")
        object.__setattr__(self, "corr", m)

    @property
    def dim(self) -> int:
        return self.corr.shape[0]

    def matrix(self) -> np.ndarray:
        factorize(self.corr)
        return self.corr.copy()


@dataclass(frozen=True)
class Identity:
    dim: int

    def matrix(self) -> np.ndarray:
        return np.eye(self.dim)


CorrelationStructure = Union[AR1, ExpDecay, Unstructured, Identity]


def build_matrix(structure: CorrelationStructure) -> np.ndarray:
    return structure.matrix()


@dataclass(frozen=True)
class ConditionalPartition:
    """Regression of one normal coordinate on the others.

    ``weights`` multiply the remaining coordinates (in their original order)
    to give the conditional mean; ``cond_variance`` is the residual variance.
    """

    target: int
    weights: np.ndarray
    cond_variance: float

    def mean(self, z_rest):
        return np.asarray(z_rest, dtype=float) @ self.weights


@dataclass(frozen=True, eq=False)
class FactoredCorrelation:
    matrix: np.ndarray
    lower: np.ndarray
    log_det: float

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def whiten(self, z):
        """Return ``L^{-1} z`` for z of shape (K,) or (n, K)."""
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim:
            raise ValueError(f"expected trailing dimension {self.dim}, got {z.shape[-1]}")
        flat = z.reshape(-1, self.dim)
        w = solve_triangular(self.lower, flat.T, lower=True, check_finite=False)
        return w.T.reshape(z.shape)

    def solve(self, b):
        """Solve ``Omega x = b`` for b of shape (K,) or (K, m)."""
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.dim:
            raise ValueError(f"expected leading dimension {self.dim}, got {b.shape[0]}")
        y = solve_triangular(self.lower, b, lower=True, check_finite=False)
        return solve_triangular(self.lower, y, lower=True, trans="T", check_finite=False)

    def quadratic_form(self, z):
        """``z'z - z' Omega^{-1} z``, vectorized over leading axes."""
        z = np.asarray(z, dtype=float)
        w = self.whiten(z)
        return np.sum(z * z, axis=-1) - np.sum(w * w, axis=-1)

    def conditional_partition(self, target: int) -> ConditionalPartition:
        k = self.dim
        if k < 2:
            raise ValueError("conditioning requires at least two coordinates")
        if not 0 <= target < k:
            raise IndexError(f"target index {target} out of range for dimension {k}")
        e = np.zeros(k)
        e[target] = 1.0
        col = self.solve(e)  # column of the precision matrix
        precision = col[target]
        weights = -np.delete(col, target) / precision
        return ConditionalPartition(target, weights, float(1.0 / precision))


def factorize(matrix) -> FactoredCorrelation:
    """Cholesky-factorize a correlation matrix.

    Raises
    ------
    NotPositiveDefiniteError
        If a pivot is non-positive or below ``PIVOT_TOL``; ``.pivot`` holds
        the zero-based index of the offending pivot.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    lower, info = lapack.dpotrf(m, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(info - 1)
    if info < 0:
        raise ValueError(f"invalid argument {-info} to dpotrf")
    diag = np.diag(lower)
    bad = np.nonzero(diag * diag <= PIVOT_TOL)[0]
    if bad.size:
        raise NotPositiveDefiniteError(int(bad[0]))
    return FactoredCorrelation(m, lower, float(2.0 * np.sum(np.log(diag))))
