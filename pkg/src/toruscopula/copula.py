"""Gaussian-copula distributions on the hypertorus.

Each coordinate ``y_k`` is mapped to the normal scale by
``z_k = Phi^{-1}(F_k(y_k))``; the vector ``z`` is jointly ``N(0, Omega)``.
The joint log-density is

    -1/2 log|Omega| + 1/2 z'(I - Omega^{-1}) z + sum_k log f_k(y_k).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .correlation import (
    CorrelationStructure,
    FactoredCorrelation,
    Identity,
    Unstructured,
    factorize,
)
from .marginals import TWO_PI, MarginalModel, normalize_angle
from .special import norm_cdf, norm_logpdf, norm_ppf

# F_k is clamped to this interval before the normal quantile is applied.
CDF_CLAMP = 1e-14


def _clamp(u):
    return np.clip(u, CDF_CLAMP, 1.0 - CDF_CLAMP)


@dataclass(frozen=True)
class PredictionArc:
    """Arc traversed counterclockwise from ``lower`` to ``upper``.

    Fields may be arrays when arcs are computed for many conditioning values
    at once.
    """

    lower: float | np.ndarray
    upper: float | np.ndarray
    coverage: float

    @property
    def length(self):
        return np.mod(np.asarray(self.upper) - np.asarray(self.lower), TWO_PI)

    @property
    def crosses_cut(self):
        """True where the arc passes through the +-pi boundary."""
        return np.asarray(self.upper) < np.asarray(self.lower)

    def contains(self, y):
        return np.mod(np.asarray(y) - np.asarray(self.lower), TWO_PI) <= self.length


@dataclass(frozen=True, eq=False)
class CopulaModel:
    """K circular margins bound by a Gaussian copula with correlation structure."""

    marginals: tuple
    correlation: CorrelationStructure

    def __post_init__(self):
        margins = tuple(self.marginals)
        if len(margins) < 1:
            raise ValueError("need at least one marginal")
        if self.correlation.dim != len(margins):
            raise ValueError(
                f"correlation dimension {self.correlation.dim} does not match "
                f"{len(margins)} marginals"
            )
        object.__setattr__(self, "marginals", margins)

    @property
    def dim(self) -> int:
        return len(self.marginals)

    @cached_property
    def _shared(self) -> bool:
        first = self.marginals[0]
        return all(m is first or m == first for m in self.marginals[1:])

    @cached_property
    def factor(self) -> FactoredCorrelation:
        return factorize(self.correlation.matrix())

    def _split(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.dim:
            raise ValueError(f"expected {self.dim} angles per observation, got {y.shape[-1]}")
        return y

    def z_transform(self, y):
        """Map angles of shape (..., K) to the normal scale."""
        y = self._split(y)
        if self._shared:
            return norm_ppf(_clamp(self.marginals[0].cdf(y)))
        z = np.empty_like(y)
        for k, m in enumerate(self.marginals):
            z[..., k] = norm_ppf(_clamp(m.cdf(y[..., k])))
        return z

    def z_inverse(self, z):
        """Map normal-scale values of shape (..., K) back to angles."""
        z = self._split(z)
        if self._shared:
            return self.marginals[0].quantile(_clamp(norm_cdf(z)))
        y = np.empty_like(z)
        for k, m in enumerate(self.marginals):
            y[..., k] = m.quantile(_clamp(norm_cdf(z[..., k])))
        return y

    def marginal_log_density(self, y):
        y = self._split(y)
        if self._shared:
            return np.sum(self.marginals[0].logpdf(y), axis=-1)
        return sum(m.logpdf(y[..., k]) for k, m in enumerate(self.marginals))

    def log_copula_density(self, z):
        fc = self.factor
        return -0.5 * fc.log_det + 0.5 * fc.quadratic_form(z)

    def joint_log_density(self, y):
        y = self._split(y)
        if isinstance(self.correlation, Identity):
            return self.marginal_log_density(y)
        return self.log_copula_density(self.z_transform(y)) + self.marginal_log_density(y)

    def pdf(self, y):
        return np.exp(self.joint_log_density(y))

    def submodel(self, indices: Sequence[int]) -> "CopulaModel":
        """Joint distribution of a subset of coordinates (again a Gaussian copula)."""
        idx = list(indices)
        omega = self.factor.matrix[np.ix_(idx, idx)]
        return CopulaModel(tuple(self.marginals[i] for i in idx), Unstructured(omega))

    def _conditional(self, target, y_rest):
        if self.dim < 2:
            raise ValueError("conditional distributions need K >= 2")
        if not 0 <= target < self.dim:
            raise IndexError(f"target index {target} out of range")
        part = self.factor.conditional_partition(target)
        y_rest = np.asarray(y_rest, dtype=float)
        if y_rest.shape[-1] != self.dim - 1:
            raise ValueError(f"expected {self.dim - 1} conditioning angles")
        z_rest = np.empty_like(y_rest)
        others = [k for k in range(self.dim) if k != target]
        for j, k in enumerate(others):
            z_rest[..., j] = norm_ppf(_clamp(self.marginals[k].cdf(y_rest[..., j])))
        return z_rest @ part.weights, part.cond_variance

    def conditional_log_density(self, target: int, y_target, y_rest):
        """Log-density of coordinate ``target`` given the other K-1 angles.

        ``y_rest`` lists the remaining coordinates in their original order.
        """
        mean, var = self._conditional(target, y_rest)
        m = self.marginals[target]
        z = norm_ppf(_clamp(m.cdf(y_target)))
        return m.logpdf(y_target) + norm_logpdf(z, mean, var) - norm_logpdf(z)

    def conditional_quantile(self, target: int, y_rest, p):
        p = np.asarray(p, dtype=float)
        if np.any(~((p > 0.0) & (p < 1.0))):
            raise ValueError("probabilities must lie strictly inside (0, 1)")
        mean, var = self._conditional(target, y_rest)
        q = mean + np.sqrt(var) * norm_ppf(p)
        return self.marginals[target].quantile(_clamp(norm_cdf(q)))

    def prediction_arc(self, target: int, y_rest, coverage: float = 0.95) -> PredictionArc:
        if not 0.0 < coverage < 1.0:
            raise ValueError("coverage must lie in (0, 1)")
        alpha = 0.5 * (1.0 - coverage)
        lower = self.conditional_quantile(target, y_rest, alpha)
        upper = self.conditional_quantile(target, y_rest, 1.0 - alpha)
        return PredictionArc(lower, upper, coverage)

    def simulate(self, n: int, seed=None):
        """Draw ``n`` angle vectors, shape (n, K)."""
        if n < 1:
            raise ValueError("sample size must be at least 1")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        eps = rng.standard_normal((n, self.dim))
        z = eps @ self.factor.lower.T
        return self.z_inverse(z)


def make_model(marginals: Sequence[MarginalModel] | MarginalModel, correlation: CorrelationStructure) -> CopulaModel:
    """Build a model, repeating a single marginal across all coordinates."""
    if not isinstance(marginals, (list, tuple)):
        marginals = (marginals,) * correlation.dim
    return CopulaModel(tuple(marginals), correlation)


__all__ = ["CopulaModel", "PredictionArc", "make_model", "normalize_angle", "CDF_CLAMP"]
