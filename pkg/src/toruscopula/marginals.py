"""Circular marginal families: von Mises and wrapped Cauchy.

Every cdf is measured from the cut point ``mu - pi``, so ``cdf(mu - pi) = 0``
and ``cdf(mu) = 0.5`` for both (symmetric) families. Angles are normalized
to ``[-pi, pi)`` on output.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from scipy import optimize

from .special import (
    bessel_ratios,
    log_bessel_i0,
    mean_resultant_length,
    norm_cdf,
)

TWO_PI = 2.0 * np.pi

# Series coefficients are dropped once below this; stricter than needed for
# 1e-12 accuracy so that truncation does not jitter finite-difference
# derivatives of the likelihood.
_SERIES_TOL = 1e-16
_SERIES_MAX_TERMS = 600
# Above this concentration the Bessel series needs more than the term cap;
# fall back to a normal expansion with O(kappa^-2) error.
_LARGE_KAPPA = 4000.0
_BISECTION_STEPS = 46
_CHUNK = 1 << 16


class DegenerateDataError(ValueError):
    """Raised when a sample implies unbounded concentration."""


def normalize_angle(y):
    """Map angles to ``[-pi, pi)``."""
    y = np.asarray(y, dtype=float)
    out = np.mod(y + np.pi, TWO_PI) - np.pi
    out = np.where(out >= np.pi, out - TWO_PI, out)
    return out[()] if out.ndim == 0 else out


def _check_unit_interval(p):
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    return p


@lru_cache(maxsize=256)
def _vm_series_coefficients(kappa: float) -> np.ndarray:
    # c_j = I_j(kappa) / (j * I_0(kappa)), truncated once negligible
    ratios = bessel_ratios(kappa, _SERIES_MAX_TERMS)
    coef = ratios / np.arange(1, _SERIES_MAX_TERMS + 1)
    small = np.nonzero(coef < _SERIES_TOL)[0]
    n = small[0] if small.size else _SERIES_MAX_TERMS
    out = coef[:n].copy()
    out.setflags(write=False)
    return out


def _vm_cdf_centered(theta: np.ndarray, kappa: float) -> np.ndarray:
    """von Mises cdf at ``theta`` in [-pi, pi) for a zero-mean variate."""
    if kappa > _LARGE_KAPPA:
        c = 2.0 * np.sqrt(kappa) * np.sin(0.5 * theta)
        phi = np.exp(-0.5 * c * c) / np.sqrt(TWO_PI)
        return np.clip(norm_cdf(c) - c * phi / (8.0 * kappa + 1.0), 0.0, 1.0)
    coef = _vm_series_coefficients(float(kappa))
    out = (theta + np.pi) / TWO_PI
    if coef.size == 0:
        return out
    j = np.arange(1, coef.size + 1)
    flat = theta.ravel()
    acc = np.empty_like(flat)
    for start in range(0, flat.size, _CHUNK):
        block = flat[start:start + _CHUNK]
        acc[start:start + _CHUNK] = np.sin(np.outer(block, j)) @ coef
    out = out + acc.reshape(theta.shape) / np.pi
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class VonMises:
    """von Mises distribution with mean ``mu`` and concentration ``kappa > 0``."""

    mu: float
    kappa: float

    family = "vm"

    def __post_init__(self):
        if not np.isfinite(self.mu):
            raise ValueError("mu must be finite")
        if not (self.kappa > 0.0 and np.isfinite(self.kappa)):
            raise ValueError(f"von Mises kappa must be positive, got {self.kappa}")
        object.__setattr__(self, "mu", float(normalize_angle(self.mu)))
        object.__setattr__(self, "kappa", float(self.kappa))

    def logpdf(self, y):
        theta = np.asarray(y, dtype=float) - self.mu
        return self.kappa * (np.cos(theta) - 1.0) - np.log(TWO_PI) - (
            log_bessel_i0(self.kappa) - self.kappa
        )

    def pdf(self, y):
        return np.exp(self.logpdf(y))

    def cdf(self, y):
        theta = normalize_angle(np.asarray(y, dtype=float) - self.mu)
        out = _vm_cdf_centered(np.asarray(theta, dtype=float), self.kappa)
        return out[()] if np.ndim(out) == 0 else out

    def quantile(self, p):
        p = _check_unit_interval(p)
        lo = np.full(p.shape, -np.pi)
        hi = np.full(p.shape, np.pi)
        # cdf is increasing on the arc, so plain bisection is safe
        for _ in range(_BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            below = _vm_cdf_centered(mid, self.kappa) < p
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return normalize_angle(self.mu + 0.5 * (lo + hi))

    def sample(self, n: int, seed=None):
        """Best-Fisher rejection sampler."""
        rng = _rng(n, seed)
        k = self.kappa
        if k < 1e-8:
            return normalize_angle(rng.uniform(-np.pi, np.pi, size=n))
        tau = 1.0 + np.sqrt(1.0 + 4.0 * k * k)
        rho = (tau - np.sqrt(2.0 * tau)) / (2.0 * k)
        r = (1.0 + rho * rho) / (2.0 * rho)
        out = np.empty(n)
        filled = 0
        while filled < n:
            m = max(2 * (n - filled), 16)
            u1, u2, u3 = rng.random((3, m))
            z = np.cos(np.pi * u1)
            f = (1.0 + r * z) / (r + z)
            c = k * (r - f)
            with np.errstate(divide="ignore", invalid="ignore"):
                ok = (c * (2.0 - c) - u2 > 0.0) | (np.log(c / u2) + 1.0 - c >= 0.0)
            theta = np.sign(u3[ok] - 0.5) * np.arccos(np.clip(f[ok], -1.0, 1.0))
            take = min(theta.size, n - filled)
            out[filled:filled + take] = theta[:take]
            filled += take
        return normalize_angle(self.mu + out)


@dataclass(frozen=True)
class WrappedCauchy:
    """Wrapped Cauchy distribution with mean ``mu`` and ``0 <= kappa < 1``."""

    mu: float
    kappa: float

    family = "wc"

    def __post_init__(self):
        if not np.isfinite(self.mu):
            raise ValueError("mu must be finite")
        if not (0.0 <= self.kappa < 1.0):
            raise ValueError(f"wrapped Cauchy kappa must lie in [0, 1), got {self.kappa}")
        object.__setattr__(self, "mu", float(normalize_angle(self.mu)))
        object.__setattr__(self, "kappa", float(self.kappa))

    def logpdf(self, y):
        k = self.kappa
        theta = np.asarray(y, dtype=float) - self.mu
        return (
            np.log1p(-k * k)
            - np.log(TWO_PI)
            - np.log(1.0 + k * k - 2.0 * k * np.cos(theta))
        )

    def pdf(self, y):
        return np.exp(self.logpdf(y))

    def cdf(self, y):
        k = self.kappa
        theta = normalize_angle(np.asarray(y, dtype=float) - self.mu)
        out = 0.5 + np.arctan((1.0 + k) / (1.0 - k) * np.tan(0.5 * theta)) / np.pi
        out = np.clip(out, 0.0, 1.0)
        return out[()] if np.ndim(out) == 0 else out

    def quantile(self, p):
        p = _check_unit_interval(p)
        k = self.kappa
        theta = 2.0 * np.arctan((1.0 - k) / (1.0 + k) * np.tan(np.pi * (p - 0.5)))
        return normalize_angle(self.mu + theta)

    def sample(self, n: int, seed=None):
        """Wrap a linear Cauchy variate with scale ``-log(kappa)``."""
        rng = _rng(n, seed)
        u = rng.random(n)
        if self.kappa == 0.0:
            return normalize_angle(np.pi * (2.0 * u - 1.0))
        scale = -np.log(self.kappa)
        return normalize_angle(self.mu + scale * np.tan(np.pi * (u - 0.5)))


MarginalModel = Union[VonMises, WrappedCauchy]

FAMILIES = {"vm": VonMises, "wc": WrappedCauchy}


def _rng(n, seed):
    if n < 1:
        raise ValueError("sample size must be at least 1")
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def make_marginal(family: str, mu: float, kappa: float) -> MarginalModel:
    try:
        cls = FAMILIES[family.lower()]
    except KeyError:
        raise ValueError(f"unknown family {family!r}; expected one of {sorted(FAMILIES)}") from None
    return cls(mu, kappa)


def circular_mean(data):
    """Return the circular mean direction and mean resultant length."""
    data = np.asarray(data, dtype=float)
    s, c = np.sin(data).mean(), np.cos(data).mean()
    return float(np.arctan2(s, c)), float(np.hypot(s, c))


def invert_mean_resultant_length(rbar: float) -> float:
    """Solve ``A_1(kappa) = rbar`` for kappa by bisection in log-kappa."""
    if rbar >= 1.0 - 1e-12:
        raise DegenerateDataError("mean resultant length is 1; concentration is unbounded")
    lo, hi = np.log(1e-8), np.log(1e3)
    if mean_resultant_length(np.exp(lo)) >= rbar:
        return float(np.exp(lo))
    while mean_resultant_length(np.exp(hi)) < rbar:
        hi += np.log(10.0)
        if hi > np.log(1e12):
            raise DegenerateDataError("sample too concentrated to estimate kappa")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_resultant_length(np.exp(mid)) < rbar:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    return float(np.exp(0.5 * (lo + hi)))


def fit_single_margin(data, family: str = "vm") -> MarginalModel:
    """Maximum likelihood fit of one circular family to a sample of angles.

    For the von Mises family the estimate is closed form in the mean
    direction and solves ``A_1(kappa) = Rbar`` for the concentration. The
    wrapped Cauchy estimate is found numerically, started from the moment
    estimate ``kappa = Rbar``.

    Raises
    ------
    DegenerateDataError
        If all observations coincide.
    """
    data = normalize_angle(np.asarray(data, dtype=float).ravel())
    if data.size < 3:
        raise ValueError("need at least 3 observations to fit a margin")
    if np.ptp(data) == 0.0:
        raise DegenerateDataError("all angles are identical; concentration is unbounded")
    mu, rbar = circular_mean(data)
    family = family.lower()
    if family == "vm":
        return VonMises(mu, invert_mean_resultant_length(rbar))
    if family != "wc":
        raise ValueError(f"unknown family {family!r}")

    def nll(x):
        k = 1.0 / (1.0 + np.exp(-x[1]))
        if k >= 1.0:
            return np.inf
        return -np.sum(WrappedCauchy(x[0], k).logpdf(data))

    k0 = min(max(rbar, 1e-4), 0.999)
    x0 = np.array([mu, np.log(k0 / (1.0 - k0))])
    res = optimize.minimize(nll, x0, method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 5000})
    res = optimize.minimize(nll, res.x, method="BFGS")
    return WrappedCauchy(res.x[0], 1.0 / (1.0 + np.exp(-res.x[1])))
