"""Special functions: modified Bessel functions of the first kind and the
standard normal cdf/quantile.

The Bessel routines use the ascending power series for ``x <= 15`` and the
large-argument asymptotic expansion above, which gives roughly 1e-13
relative accuracy at the switch point. Ratios ``I_j / I_{j-1}`` for higher
orders come from the backward recurrence, which stays accurate when the
order is comparable to or larger than the argument.
"""

from __future__ import annotations

import numpy as np
from scipy import special as sp

_SERIES_CUTOFF = 15.0
_MAX_SERIES_TERMS = 200
_MAX_ASYMPTOTIC_TERMS = 60


def _power_series(order: int, x: np.ndarray) -> np.ndarray:
    half = 0.5 * x
    term = half**order / float(np.prod(np.arange(1, order + 1)))
    total = term.copy()
    q = half * half
    for k in range(1, _MAX_SERIES_TERMS):
        term = term * q / (k * (k + order))
        total += term
        if np.all(term <= 1e-17 * total):
            break
    return total


def _asymptotic_scaled(order: int, x: np.ndarray) -> np.ndarray:
    # e^{-x} I_n(x) ~ (2 pi x)^{-1/2} sum_k (-1)^k a_k(n) / x^k
    mu = 4.0 * order * order
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, _MAX_ASYMPTOTIC_TERMS):
        new = -term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if np.all(np.abs(new) >= np.abs(term)):
            break
        term = np.where(np.abs(new) < np.abs(term), new, 0.0)
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    return total / np.sqrt(2.0 * np.pi * x)


def bessel_i(order: int, x, scaled: bool = False):
    """Modified Bessel function of the first kind, integer order 0 or 1.

    Parameters
    ----------
    order : int
        0 or 1.
    x : array_like
        Non-negative arguments.
    scaled : bool, default False
        If True return ``exp(-x) * I_order(x)``, which does not overflow.
    """
    if order not in (0, 1):
        raise ValueError("only orders 0 and 1 are supported")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("argument must be non-negative")
    flat = np.atleast_1d(x).ravel()
    out = np.empty_like(flat)
    small = flat <= _SERIES_CUTOFF
    if np.any(small):
        xs = flat[small]
        vals = _power_series(order, xs)
        out[small] = vals * np.exp(-xs) if scaled else vals
    if np.any(~small):
        xl = flat[~small]
        vals = _asymptotic_scaled(order, xl)
        out[~small] = vals if scaled else vals * np.exp(xl)
    out = out.reshape(x.shape)
    return out[()] if out.ndim == 0 else out


def log_bessel_i0(x):
    """``log I_0(x)`` without overflow."""
    x = np.asarray(x, dtype=float)
    return np.log(bessel_i(0, x, scaled=True)) + x


def bessel_ratios(x: float, n_terms: int) -> np.ndarray:
    """Return ``I_j(x) / I_0(x)`` for ``j = 1..n_terms``.

    Uses the backward recurrence ``r_j = 1 / (2j/x + r_{j+1})`` for the
    successive ratios ``r_j = I_j / I_{j-1}``, started far enough above both
    ``n_terms`` and ``x`` that the starting error has decayed away.
    """
    x = float(x)
    if n_terms < 1:
        return np.empty(0)
    if x <= 0.0:
        return np.zeros(n_terms)
    start = max(n_terms, int(np.ceil(x))) + 60
    nu = start + 0.5
    r = x / (nu + np.sqrt(nu * nu + x * x))
    ratios = np.empty(n_terms)
    for j in range(start, 0, -1):
        r = 1.0 / (2.0 * j / x + r)
        if j <= n_terms:
            ratios[j - 1] = r
    return np.cumprod(ratios)


def mean_resultant_length(kappa):
    """``A_1(kappa) = I_1(kappa) / I_0(kappa)``."""
    kappa = np.asarray(kappa, dtype=float)
    out = bessel_i(1, kappa, scaled=True) / bessel_i(0, kappa, scaled=True)
    return out[()] if np.ndim(out) == 0 else out


# The normal cdf/quantile are thin wrappers over scipy's Cephes routines.
def norm_cdf(z):
    return sp.ndtr(z)


def norm_ppf(p):
    return sp.ndtri(p)


_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def norm_logpdf(z, mean=0.0, var=1.0):
    z = np.asarray(z, dtype=float)
    return -0.5 * (z - mean) ** 2 / var - 0.5 * np.log(var) - _LOG_SQRT_2PI
