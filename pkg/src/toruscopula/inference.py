"""Maximum likelihood fitting of copula models on the hypertorus.

Parameters are optimized on an unconstrained scale:

* margins: ``mu`` as a raw real, ``log(kappa)`` (von Mises) or
  ``logit(kappa)`` (wrapped Cauchy);
* correlation: ``atanh(rho)`` (AR1), ``log(rho)`` (ExpDecay), or ``atanh``
  of the canonical partial correlations (Unstructured).

Estimates and standard errors are reported on the scale (rho, mu, log kappa).
The optimizer is started from the inference-from-margins (IFM) point: the
margins are fitted first, then the correlation parameters with the margins
held fixed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .copula import CopulaModel
from .correlation import AR1, ExpDecay, Identity, NotPositiveDefiniteError, Unstructured, factorize
from .marginals import fit_single_margin, make_marginal, normalize_angle

logger = logging.getLogger(__name__)

STRUCTURES = ("ar1", "expdecay", "unstructured", "identity")

# Returned in place of the log-likelihood when the correlation matrix cannot
# be factorized, so optimizers back away instead of crashing.
FAILED_LOGLIK = -1e12
FD_STEP = 1e-5
GRAD_TOL = 1e-6
SIMPLEX_TOL = 1e-8
# a collapsed simplex only counts as convergence at a near-stationary point
STATIONARY_TOL = 1e-5


class IndefiniteHessianError(np.linalg.LinAlgError):
    def __init__(self, eigenvalue: float):
        self.eigenvalue = eigenvalue
        super().__init__(
            f"Hessian of the negative log-likelihood is not positive definite "
            f"(smallest eigenvalue {eigenvalue:.6g})"
        )


@dataclass(frozen=True)
class ModelSpec:
    """What to fit: a correlation structure and the marginal family/families."""

    structure: str = "ar1"
    family: str | tuple = "vm"
    distances: np.ndarray | None = None

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure {self.structure!r}; expected one of {STRUCTURES}")
        if self.structure == "expdecay" and self.distances is None:
            raise ValueError("expdecay structure needs a distance matrix")


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n`` independent replicates of ``K`` angles, shape (n, K)."""

    angles: np.ndarray
    shared_margin: bool = False

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float)
        if a.ndim != 2:
            raise ValueError("angles must be a 2-d array (replicates x coordinates)")
        n, k = a.shape
        if n < 1 or k < 2:
            raise ValueError("need at least one replicate of at least two coordinates")
        if not np.all(np.isfinite(a)):
            raise ValueError("angles must be finite")
        object.__setattr__(self, "angles", normalize_angle(a))

    @property
    def n(self) -> int:
        return self.angles.shape[0]

    @property
    def dim(self) -> int:
        return self.angles.shape[1]


def _logit(p):
    return np.log(p) - np.log1p(-p)


def _expit(x):
    return 1.0 / (1.0 + np.exp(-x))


def _cpc_to_corr(cpc: np.ndarray, k: int) -> np.ndarray:
    """Correlation matrix from canonical partial correlations (upper triangle order)."""
    lower = np.zeros((k, k))
    lower[0, 0] = 1.0
    it = iter(cpc)
    z = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            z[i, j] = next(it)
    for i in range(1, k):
        ss = 0.0
        for j in range(i):
            lower[i, j] = z[j, i] * np.sqrt(max(1.0 - ss, 0.0))
            ss += lower[i, j] ** 2
        lower[i, i] = np.sqrt(max(1.0 - ss, 0.0))
    corr = lower @ lower.T
    np.fill_diagonal(corr, 1.0)
    return corr


def _corr_to_cpc(corr: np.ndarray) -> np.ndarray:
    lower = factorize(corr).lower
    k = corr.shape[0]
    out = []
    for i in range(k):
        for j in range(i + 1, k):
            ss = np.sum(lower[j, :i] ** 2)
            out.append(lower[j, i] / np.sqrt(1.0 - ss))
    return np.array(out)


class ParamLayout:
    """Maps between parameter vectors and :class:`CopulaModel` instances.

    The unconstrained vector holds the margin blocks first (one block when
    margins are shared) and the correlation parameters last. The report
    vector lists correlation parameters first, then ``mu``/``log_kappa`` per
    margin block.
    """

    def __init__(self, spec: ModelSpec, dim: int, shared_margin: bool):
        self.spec = spec
        self.dim = dim
        self.shared = shared_margin
        fams = spec.family
        if isinstance(fams, str):
            fams = (fams,) * dim
        fams = tuple(f.lower() for f in fams)
        if len(fams) != dim:
            raise ValueError(f"got {len(fams)} families for {dim} coordinates")
        if shared_margin and len(set(fams)) != 1:
            raise ValueError("shared margins require a single family")
        self.families = fams
        self.n_blocks = 1 if shared_margin else dim
        if spec.structure == "expdecay":
            d = np.asarray(spec.distances, dtype=float)
            if d.shape != (dim, dim):
                raise ValueError(f"distance matrix shape {d.shape} does not match K={dim}")
        n_corr = {"ar1": 1, "expdecay": 1, "identity": 0}.get(spec.structure, dim * (dim - 1) // 2)
        self.n_corr = n_corr
        self.size = 2 * self.n_blocks + n_corr

    @property
    def names(self) -> list[str]:
        s = self.spec.structure
        if s in ("ar1", "expdecay"):
            corr = ["rho"]
        elif s == "unstructured":
            corr = [f"rho_{i + 1}_{j + 1}" for i in range(self.dim) for j in range(i + 1, self.dim)]
        else:
            corr = []
        if self.shared:
            return corr + ["mu", "log_kappa"]
        return corr + [f"{p}_{k + 1}" for k in range(self.dim) for p in ("mu", "log_kappa")]

    def _block_family(self, b):
        return self.families[0] if self.shared else self.families[b]

    def _correlation(self, c: np.ndarray):
        s = self.spec.structure
        if s == "ar1":
            return AR1(float(np.tanh(c[0])), self.dim)
        if s == "expdecay":
            return ExpDecay(float(np.exp(c[0])), self.spec.distances)
        if s == "unstructured":
            return Unstructured(_cpc_to_corr(np.tanh(c), self.dim))
        return Identity(self.dim)

    def decode(self, x) -> CopulaModel:
        x = np.asarray(x, dtype=float)
        margins = []
        for b in range(self.n_blocks):
            mu, t = x[2 * b], x[2 * b + 1]
            fam = self._block_family(b)
            kappa = np.exp(t) if fam == "vm" else _expit(t)
            margins.append(make_marginal(fam, mu, kappa))
        if self.shared:
            margins = margins * self.dim
        return CopulaModel(tuple(margins), self._correlation(x[2 * self.n_blocks:]))

    def encode(self, model: CopulaModel) -> np.ndarray:
        out = []
        for b in range(self.n_blocks):
            m = model.marginals[b]
            out += [m.mu, np.log(m.kappa) if m.family == "vm" else _logit(m.kappa)]
        corr = model.correlation
        s = self.spec.structure
        if s == "ar1":
            out.append(np.arctanh(corr.rho))
        elif s == "expdecay":
            out.append(np.log(corr.rho))
        elif s == "unstructured":
            out += list(np.arctanh(_corr_to_cpc(corr.matrix())))
        return np.array(out, dtype=float)

    def to_report(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        nb = 2 * self.n_blocks
        c = x[nb:]
        s = self.spec.structure
        if s == "ar1":
            corr = [np.tanh(c[0])]
        elif s == "expdecay":
            corr = [np.exp(c[0])]
        elif s == "unstructured":
            m = _cpc_to_corr(np.tanh(c), self.dim)
            corr = list(m[np.triu_indices(self.dim, 1)])
        else:
            corr = []
        margins = []
        for b in range(self.n_blocks):
            mu, t = x[2 * b], x[2 * b + 1]
            logk = t if self._block_family(b) == "vm" else np.log(_expit(t))
            margins += [mu, logk]
        return np.array(corr + margins, dtype=float)

    def from_report(self, r) -> np.ndarray:
        """Inverse of :meth:`to_report`; raises ValueError outside the valid region."""
        r = np.asarray(r, dtype=float)
        c, m = r[: self.n_corr], r[self.n_corr:]
        x = []
        for b in range(self.n_blocks):
            mu, logk = m[2 * b], m[2 * b + 1]
            if self._block_family(b) == "vm":
                x += [mu, logk]
            else:
                k = np.exp(logk)
                if not k < 1.0:
                    raise ValueError("wrapped Cauchy kappa must be below 1")
                x += [mu, _logit(k)]
        s = self.spec.structure
        if s == "ar1":
            if not abs(c[0]) < 1.0:
                raise ValueError("AR1 rho must satisfy |rho| < 1")
            x.append(np.arctanh(c[0]))
        elif s == "expdecay":
            if not c[0] > 0.0:
                raise ValueError("ExpDecay rho must be positive")
            x.append(np.log(c[0]))
        elif s == "unstructured":
            mat = np.eye(self.dim)
            mat[np.triu_indices(self.dim, 1)] = c
            mat = np.triu(mat, 1) + np.triu(mat, 1).T + np.eye(self.dim)
            x += list(np.arctanh(_corr_to_cpc(mat)))
        return np.array(x, dtype=float)

    def report_dict(self, x) -> dict[str, float]:
        r = self.to_report(x)
        out = dict(zip(self.names, (float(v) for v in r)))
        for name in out:
            if name == "mu" or name.startswith("mu_"):
                out[name] = float(normalize_angle(out[name]))
        return out


def _layout(data: Dataset, spec: ModelSpec) -> ParamLayout:
    return ParamLayout(spec, data.dim, data.shared_margin)


def log_likelihood(params, data: Dataset, spec: ModelSpec, layout: ParamLayout | None = None) -> float:
    """Sum of joint log-densities over replicates.

    Returns ``FAILED_LOGLIK`` instead of raising when the parameters give a
    correlation matrix that cannot be factorized.
    """
    layout = layout or _layout(data, spec)
    try:
        model = layout.decode(params)
        value = float(np.sum(model.joint_log_density(data.angles)))
    except (NotPositiveDefiniteError, ValueError, FloatingPointError):
        return FAILED_LOGLIK
    return value if np.isfinite(value) else FAILED_LOGLIK


def copula_term(model: CopulaModel, z: np.ndarray) -> float:
    """The correlation-dependent part of the log-likelihood for fixed z-scores."""
    return float(np.sum(model.log_copula_density(z)))


def _fit_margins(data: Dataset, layout: ParamLayout) -> np.ndarray:
    out = []
    if layout.shared:
        m = fit_single_margin(data.angles.ravel(), layout.families[0])
        blocks = [m]
    else:
        blocks = [fit_single_margin(data.angles[:, k], layout.families[k]) for k in range(data.dim)]
    for m in blocks:
        if m.family == "wc":
            kappa = min(max(m.kappa, 1e-8), 1.0 - 1e-8)
            out += [m.mu, _logit(kappa)]
        else:
            out += [m.mu, np.log(m.kappa)]
    return np.array(out)


def _scalar_corr_range(layout: ParamLayout) -> tuple[float, float]:
    if layout.spec.structure == "ar1":
        return -5.0, 5.0
    d = np.asarray(layout.spec.distances)
    pos = d[d > 0]
    centre = -np.log(np.median(pos)) if pos.size else 0.0
    return centre - 7.0, centre + 7.0


def ifm_initialize(data: Dataset, spec: ModelSpec) -> np.ndarray:
    """Two-stage starting point: margins first, then correlation given margins."""
    layout = _layout(data, spec)
    theta0 = _fit_margins(data, layout)
    if layout.n_corr == 0:
        return theta0
    margin_model = layout.decode(np.concatenate([theta0, np.zeros(layout.n_corr)]))
    z = margin_model.z_transform(data.angles)

    def neg_a(c):
        c = np.atleast_1d(c)
        try:
            model = CopulaModel(margin_model.marginals, layout._correlation(c))
            val = copula_term(model, z)
        except (NotPositiveDefiniteError, ValueError):
            return -FAILED_LOGLIK
        return -val if np.isfinite(val) else -FAILED_LOGLIK

    if layout.spec.structure in ("ar1", "expdecay"):
        lo, hi = _scalar_corr_range(layout)
        grid = np.linspace(lo, hi, 57)
        vals = [neg_a(g) for g in grid]
        i = int(np.argmin(vals))
        a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
        res = optimize.minimize_scalar(neg_a, bounds=(a, b), method="bounded",
                                       options={"xatol": 1e-10})
        c0 = np.array([res.x if res.fun <= vals[i] else grid[i]])
    else:
        emp = np.corrcoef(z, rowvar=False) if data.n > data.dim else np.eye(data.dim)
        emp = 0.95 * emp + 0.05 * np.eye(data.dim)
        start = np.arctanh(np.clip(_corr_to_cpc(emp), -0.99, 0.99))
        res = optimize.minimize(neg_a, start, method="BFGS")
        c0 = res.x if res.fun <= neg_a(start) else start
    return np.concatenate([theta0, c0])


def fd_gradient(fn: Callable, x, step: float = FD_STEP) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fn(x + e) - fn(x - e)) / (2.0 * h)
    return g


def fd_hessian(fn: Callable, x, step: float = FD_STEP) -> np.ndarray:
    """Central finite-difference Hessian with steps ``step * max(1, |x_i|)``."""
    x = np.asarray(x, dtype=float)
    p = x.size
    h = step * np.maximum(1.0, np.abs(x))
    f0 = fn(x)
    hess = np.empty((p, p))
    for i in range(p):
        ei = np.zeros(p)
        ei[i] = h[i]
        hess[i, i] = (fn(x + ei) - 2.0 * f0 + fn(x - ei)) / h[i] ** 2
        for j in range(i):
            ej = np.zeros(p)
            ej[j] = h[j]
            v = (fn(x + ei + ej) - fn(x + ei - ej) - fn(x - ei + ej) + fn(x - ei - ej))
            hess[i, j] = hess[j, i] = v / (4.0 * h[i] * h[j])
    return hess


def hessian_standard_errors(neg_loglik: Callable, point, step: float = FD_STEP) -> np.ndarray:
    """Square roots of the diagonal of the inverse Hessian of ``neg_loglik``.

    Raises
    ------
    IndefiniteHessianError
        If the Hessian has a non-positive eigenvalue.
    """
    hess = fd_hessian(neg_loglik, point, step)
    hess = 0.5 * (hess + hess.T)
    eig = np.linalg.eigvalsh(hess)
    if eig[0] <= 0.0 or not np.all(np.isfinite(eig)):
        raise IndefiniteHessianError(float(eig[0]))
    cov = np.linalg.inv(hess)
    return np.sqrt(np.diag(cov))


def standard_errors(params, data: Dataset, spec: ModelSpec) -> np.ndarray:
    """Hessian-based standard errors on the report scale (rho, mu, log kappa)."""
    layout = _layout(data, spec)

    def nll(r):
        try:
            x = layout.from_report(r)
        except (ValueError, NotPositiveDefiniteError):
            return -FAILED_LOGLIK
        return -log_likelihood(x, data, spec, layout)

    return hessian_standard_errors(nll, layout.to_report(params))


@dataclass
class FitResult:
    estimates: dict[str, float]
    standard_errors: dict[str, float] | None
    log_likelihood: float
    converged: bool
    iterations: int
    initializer: dict[str, float]
    initial_log_likelihood: float
    params: np.ndarray
    model: CopulaModel
    grad_norm: float
    message: str = ""
    n_obs: int = 0
    extra: dict = field(default_factory=dict)


def _newton_polish(fn, x, max_steps=20):
    """Newton steps on finite-difference derivatives.

    Near the optimum the predicted gain ``g's / 2`` drops below the noise
    in ``fn`` (points close to a cut make the likelihood noisy at the 1e-11
    level); a step is then still taken if the value rises by no more than a
    few times the predicted gain and the gradient norm falls.
    """
    fx = fn(x)
    g = fd_gradient(fn, x)
    for _ in range(max_steps):
        gnorm = np.linalg.norm(g)
        if gnorm < 1e-8:
            break
        hess = fd_hessian(fn, x)
        try:
            step = np.linalg.solve(0.5 * (hess + hess.T), g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)) or g @ step <= 0:
            break
        slack = 16.0 * np.finfo(float).eps * max(1.0, abs(fx)) + 10.0 * (g @ step)
        t = 1.0
        while t > 1e-6:
            cand = x - t * step
            fc = fn(cand)
            if fc < fx:
                gc = fd_gradient(fn, cand)
                break
            if fc <= fx + slack:
                gc = fd_gradient(fn, cand)
                if np.linalg.norm(gc) < gnorm:
                    break
            t *= 0.5
        else:
            break
        x, fx, g = cand, min(fc, fx), gc
    return x


def fit_mle(data: Dataset, spec: ModelSpec, maxiter: int = 10_000, start=None,
            compute_se: bool = True) -> FitResult:
    """Maximize the full log-likelihood from the IFM starting point.

    A Nelder-Mead simplex run is followed by a BFGS run with central
    finite-difference gradients and a few Newton steps on a finite-difference
    Hessian. ``converged`` requires a final gradient norm below ``GRAD_TOL``,
    or a final simplex diameter below ``SIMPLEX_TOL`` together with a
    gradient norm below ``STATIONARY_TOL``. The second clause fails at cusps
    of the likelihood, which appear when an observation sits at a margin's
    cut ``mu - pi``.
    """
    layout = _layout(data, spec)
    x0 = ifm_initialize(data, spec) if start is None else np.asarray(start, dtype=float)

    def nll(x):
        return -log_likelihood(x, data, spec, layout)

    ll0 = -nll(x0)
    nm = optimize.minimize(
        nll, x0, method="Nelder-Mead",
        options={"maxiter": maxiter, "maxfev": 4 * maxiter, "xatol": SIMPLEX_TOL,
                 "fatol": 1e-10, "adaptive": layout.size > 4},
    )
    simplex = nm.final_simplex[0]
    diameter = float(np.max(np.abs(simplex - simplex[0])))
    x = nm.x
    iterations = int(nm.nit)
    bfgs = optimize.minimize(nll, x, jac=lambda v: fd_gradient(nll, v), method="BFGS",
                             options={"gtol": 1e-8, "maxiter": maxiter})
    if bfgs.fun <= nll(x):
        x = bfgs.x
    iterations += int(bfgs.nit)
    x = _newton_polish(nll, x)
    ll = -nll(x)
    if ll < ll0:
        x, ll = x0, ll0
    grad_norm = float(np.linalg.norm(fd_gradient(nll, x)))
    stationary = grad_norm < GRAD_TOL or (diameter < SIMPLEX_TOL and grad_norm < STATIONARY_TOL)
    converged = bool(stationary) and ll > FAILED_LOGLIK
    if converged:
        message = "converged"
    elif diameter < SIMPLEX_TOL:
        message = (f"simplex collapsed but gradient norm is {grad_norm:.3g}; the optimum is likely "
                   "a cusp created by an observation lying at the cut mu - pi")
    else:
        message = "gradient/simplex tolerance not reached"
    if not converged:
        logger.warning("fit did not converge: %s", message)

    ses = None
    if compute_se:
        try:
            se = standard_errors(x, data, spec)
            ses = dict(zip(layout.names, (float(v) for v in se)))
        except IndefiniteHessianError as exc:
            message = f"{message}; {exc}"
            logger.warning("%s", exc)
    return FitResult(
        estimates=layout.report_dict(x),
        standard_errors=ses,
        log_likelihood=ll,
        converged=converged,
        iterations=iterations,
        initializer=layout.report_dict(x0),
        initial_log_likelihood=ll0,
        params=x,
        model=layout.decode(x),
        grad_norm=grad_norm,
        message=message,
        n_obs=data.n,
    )


def model_from_report(spec: ModelSpec, dim: int, shared_margin: bool,
                      estimates: dict[str, float] | Sequence[float]) -> CopulaModel:
    """Rebuild a model from report-scale estimates (e.g. a saved fit)."""
    layout = ParamLayout(spec, dim, shared_margin)
    if isinstance(estimates, dict):
        estimates = [estimates[name] for name in layout.names]
    return layout.decode(layout.from_report(estimates))
