"""Circular kriging under an exponential spatial correlation.

Observed angles are moved to the normal scale, the simple-kriging predictor
``z_hat = w' Omega^{-1} z`` is formed there, and the prediction is mapped
back through the site's marginal quantile function. Because the back
transform is monotone, ``z_hat`` maps to the conditional circular median.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .copula import CopulaModel, PredictionArc, _clamp
from .correlation import ExpDecay
from .marginals import MarginalModel, normalize_angle
from .special import norm_cdf, norm_ppf

logger = logging.getLogger(__name__)

MIN_SEPARATION = 1e-9
VARIANCE_FLOOR = 1e-12
EARTH_RADIUS_KM = 6371.0088


class Location(NamedTuple):
    x: float
    y: float


class DuplicateLocationError(ValueError):
    def __init__(self, pairs):
        self.pairs = pairs
        shown = ", ".join(f"({i}, {j})" for i, j in pairs[:10])
        super().__init__(f"sites closer than the minimum separation: {shown}")


def distance_matrix(locations, min_separation: float = MIN_SEPARATION) -> np.ndarray:
    """Euclidean distances between planar locations, shape (K, K)."""
    pts = np.asarray(locations, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(pts)):
        raise ValueError("coordinates must be finite")
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    np.fill_diagonal(d, 0.0)
    close = np.argwhere(np.triu(d <= min_separation, 1))
    if close.size:
        raise DuplicateLocationError([tuple(map(int, p)) for p in close])
    return d


def project_lonlat(lonlat, radius: float = EARTH_RADIUS_KM) -> np.ndarray:
    """Local equirectangular projection about the centroid, degrees in, km out.

    Adequate for regional fields; distances are distorted on continental scales.
    """
    pts = np.asarray(lonlat, dtype=float).reshape(-1, 2)
    lon, lat = np.deg2rad(pts[:, 0]), np.deg2rad(pts[:, 1])
    lat0 = np.mean(lat)
    # wrap longitude differences so fields straddling the antimeridian stay contiguous
    dlon = np.angle(np.exp(1j * (lon - lon[0])))
    lon0 = np.mean(dlon)
    return np.column_stack([radius * (dlon - lon0) * np.cos(lat0), radius * (lat - lat0)])


@dataclass(frozen=True, eq=False)
class SpatialDataset:
    """One observed direction per site."""

    locations: np.ndarray
    angles: np.ndarray
    min_separation: float = MIN_SEPARATION

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=float).reshape(-1, 2)
        ang = np.asarray(self.angles, dtype=float).ravel()
        if loc.shape[0] != ang.size:
            raise ValueError(f"{loc.shape[0]} locations but {ang.size} angles")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "angles", normalize_angle(ang))
        object.__setattr__(self, "distances", distance_matrix(loc, self.min_separation))

    @property
    def size(self) -> int:
        return self.angles.size


@dataclass(frozen=True)
class KrigingResult:
    site: Location
    predicted_angle: float
    arc: PredictionArc
    z_hat: float
    cond_variance: float
    variance_clamped: bool = False


class Kriger:
    """Precomputes ``Omega^{-1} z`` once so many sites can be predicted cheaply.

    Parameters
    ----------
    model : CopulaModel
        Fitted model whose correlation is :class:`ExpDecay` over the
        dataset's sites.
    data : SpatialDataset
    site_marginal : MarginalModel, optional
        Marginal used at prediction sites. Defaults to the model's common
        marginal; required when the model's margins differ.
    """

    def __init__(self, model: CopulaModel, data: SpatialDataset,
                 site_marginal: MarginalModel | None = None):
        if not isinstance(model.correlation, ExpDecay):
            raise TypeError("kriging needs an ExpDecay correlation structure")
        if model.dim != data.size:
            raise ValueError(f"model has {model.dim} sites, data has {data.size}")
        if site_marginal is None:
            first = model.marginals[0]
            if any(m != first for m in model.marginals[1:]):
                raise ValueError("margins differ between sites; pass site_marginal")
            site_marginal = first
        self.model = model
        self.data = data
        self.rho = model.correlation.rho
        self.margin = site_marginal
        self.factor = model.factor
        self.z = model.z_transform(data.angles)
        self.weights_z = self.factor.solve(self.z)

    def predict(self, sites, coverage: float = 0.95) -> list[KrigingResult]:
        sites = np.asarray(sites, dtype=float).reshape(-1, 2)
        diff = sites[:, None, :] - self.data.locations[None, :, :]
        d = np.sqrt(np.sum(diff * diff, axis=-1))
        omega_s = np.exp(-self.rho * d)  # (m, K)
        z_hat = omega_s @ self.weights_z
        w = self.factor.whiten(omega_s)
        var = 1.0 - np.sum(w * w, axis=-1)
        clamped = var < VARIANCE_FLOOR
        if np.any(clamped):
            logger.debug("clamped conditional variance at %d sites", int(clamped.sum()))
        var = np.maximum(var, VARIANCE_FLOOR)
        sd = np.sqrt(var)
        alpha = 0.5 * (1.0 - coverage)
        q = norm_ppf(alpha)
        median = self.margin.quantile(_clamp(norm_cdf(z_hat)))
        lower = self.margin.quantile(_clamp(norm_cdf(z_hat + q * sd)))
        upper = self.margin.quantile(_clamp(norm_cdf(z_hat - q * sd)))
        return [
            KrigingResult(Location(*sites[i]), float(median[i]),
                          PredictionArc(float(lower[i]), float(upper[i]), coverage),
                          float(z_hat[i]), float(var[i]), bool(clamped[i]))
            for i in range(sites.shape[0])
        ]


def krige(model: CopulaModel, data: SpatialDataset, site, coverage: float = 0.95,
          site_marginal: MarginalModel | None = None) -> KrigingResult:
    return Kriger(model, data, site_marginal).predict([site], coverage)[0]


def krige_grid(model: CopulaModel, data: SpatialDataset, grid: Sequence, coverage: float = 0.95,
               site_marginal: MarginalModel | None = None) -> list[KrigingResult]:
    return Kriger(model, data, site_marginal).predict(grid, coverage)


def grid_over(locations, resolution: int, expand: float = 0.1) -> np.ndarray:
    """Row-major grid over the bounding box, each side pushed out by ``expand`` of its span."""
    pts = np.asarray(locations, dtype=float).reshape(-1, 2)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    lo, hi = lo - expand * span, hi + expand * span
    gx = np.linspace(lo[0], hi[0], resolution)
    gy = np.linspace(lo[1], hi[1], resolution)
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])
