"""Gaussian-copula distributions for correlated circular data on the hypertorus."""

from .copula import CopulaModel, PredictionArc, make_model
from .correlation import AR1, ExpDecay, Identity, NotPositiveDefiniteError, Unstructured, factorize
from .inference import Dataset, FitResult, ModelSpec, fit_mle, ifm_initialize, log_likelihood
from .marginals import DegenerateDataError, VonMises, WrappedCauchy, fit_single_margin, normalize_angle
from .spatial import Kriger, SpatialDataset, distance_matrix, krige, krige_grid

__version__ = "0.1.0"

__all__ = [
    "AR1",
    "CopulaModel",
    "Dataset",
    "DegenerateDataError",
    "ExpDecay",
    "FitResult",
    "Identity",
    "Kriger",
    "ModelSpec",
    "NotPositiveDefiniteError",
    "PredictionArc",
    "SpatialDataset",
    "Unstructured",
    "VonMises",
    "WrappedCauchy",
    "distance_matrix",
    "factorize",
    "fit_mle",
    "fit_single_margin",
    "ifm_initialize",
    "krige",
    "krige_grid",
    "log_likelihood",
    "make_model",
    "normalize_angle",
]
