"""Multinomial canonical decomposition models fitted by majorization-minimization."""

from .design import (
    DesignSet,
    ProfileCoding,
    TermSet,
    build_profile_design,
    encode_predictors,
    validate_hierarchy,
)
from .fitter import FitOptions, FitResult, fit, fit_dimensionwise
from .model import Parameters, deviance, identify, linear_predictor, probabilities

__version__ = "0.1.0"

__all__ = [
    "DesignSet",
    "FitOptions",
    "FitResult",
    "Parameters",
    "ProfileCoding",
    "TermSet",
    "build_profile_design",
    "deviance",
    "encode_predictors",
    "fit",
    "fit_dimensionwise",
    "identify",
    "linear_predictor",
    "probabilities",
    "validate_hierarchy",
]
