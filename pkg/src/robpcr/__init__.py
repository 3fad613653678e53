"""Robust Bayesian principal component regression.

LPTN error models, approximate robust PCA, Bayes-factor screening of
principal components, reversible-jump MCMC over nested models with
automated proposal tuning, and model-averaged prediction.  The closed-form
normal-error posterior serves as baseline and oracle.
"""
__version__ = "0.1.0"

from ._backend import BACKEND, available_backends
from .errors import (
    ConvergenceError,
    DegenerateModelError,
    DegenerateScaleError,
    DesignError,
    DomainError,
    ExactFitError,
    InputError,
    RobpcrError,
    TuningError,
)
from .lptn import LptnParams, lptn_cdf, lptn_logpdf, lptn_params, lptn_quantile, lptn_sample, lptn_score
from .normal_posterior import Dataset, ModelSpec, nested_space, normal_posterior, predict_model_average
from .pca import PcaResult, reconstruct, robust_correlation, run_pca
from .pipeline import PipelineConfig, run_analysis, screen_components
from .rj_sampler import SamplerInputs, estimate, run_chain
from .robust import map_location_scale, map_regression, standardized_residuals
from .tuner import TuningConfig, iat, tune_model

__all__ = [
    "BACKEND",
    "ConvergenceError",
    "Dataset",
    "DegenerateModelError",
    "DegenerateScaleError",
    "DesignError",
    "DomainError",
    "ExactFitError",
    "InputError",
    "LptnParams",
    "ModelSpec",
    "PcaResult",
    "PipelineConfig",
    "RobpcrError",
    "SamplerInputs",
    "TuningConfig",
    "TuningError",
    "available_backends",
    "estimate",
    "iat",
    "lptn_cdf",
    "lptn_logpdf",
    "lptn_params",
    "lptn_quantile",
    "lptn_sample",
    "lptn_score",
    "map_location_scale",
    "map_regression",
    "nested_space",
    "normal_posterior",
    "predict_model_average",
    "reconstruct",
    "robust_correlation",
    "run_analysis",
    "run_chain",
    "run_pca",
    "screen_components",
    "standardized_residuals",
    "tune_model",
]
