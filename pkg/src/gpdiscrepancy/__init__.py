"""Bayesian updating of linear shear-building models with Gaussian-process discrepancy kernels."""

__version__ = "0.1.0"

from .dynamics import (
    ModalRatios,
    Rayleigh,
    ShearBuildingModel,
    ShearFamily,
    StructuralParameter,
    TimeSeriesDataset,
    ViscousRatio,
    modal_analysis,
    simulate_response,
    synthesize_dataset,
)
from .errors import ConfigError, InitializationError, InvalidModelError, NumericalError, TmcmcError
from .inference import (
    LaplaceSummary,
    LogUniform,
    ModelClass,
    PriorSpec,
    Problem,
    TruncationPolicy,
    Uniform,
    find_mpv,
    kernel_priors,
    laplace_covariance,
    log_likelihood,
)
from .kernels import AuxiliaryGrid, KernelConfig
from .prediction import conditional_predict, map_predict, mixture_predict, reconstruct_missing
from .sampler import PosteriorSamples, TmcmcConfig, tmcmc_sample
from .selection import ModelClassScore, model_posterior_probabilities, select_mmte_order

__all__ = [
    "ModalRatios",
    "Rayleigh",
    "ShearBuildingModel",
    "ShearFamily",
    "StructuralParameter",
    "TimeSeriesDataset",
    "ViscousRatio",
    "modal_analysis",
    "simulate_response",
    "synthesize_dataset",
    "LaplaceSummary",
    "LogUniform",
    "ModelClass",
    "PriorSpec",
    "Problem",
    "TruncationPolicy",
    "Uniform",
    "find_mpv",
    "kernel_priors",
    "laplace_covariance",
    "log_likelihood",
    "ConfigError",
    "InitializationError",
    "InvalidModelError",
    "NumericalError",
    "TmcmcError",
    "AuxiliaryGrid",
    "KernelConfig",
    "conditional_predict",
    "map_predict",
    "mixture_predict",
    "reconstruct_missing",
    "PosteriorSamples",
    "TmcmcConfig",
    "tmcmc_sample",
    "ModelClassScore",
    "model_posterior_probabilities",
    "select_mmte_order",
]
