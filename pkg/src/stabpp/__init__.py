"""Sparse variable selection for the intensity of spatial point processes.

Adaptive L0/L1-penalized composite likelihood fitted by proximal gradient
descent, with model selection by (composite) information criteria or by
stability selection over p-thinned subsamples.
"""

from .geometry import (
    CovariateField,
    EmptyQuadratureError,
    GeometryError,
    PointPattern,
    QuadratureScheme,
    Window,
    ZeroVarianceError,
    erode,
    make_quadrature,
    standardize,
    synth_covariates,
)
from .likelihood import DegenerateDataError, FitData, NumericalError, build_fit_data, fit_unpenalized, loglik, score
from .simulate import (
    LogLinearModel, ThomasParams, calibrate_intercept, sample_poisson, sample_thomas, stream, thomas_K, thomas_pcf,
)
from .solver import L0, L1, PathConfig, PathResult, PenaltySpec, adaptive_path, pgd_solve, solve_path
from .stability import SelectionResult, StabilityConfig, StabilityPath, pfer_bound, select_stable, stability_path
from .criteria import SecondOrderSpec, select_by_criterion
from .metrics import MetricsReport, SelectionOutcome, confusion_metrics, phi_s

__version__ = "0.1.0"

__all__ = [
    "CovariateField",
    "DegenerateDataError",
    "EmptyQuadratureError",
    "FitData",
    "GeometryError",
    "L0",
    "L1",
    "LogLinearModel",
    "MetricsReport",
    "NumericalError",
    "PathConfig",
    "PathResult",
    "PenaltySpec",
    "PointPattern",
    "QuadratureScheme",
    "SecondOrderSpec",
    "SelectionOutcome",
    "SelectionResult",
    "StabilityConfig",
    "StabilityPath",
    "ThomasParams",
    "Window",
    "ZeroVarianceError",
    "adaptive_path",
    "build_fit_data",
    "confusion_metrics",
    "erode",
    "fit_unpenalized",
    "loglik",
    "make_quadrature",
    "pfer_bound",
    "pgd_solve",
    "phi_s",
    "sample_poisson",
    "sample_thomas",
    "score",
    "select_by_criterion",
    "select_stable",
    "solve_path",
    "stability_path",
    "standardize",
    "stream",
    "calibrate_intercept",
    "synth_covariates",
    "thomas_K",
    "thomas_pcf",
]
