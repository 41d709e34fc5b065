"""Levy-driven regression noise: simulation, least squares and Whittle estimation."""

from .errors import (ConfigError, DegenerateDriverError, DegenerateHarmonicError, DomainError,
                     IllConditionedError, LevyWhittleError, ModelPositivityError, NumericError,
                     QuadratureError, ShapeError, SingularNormingError, UnsupportedOrderError)
from .levy_noise import (KernelSpec, LevyDriverSpec, NoisePath, covariance,
                         covariance_car2_closed_form, driver_cumulants, kernel_eval,
                         kernel_transform, simulate_linear_noise, spectral_density_order_r)
from .regression import (LSEFit, RegressionModel, Regressor, lse_fit, reg_eval, reg_grad,
                         reg_hess_entry, reg_norming, residuals)
from .spectral import (Periodogram, SpectralModel, WeightSpec, residual_periodogram,
                       spectral_eval, spectral_grad, spectral_hess, validate_weight_conditions,
                       weight_eval)
from .whittle import (WhittleFit, asymptotic_matrices, confidence_intervals, contrast_field,
                      contrast_function_K, grid_oracle, mce_covariance, whittle_fit)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateDriverError",
    "DegenerateHarmonicError",
    "DomainError",
    "IllConditionedError",
    "KernelSpec",
    "LSEFit",
    "LevyDriverSpec",
    "LevyWhittleError",
    "ModelPositivityError",
    "NoisePath",
    "NumericError",
    "Periodogram",
    "QuadratureError",
    "RegressionModel",
    "Regressor",
    "ShapeError",
    "SingularNormingError",
    "SpectralModel",
    "UnsupportedOrderError",
    "WeightSpec",
    "WhittleFit",
    "asymptotic_matrices",
    "confidence_intervals",
    "contrast_field",
    "contrast_function_K",
    "covariance",
    "covariance_car2_closed_form",
    "driver_cumulants",
    "grid_oracle",
    "kernel_eval",
    "kernel_transform",
    "lse_fit",
    "mce_covariance",
    "reg_eval",
    "reg_grad",
    "reg_hess_entry",
    "reg_norming",
    "residual_periodogram",
    "residuals",
    "simulate_linear_noise",
    "spectral_density_order_r",
    "spectral_eval",
    "spectral_grad",
    "spectral_hess",
    "validate_weight_conditions",
    "weight_eval",
    "whittle_fit",
]
