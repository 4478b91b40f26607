"""Gaussian mixtures with piecewise-constant covariance eigenvalue profiles."""

from .errors import ConfigError, InputError, MpsaError, NumericalError, ParseError
from .mixture import (
    FitConfig, FitTrace, MpsaModel, PsaComponent, cpem_fit, e_step, em_fit,
    log_likelihood, penalized_loglik, predict,
)
from .psa import kappa_psa

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "FitConfig", "FitTrace", "InputError", "MpsaError", "MpsaModel",
    "NumericalError", "ParseError", "PsaComponent", "cpem_fit", "e_step", "em_fit",
    "kappa_psa", "log_likelihood", "penalized_loglik", "predict",
]
