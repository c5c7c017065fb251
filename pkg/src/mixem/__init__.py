"""EM for equal-weight Gaussian and Laplacian mixtures.

Population analysis of the symmetric two-component Laplacian mixture, plus
naive, moment-regularized and stochastic multi-objective EM fitters for
Gaussian mixtures and a random-restart experiment harness.
"""

from .errors import InvalidArgumentError, MixemError, NumericalFailureError
from .fitting import FitConfig, FitResult, LambdaSchedule, fit
from .metrics import is_success, match_components, moment_residual
from .mixture import MixtureModel, SampleSet, sample

__all__ = [
    "FitConfig",
    "FitResult",
    "InvalidArgumentError",
    "LambdaSchedule",
    "MixemError",
    "MixtureModel",
    "NumericalFailureError",
    "SampleSet",
    "fit",
    "is_success",
    "match_components",
    "moment_residual",
    "sample",
]
