"""Generalized fractional Brownian motion ``Z_t = a B_t + b B_{-t}``.

``kernel`` holds the closed-form second-order structure, ``samplers`` exact
Gaussian path generators, ``estimators`` the Monte Carlo and path checks,
and ``cli`` the ``gfbm`` command.
"""

from .errors import (
    DegenerateDistributionError,
    DomainError,
    EmbeddingError,
    GfbmError,
    GridError,
    MethodMismatchError,
    NotPositiveDefiniteError,
    NumericalError,
    ParameterError,
    ParamsMismatchError,
)
from .kernel import (
    GfbmParams,
    IncrementBounds,
    Regime,
    covariance,
    fbm_covariance,
    increment_bounds,
    increment_char_function,
    increment_density,
    increment_second_moment,
    markov_residual,
    r_b,
    r_z,
    rz_asymptote,
    sfbm_covariance,
    variance,
)
from .samplers import Method, PathEnsemble, SampleSpec, TimeGrid, sample, sample_cholesky, sample_circulant

__version__ = "0.1.0"

__all__ = [
    "DegenerateDistributionError",
    "DomainError",
    "EmbeddingError",
    "GfbmError",
    "GridError",
    "MethodMismatchError",
    "NotPositiveDefiniteError",
    "NumericalError",
    "ParameterError",
    "ParamsMismatchError",
    "GfbmParams",
    "IncrementBounds",
    "Regime",
    "covariance",
    "fbm_covariance",
    "increment_bounds",
    "increment_char_function",
    "increment_density",
    "increment_second_moment",
    "markov_residual",
    "r_b",
    "r_z",
    "rz_asymptote",
    "sfbm_covariance",
    "variance",
    "Method",
    "PathEnsemble",
    "SampleSpec",
    "TimeGrid",
    "sample",
    "sample_cholesky",
    "sample_circulant",
]
