"""Multivariate extended-beta kernel density estimation on bounded boxes.

Main entry points::

    from mebk import Sample, Support, DensityEstimate
    from mebk import bayes_adaptive_bandwidths, default_prior, ucv_select

    sample = Sample(X, Support.from_bounds([[1, 5]]))
    h = bayes_adaptive_bandwidths(sample, default_prior(sample.n))
    est = DensityEstimate(sample, h)          # normalized estimate
    est.evaluate([[2.0]])
"""

from .bandwidth import (PriorConfig, bayes_adaptive_bandwidths, default_prior,
                        posterior_coefficients, posterior_density, ucv_objective, ucv_select)
from .ebkernel import EBKernelParams, Interval, eb_density, eb_log_density
from .errors import DomainError, IntegrationError, MEBKError, NumericalError, ParameterError
from .estimator import DensityEstimate, Sample, Support, mebk_eval, mebk_eval_grid
from .numerics import CubatureSpec
from .support import SupportPolicy, estimate_support

__version__ = "0.1.0"

__all__ = [
    "CubatureSpec",
    "DensityEstimate",
    "DomainError",
    "EBKernelParams",
    "IntegrationError",
    "Interval",
    "MEBKError",
    "NumericalError",
    "ParameterError",
    "PriorConfig",
    "Sample",
    "Support",
    "SupportPolicy",
    "bayes_adaptive_bandwidths",
    "default_prior",
    "eb_density",
    "eb_log_density",
    "estimate_support",
    "mebk_eval",
    "mebk_eval_grid",
    "posterior_coefficients",
    "posterior_density",
    "ucv_objective",
    "ucv_select",
]
