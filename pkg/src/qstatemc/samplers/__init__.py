"""Sample generation: uniform simplex, independence sampling and MCMC."""

from ..simplex import sample_simplex_exponential, sample_simplex_spacings, spacings
from .independence import (
    RejectionBudgetExceeded,
    check_physical,
    default_log_bound,
    importance_sample,
    rejection_sample,
)
from .mcmc import ChainConfig, integrated_autocorr_ess, mhmc_generic, tune_step_size, xmhmc_sample
from .weighted import WeightedSample

__all__ = [
    "ChainConfig",
    "RejectionBudgetExceeded",
    "WeightedSample",
    "check_physical",
    "default_log_bound",
    "importance_sample",
    "integrated_autocorr_ess",
    "mhmc_generic",
    "rejection_sample",
    "sample_simplex_exponential",
    "sample_simplex_spacings",
    "spacings",
    "tune_step_size",
    "xmhmc_sample",
]
