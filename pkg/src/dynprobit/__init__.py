"""Expectation propagation for the smoothing distribution of dynamic probit models."""

from .ep import (EpConfig, EpError, GaussianApprox, SiteState, ep_smooth, ep_smooth_dense,
                 ep_smooth_lowrank, site_update)
from .model import (DynamicProbitModel, ModelError, PriorCovariance, PriorCovarianceError,
                    SparseCovariate, build_prior_covariance, simulate)
from .special import log_norm_cdf, zeta1, zeta2
from .sun import (SunParams, mc_moments, quadrature_posterior_moments, sample_smoothing_iid,
                  sample_truncated_mvn, sun_smoothing_params)

__all__ = [
    "DynamicProbitModel", "EpConfig", "EpError", "GaussianApprox", "ModelError",
    "PriorCovariance", "PriorCovarianceError", "SiteState", "SparseCovariate", "SunParams",
    "build_prior_covariance", "ep_smooth", "ep_smooth_dense", "ep_smooth_lowrank",
    "log_norm_cdf", "mc_moments", "quadrature_posterior_moments", "sample_smoothing_iid",
    "sample_truncated_mvn", "simulate", "site_update", "sun_smoothing_params", "zeta1", "zeta2",
]
