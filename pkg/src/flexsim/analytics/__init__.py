from flexsim.analytics.shapes import ClusterResult, LoadShape, cluster_shapes, hourly_profile, normalize_shape, sbd
from flexsim.analytics.stats import (AnalysisError, Correlation, FitResult, correlate, fit_exponential,
                                     fit_poisson, ks_two_sample, weekend_weekday_ratio)
from flexsim.analytics.tclest import (Contents, DeadbandEstimate, EpiSeries, compute_epi, estimate_deadband,
                                      estimate_duty_cycle)

__all__ = [
    "AnalysisError", "ClusterResult", "Contents", "Correlation", "DeadbandEstimate", "EpiSeries", "FitResult",
    "LoadShape", "cluster_shapes", "compute_epi", "correlate", "estimate_deadband", "estimate_duty_cycle",
    "fit_exponential", "fit_poisson", "hourly_profile", "ks_two_sample", "normalize_shape", "sbd",
    "weekend_weekday_ratio",
]
