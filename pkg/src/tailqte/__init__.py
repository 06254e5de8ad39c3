"""Quantile treatment effects by truncated inverse-probability weighting.

The estimators stay valid when propensity scores are not bounded away from
0 or 1: the weight denominators are floored at a vanishing truncation
level b_n, the convergence rate is governed by the tail index gamma of the
score law near the boundary, and inference runs through subsampling and
the non-Gaussian limit laws implemented in :mod:`tailqte.limitlaw`.
"""

__version__ = "0.1.0"

from .errors import TailQteError
from .estimators import (
    QteResult,
    QuantileEstimate,
    estimate_arm_quantile,
    estimate_intermediate,
    estimate_qte,
    truncation_sweep,
)
from .propensity import (
    LogisticModel,
    ObservationSet,
    WeightScheme,
    build_nsw_features,
    fit_logistic,
    make_weights,
)
from .quantile import (
    CheckLossParams,
    WeightedSample,
    check_loss,
    objective,
    weighted_quantile,
)
from .subsampling import interval_from_subsamples, subsample_size, subsample_statistic
from .tails import (
    ScalingSequence,
    TailCdf,
    TailFit,
    compute_h_fixed,
    compute_h_intermediate,
    hill_estimate,
    select_order_mindist,
    truncation_from_theta,
)

__all__ = [
    "__version__",
    "TailQteError",
    "CheckLossParams",
    "WeightedSample",
    "check_loss",
    "objective",
    "weighted_quantile",
    "ObservationSet",
    "LogisticModel",
    "WeightScheme",
    "build_nsw_features",
    "fit_logistic",
    "make_weights",
    "TailCdf",
    "TailFit",
    "ScalingSequence",
    "hill_estimate",
    "select_order_mindist",
    "compute_h_fixed",
    "compute_h_intermediate",
    "truncation_from_theta",
    "QuantileEstimate",
    "QteResult",
    "estimate_arm_quantile",
    "estimate_qte",
    "estimate_intermediate",
    "truncation_sweep",
    "subsample_size",
    "subsample_statistic",
    "interval_from_subsamples",
]
