"""Subsampling-based inference for quantile estimates and QTEs.

Without-replacement subsamples of size n_B = floor(n / log n) are the
default; the ordinary bootstrap fails when the summands have infinite
variance, which is exactly the regime this package targets.  An m-out-of-n
with-replacement variant sits behind a flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EstimationError, InsufficientReplicates, TooSmall
from .propensity import ObservationSet

__all__ = [
    "SubsampleDistribution",
    "subsample_size",
    "subsample_statistic",
    "interval_from_subsamples",
]


@dataclass(frozen=True)
class SubsampleDistribution:
    """Replicate values of one statistic over B subsamples.

    ``replicates`` always has length B; failed replicates hold NaN so that
    successes + failures = B.
    """

    statistic: str
    replicates: np.ndarray
    n_B: int
    B: int
    seed: int
    n: int
    replacement: bool = False

    @property
    def failures(self) -> int:
        return int(np.isnan(self.replicates).sum())

    @property
    def values_ok(self) -> np.ndarray:
        return self.replicates[~np.isnan(self.replicates)]


def subsample_size(n: int) -> int:
    """floor(n / ln n); requires n >= 3."""
    if n < 3:
        raise TooSmall(f"subsampling needs n >= 3, got {n}")
    return int(math.floor(n / math.log(n)))


def _replicate_rng(seed: int, index: int):
    # fixed replicate -> seed mapping keeps results schedule-independent
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def subsample_statistic(
    obs: ObservationSet,
    statistic,
    B: int,
    n_B: int | None = None,
    seed: int = 0,
    replacement: bool = False,
    name: str = "statistic",
) -> SubsampleDistribution:
    """B replicates of ``statistic`` on random subsamples of ``obs``.

    ``statistic`` receives the subsampled ObservationSet and returns a
    float.  Replicates that raise an estimation error are recorded as NaN,
    never silently dropped.  Deterministic given (seed, B, n_B).
    """
    if B < 1:
        raise TooSmall("need B >= 1 replicates")
    n = obs.n
    if n_B is None:
        n_B = subsample_size(n)
    if not 0 < n_B < n:
        raise TooSmall(f"need 0 < n_B < n, got n_B={n_B}, n={n}")
    values = np.empty(B)
    for r in range(B):
        rng = _replicate_rng(seed, r)
        idx = rng.choice(n, size=n_B, replace=replacement)
        try:
            values[r] = float(statistic(obs.take(idx)))
        except EstimationError:
            values[r] = np.nan
    return SubsampleDistribution(
        statistic=name,
        replicates=values,
        n_B=int(n_B),
        B=int(B),
        seed=int(seed),
        n=int(n),
        replacement=replacement,
    )


def interval_from_subsamples(
    dist: SubsampleDistribution,
    point_estimate: float,
    level: float,
    rate_exponent: float | None = None,
) -> tuple[float, float]:
    """Confidence interval from the replicate distribution.

    Default rule: the empirical percentile interval of the replicates at
    levels (1 - level)/2 and (1 + level)/2, linear interpolation, no
    recentering.  Supplying ``rate_exponent`` (1 - 1/gamma for the fixed
    regime) switches to the standard subsampling calibration: percentiles
    of n_B^r (theta_b - theta_hat) are rescaled by n^r and flipped around
    the full-sample estimate.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    vals = dist.values_ok
    if vals.size < 20:
        raise InsufficientReplicates(
            f"need at least 20 successful replicates, got {vals.size}"
        )
    lo_q, hi_q = 100.0 * (1.0 - level) / 2.0, 100.0 * (1.0 + level) / 2.0
    if rate_exponent is None:
        lo, hi = np.percentile(vals, [lo_q, hi_q])
        return float(lo), float(hi)
    r_b = dist.n_B**rate_exponent
    r_n = dist.n**rate_exponent
    scaled = r_b * (vals - point_estimate)
    lo_s, hi_s = np.percentile(scaled, [lo_q, hi_q])
    return float(point_estimate - hi_s / r_n), float(point_estimate - lo_s / r_n)
