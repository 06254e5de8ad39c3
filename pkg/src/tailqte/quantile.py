"""Check-loss evaluation and the exact weighted-quantile minimizer.

Every estimator in the package reduces to minimizing a weighted sum of
check losses over a finite sample.  The objective is convex and piecewise
linear in the candidate quantile, so the minimizer is found exactly by a
sort plus cumulative-weight scan; no iterative optimization is used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyEffectiveSample

__all__ = [
    "CheckLossParams",
    "WeightedSample",
    "check_loss",
    "check_identity_residual",
    "objective",
    "weighted_quantile",
    "objective_process",
]


@dataclass(frozen=True)
class CheckLossParams:
    """Quantile level of the asymmetric absolute loss."""

    tau: float

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")


@dataclass(frozen=True)
class WeightedSample:
    """Outcomes with nonnegative weights, e.g. D_i / max(e_i, b_n).

    Weights may contain zeros (observations on the other treatment arm);
    the solver requires positive total weight.
    """

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if values.shape != weights.shape or values.ndim != 1:
            raise ValueError("values and weights must be 1-d arrays of equal length")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and nonnegative")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())


def check_loss(y, params: CheckLossParams):
    """rho_tau(y) = y * (tau - 1{y <= 0}); vectorized over ``y``."""
    y = np.asarray(y, dtype=float)
    out = y * (params.tau - (y <= 0.0))
    return float(out) if out.ndim == 0 else out


def _indicator_integral(u, v):
    """Closed form of int_0^v 1{u <= s} ds (signed integral, any sign of v)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    pos = np.maximum(0.0, v - np.maximum(u, 0.0))
    neg = np.minimum(0.0, np.maximum(u, v))
    return np.where(v >= 0.0, pos, neg)


def check_identity_residual(u: float, v: float, tau: float) -> float:
    """LHS minus RHS of the quantile-loss decomposition identity.

    rho_tau(u-v) - rho_tau(u) =
        -v (tau - 1{u <= 0}) + int_0^v (1{u <= s} - 1{u <= 0}) ds,
    with the integral evaluated in closed form.  Zero up to round-off for
    all real (u, v, tau).
    """
    p = CheckLossParams(tau)
    lhs = check_loss(u - v, p) - check_loss(u, p)
    integral = _indicator_integral(u, v) - v * (u <= 0.0)
    rhs = -v * (tau - (u <= 0.0)) + integral
    return float(lhs - rhs)


def objective(sample: WeightedSample, t: float, params: CheckLossParams) -> float:
    """Weighted check-loss objective sum_i w_i rho_tau(y_i - t)."""
    return float(np.sum(sample.weights * check_loss(sample.values - t, params)))


def _positive_part(sample: WeightedSample):
    mask = sample.weights > 0.0
    if not mask.any():
        raise EmptyEffectiveSample("all weights are zero")
    return sample.values[mask], sample.weights[mask]


def weighted_quantile(sample: WeightedSample, params: CheckLossParams) -> float:
    """Leftmost minimizer of the weighted check-loss objective.

    Zero-weight points are dropped, duplicate values merged, and the
    smallest support point whose cumulative weight reaches tau * W is
    returned.  When the cumulative weight hits tau * W exactly the objective
    is flat up to the next support point and the left endpoint is returned.
    If rounding pushes tau * W past the accumulated total (tau close to 1),
    the largest support point is returned.

    Raises
    ------
    EmptyEffectiveSample
        If the values are empty or every weight is zero.
    """
    values, weights = _positive_part(sample)
    order = np.argsort(values, kind="stable")
    values = values[order]
    weights = weights[order]
    # merge ties so the leftmost rule is well defined under duplicates
    uniq, inverse = np.unique(values, return_inverse=True)
    merged = np.bincount(inverse, weights=weights, minlength=uniq.size)
    cum = np.cumsum(merged)
    target = params.tau * cum[-1]
    idx = int(np.searchsorted(cum, target, side="left"))
    if idx >= uniq.size:
        idx = uniq.size - 1
    return float(uniq[idx])


def objective_process(
    sample: WeightedSample,
    tau: float,
    q_center: float,
    u_grid,
    h_n: float,
    n: int,
):
    """Rescaled objective increments around a centering point.

    Returns (n / h_n^2) * [X_n(tau, q_center - u h_n / n) - X_n(tau, q_center)]
    for each u in ``u_grid``.  Convex in u, zero at u = 0; used by the
    simulation-lab quadratic-drift diagnostic.
    """
    if h_n <= 0:
        raise ValueError("h_n must be positive")
    if n < 1:
        raise ValueError("n must be at least 1")
    params = CheckLossParams(tau)
    base = objective(sample, q_center, params)
    scale = n / h_n**2
    out = [
        scale * (objective(sample, q_center - u * h_n / n, params) - base)
        for u in np.asarray(u_grid, dtype=float)
    ]
    return np.asarray(out)
