"""Propensity-score estimation, NSW-style features, and truncated weights."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    MissingColumn,
    NonBinaryTreatment,
    ScoreOutOfRange,
    SeparationWarning,
    SingularHessian,
)

__all__ = [
    "ObservationSet",
    "LogisticModel",
    "WeightScheme",
    "NSW_FEATURE_ORDER",
    "NSW_FEATURE_VERSION",
    "build_nsw_features",
    "fit_logistic",
    "make_weights",
]

# Column order of the NSW design matrix is frozen; bump the version string
# if it ever changes so coefficient vectors remain comparable across runs.
NSW_FEATURE_ORDER = (
    "age",
    "education",
    "earn1974",
    "earn1975",
    "age_sq",
    "education_sq",
    "earn1974_sq",
    "earn1975_sq",
    "married",
    "black",
    "hispanic",
    "black_x_u74",
    "intercept",
)
NSW_FEATURE_VERSION = "nsw-design-v1"

_NSW_RAW_COLUMNS = (
    "age",
    "education",
    "earn1974",
    "earn1975",
    "married",
    "black",
    "hispanic",
    "u74",
)

_SCORE_CLAMP = 1e-12


@dataclass
class ObservationSet:
    """Outcomes, treatment indicators, and either covariates or scores.

    Exactly the ingestion unit: ``y`` and ``d`` are mandatory; ``scores``
    holds precomputed propensity scores in (0, 1) when available, otherwise
    ``covariates`` (with ``column_names``) feeds the logistic fit.
    """

    y: np.ndarray
    d: np.ndarray
    scores: np.ndarray | None = None
    covariates: np.ndarray | None = None
    column_names: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.d = np.asarray(self.d)
        if self.y.ndim != 1 or self.d.shape != self.y.shape:
            raise ValueError("y and d must be 1-d arrays of equal length")
        if not np.isin(self.d, (0, 1)).all():
            raise NonBinaryTreatment("treatment indicator must be 0/1")
        self.d = self.d.astype(int)
        if self.scores is not None:
            self.scores = np.asarray(self.scores, dtype=float)
            if self.scores.shape != self.y.shape:
                raise ValueError("scores must match y in length")
            if np.any(self.scores <= 0.0) or np.any(self.scores >= 1.0):
                raise ScoreOutOfRange("precomputed scores must lie strictly in (0, 1)")
        if self.covariates is not None:
            self.covariates = np.asarray(self.covariates, dtype=float)
            if self.covariates.shape[0] != self.y.size:
                raise ValueError("covariate rows must match y in length")

    @property
    def n(self) -> int:
        return self.y.size

    def take(self, idx) -> "ObservationSet":
        """Row subset (used by subsampling)."""
        return ObservationSet(
            y=self.y[idx],
            d=self.d[idx],
            scores=None if self.scores is None else self.scores[idx],
            covariates=None if self.covariates is None else self.covariates[idx],
            column_names=self.column_names,
        )


@dataclass(frozen=True)
class LogisticModel:
    """Fitted logistic propensity model.

    ``loglik_path`` holds the accepted log-likelihood after each Newton
    step; damping makes it nondecreasing.
    """

    coefficients: np.ndarray
    feature_names: tuple[str, ...]
    iterations: int
    gradient_norm: float
    separation: bool
    loglik_path: tuple[float, ...] = ()
    feature_version: str = NSW_FEATURE_VERSION

    def predict(self, design: np.ndarray) -> np.ndarray:
        """Fitted scores, clamped strictly inside (0, 1)."""
        eta = np.asarray(design, dtype=float) @ self.coefficients
        p = 1.0 / (1.0 + np.exp(-np.clip(eta, -700, 700)))
        return np.clip(p, _SCORE_CLAMP, 1.0 - _SCORE_CLAMP)


@dataclass(frozen=True)
class WeightScheme:
    """Per-unit truncated IPW weights for one treatment arm."""

    side: str  # "treated" | "control"
    b_n: float
    weights: np.ndarray


def build_nsw_features(table) -> tuple[np.ndarray, tuple[str, ...]]:
    """NSW design matrix from a mapping of named columns.

    ``table`` may be a pandas DataFrame or any mapping from column name to
    1-d array.  Raw earnings are squared as-is (no rescaling); coefficient
    magnitudes, not fitted scores, depend on that choice.

    Returns the (n, 13) design matrix and the frozen column order.
    """
    cols = {}
    for name in _NSW_RAW_COLUMNS:
        try:
            cols[name] = np.asarray(table[name], dtype=float)
        except (KeyError, IndexError):
            raise MissingColumn(f"required NSW column missing: {name!r}") from None
    n = cols["age"].size
    design = np.column_stack(
        [
            cols["age"],
            cols["education"],
            cols["earn1974"],
            cols["earn1975"],
            cols["age"] ** 2,
            cols["education"] ** 2,
            cols["earn1974"] ** 2,
            cols["earn1975"] ** 2,
            cols["married"],
            cols["black"],
            cols["hispanic"],
            cols["black"] * cols["u74"],
            np.ones(n),
        ]
    )
    return design, NSW_FEATURE_ORDER


def _log_likelihood(eta, d):
    # numerically stable Bernoulli log-likelihood sum(d*eta - log(1+e^eta))
    return float(np.sum(d * eta - np.logaddexp(0.0, eta)))


def fit_logistic(
    design: np.ndarray,
    d: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> LogisticModel:
    """Maximum-likelihood logistic fit by damped Newton iterations.

    Step-halving keeps the log-likelihood nondecreasing.  Convergence is
    gradient max-norm <= ``tol``; if after ``max_iter`` iterations the fit
    has not converged and any |linear predictor| exceeds 30, a
    ``SeparationWarning`` is emitted and the last iterate returned (the NSW
    design is known to produce near-degenerate scores, and the pipeline
    must not abort).

    Raises
    ------
    SingularHessian
        If the design is collinear.
    NonBinaryTreatment
        If ``d`` is not a 0/1 vector.
    """
    X = np.asarray(design, dtype=float)
    d = np.asarray(d)
    if not np.isin(d, (0, 1)).all():
        raise NonBinaryTreatment("treatment vector must contain only 0 and 1")
    d = d.astype(float)
    n, p = X.shape
    if n <= p:
        raise ValueError(f"need more observations ({n}) than parameters ({p})")

    beta = np.zeros(p)
    eta = X @ beta
    ll = _log_likelihood(eta, d)
    grad_norm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        mu = 1.0 / (1.0 + np.exp(-np.clip(eta, -700, 700)))
        grad = X.T @ (d - mu)
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm <= tol:
            break
        w = np.maximum(mu * (1.0 - mu), 1e-12)
        hess = (X * w[:, None]).T @ X
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            raise SingularHessian("collinear design matrix") from None
        if not np.all(np.isfinite(step)):
            raise SingularHessian("Newton step is not finite")
        # step halving: never accept a decrease in log-likelihood
        scale = 1.0
        for _ in range(60):
            cand = beta + scale * step
            eta_cand = X @ cand
            ll_cand = _log_likelihood(eta_cand, d)
            if ll_cand >= ll:
                break
            scale *= 0.5
        else:
            break
        beta, eta, ll = cand, eta_cand, ll_cand

    # a constant treatment vector puts the MLE at infinity; |eta| > 30 means
    # fitted probabilities within 1e-13 of 0 or 1. Either way the likelihood
    # is degenerate, whether or not the gradient test fired.
    separation = bool(np.max(np.abs(eta)) > 30.0) or d.min() == d.max()
    if separation:
        warnings.warn(
            "perfect or near-perfect separation detected; "
            "returning last iterate with clamped scores",
            SeparationWarning,
            stacklevel=2,
        )

    return LogisticModel(
        coefficients=beta,
        feature_names=tuple(f"x{j}" for j in range(p)),
        iterations=it,
        gradient_norm=grad_norm,
        separation=separation,
    )


def make_weights(scores, d, side: str, b_n: float) -> WeightScheme:
    """Truncated IPW weights D_i / max(e_i, b_n) for the requested arm.

    The control arm uses (1 - D_i) / max(1 - e_i, b_n).  ``b_n = 0`` means
    no truncation at all.
    """
    scores = np.asarray(scores, dtype=float)
    d = np.asarray(d)
    if np.any(scores <= 0.0) or np.any(scores >= 1.0):
        raise ScoreOutOfRange("scores must lie strictly in (0, 1)")
    if b_n < 0:
        raise ValueError("b_n must be nonnegative")
    if side == "treated":
        w = (d == 1) / np.maximum(scores, b_n)
    elif side == "control":
        w = (d == 0) / np.maximum(1.0 - scores, b_n)
    else:
        raise ValueError(f"side must be 'treated' or 'control', got {side!r}")
    return WeightScheme(side=side, b_n=float(b_n), weights=w)
