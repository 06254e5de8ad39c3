"""Tail-index estimation and the scaling/truncation sequences h_n, b_n.

The propensity law F(t) = P(e <= t) is regularly varying at 0 with index
gamma - 1; equivalently the inverse scores 1/e have a power tail with index
gamma - 1.  Everything here is driven by the map

    phi(w) = F(1/w) / w,

which is nonincreasing in w, and whose 1/n-"quantile" defines the
normalization sequence h_n.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy import stats as sps

from .errors import (
    DegenerateCdf,
    InsufficientData,
    NonPositiveValue,
    QuadratureFailure,
    ThetaRequiredPositive,
)

__all__ = [
    "TailCdf",
    "TailFit",
    "ScalingSequence",
    "hill_estimate",
    "hill_curve",
    "select_order_mindist",
    "compute_h_fixed",
    "compute_h_intermediate",
    "scaling_for",
    "truncation_from_theta",
    "check_key_limits",
    "default_k_range",
]


@dataclass(frozen=True)
class TailCdf:
    """Law of the propensity score near 0: parametric or empirical.

    kinds
    -----
    ``beta(a, b)``   scipy Beta CDF; regular-variation index a at 0.
    ``power(c)``     F(t) = min(t, 1)^c on [0, 1]; the pure-power case used
                     by closed-form tests (gamma = c + 1).
    ``empirical``    step CDF of the supplied scores.
    """

    kind: str
    a: float = 0.0
    b: float = 0.0
    scores: np.ndarray | None = field(default=None)

    @staticmethod
    def beta(a: float, b: float) -> "TailCdf":
        if a <= 0 or b <= 0:
            raise ValueError("beta parameters must be positive")
        return TailCdf(kind="beta", a=a, b=b)

    @staticmethod
    def power(c: float) -> "TailCdf":
        if c <= 0:
            raise ValueError("power exponent must be positive")
        return TailCdf(kind="power", a=c)

    @staticmethod
    def empirical(scores) -> "TailCdf":
        s = np.sort(np.asarray(scores, dtype=float))
        if s.size == 0:
            raise ValueError("empirical CDF needs at least one score")
        if s[0] <= 0.0 or s[-1] >= 1.0:
            raise ValueError("scores must lie strictly in (0, 1)")
        return TailCdf(kind="empirical", scores=s)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "beta":
            out = sps.beta.cdf(t, self.a, self.b)
        elif self.kind == "power":
            out = np.clip(t, 0.0, 1.0) ** self.a
        elif self.kind == "empirical":
            out = np.searchsorted(self.scores, t, side="right") / self.scores.size
        else:  # pragma: no cover
            raise ValueError(f"unknown TailCdf kind {self.kind!r}")
        return float(out) if out.ndim == 0 else out

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "beta":
            out = sps.beta.pdf(t, self.a, self.b)
        elif self.kind == "power":
            out = np.where((t > 0) & (t < 1), self.a * t ** (self.a - 1.0), 0.0)
        else:
            raise ValueError("pdf available for parametric kinds only")
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TailFit:
    """Hill-based tail fit of the propensity law with order-selection data."""

    gamma_hat: float
    k_selected: int
    hill_curve: np.ndarray  # columns (k, xi_hat)
    ks_distances: np.ndarray  # columns (k, ks_distance)

    @property
    def in_theory_range(self) -> bool:
        """gamma > 1 is required by the limit theory; beyond it, flag."""
        return self.gamma_hat > 1.0


@dataclass(frozen=True)
class ScalingSequence:
    """Normalization h_n and truncation b_n for one regime.

    Construction through :func:`scaling_for` guarantees the defining
    relations: h_n solves the 1/n-quantile equation for its regime and
    h_n b_n = theta (fixed) or g(q) h_n b_n = theta (intermediate).
    """

    regime: str  # "fixed" | "intermediate"
    h_n: float
    b_n: float
    theta: float
    n: int
    tau_n: float | None = None
    g_at_q: float | None = None
    g_approximate: bool = False

    def __post_init__(self):
        if self.regime not in ("fixed", "intermediate"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.h_n <= 0 or self.b_n < 0 or self.theta < 0:
            raise ValueError("h_n must be positive; b_n, theta nonnegative")
        product = self.h_n * self.b_n
        if self.regime == "intermediate":
            if self.tau_n is None or self.g_at_q is None:
                raise ValueError("intermediate regime needs tau_n and g_at_q")
            product *= self.g_at_q
        if abs(product - self.theta) > 1e-8 * max(1.0, self.theta):
            raise ValueError(
                f"h_n b_n = {product} inconsistent with theta = {self.theta}"
            )


def _validate_tail_data(data, k):
    x = np.asarray(data, dtype=float)
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise NonPositiveValue("tail data must be finite and positive")
    if x.size < 3 or not 2 <= k < x.size:
        raise InsufficientData(f"need 2 <= k < n, got k={k}, n={x.size}")
    return np.sort(x)


def hill_estimate(data, k: int) -> float:
    """Hill estimate xi_k of the reciprocal tail index.

    Averages log excesses of the top k order statistics over the (k+1)-th
    largest value.  The propensity tail index is gamma = 1 + 1/xi when the
    data are inverse scores 1/e (or 1/(1-e) for the control side).
    """
    x = _validate_tail_data(data, k)
    top = x[-k:]
    threshold = x[-k - 1]
    return float(np.mean(np.log(top / threshold)))


def default_k_range(n: int) -> np.ndarray:
    """Hill-plot k grid: 2 .. min(n - 1, n / 4)."""
    k_max = min(n - 1, max(2, n // 4))
    return np.arange(2, k_max + 1)


def hill_curve(data, k_values=None) -> np.ndarray:
    """Columns (k, xi_hat) over a k grid (Hill plot data)."""
    x = np.sort(np.asarray(data, dtype=float))
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise NonPositiveValue("tail data must be finite and positive")
    n = x.size
    if k_values is None:
        k_values = default_k_range(n)
    logs = np.log(x)
    # cumulative sums of the descending log order statistics give all Hill
    # estimates in one pass
    desc = logs[::-1]
    csum = np.cumsum(desc)
    out = np.empty((len(k_values), 2))
    for i, k in enumerate(np.asarray(k_values, dtype=int)):
        if not 2 <= k < n:
            raise InsufficientData(f"k={k} outside 2 <= k < n={n}")
        out[i] = (k, csum[k - 1] / k - logs[n - k - 1])
    return out


def _ks_exceedance_distance(sorted_data, k, xi):
    """KS distance between the k exceedances and the fitted Pareto tail."""
    threshold = sorted_data[-k - 1]
    exc = sorted_data[-k:] / threshold
    # fitted Pareto CDF on exceedance ratios: 1 - r^(-1/xi)
    fitted = 1.0 - exc ** (-1.0 / xi) if xi > 0 else np.ones(k)
    grid_hi = np.arange(1, k + 1) / k
    grid_lo = np.arange(0, k) / k
    return float(np.max(np.maximum(np.abs(grid_hi - fitted), np.abs(grid_lo - fitted))))


def select_order_mindist(data, k_max: int | None = None) -> TailFit:
    """Minimum-KS-distance choice of the Hill order statistic count.

    For each k the tail above the (k+1)-th largest point is fit by a Pareto
    with the Hill exponent, and the Kolmogorov-Smirnov distance between the
    empirical and fitted exceedance laws is recorded; the k with the
    smallest distance wins.  Returns the fit with gamma = 1 + 1/xi.
    """
    x = np.sort(np.asarray(data, dtype=float))
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise NonPositiveValue("tail data must be finite and positive")
    n = x.size
    if k_max is None:
        k_values = default_k_range(n)
    else:
        if not 2 <= k_max <= n - 1:
            raise InsufficientData(f"need 2 <= k_max <= n-1, got {k_max}")
        k_values = np.arange(2, k_max + 1)
    curve = hill_curve(x, k_values)
    dists = np.empty_like(curve)
    for i, (k, xi) in enumerate(curve):
        k = int(k)
        if xi <= 0:
            dists[i] = (k, np.inf)
            continue
        dists[i] = (k, _ks_exceedance_distance(x, k, xi))
    best = int(np.argmin(dists[:, 1]))
    k_star = int(curve[best, 0])
    xi_star = curve[best, 1]
    gamma_hat = 1.0 + 1.0 / xi_star if xi_star > 0 else np.inf
    return TailFit(
        gamma_hat=float(gamma_hat),
        k_selected=k_star,
        hill_curve=curve,
        ks_distances=dists,
    )


def _phi(F: TailCdf, w):
    return F.cdf(1.0 / w) / w


def _h_parametric(F: TailCdf, target: float, rel_tol: float = 1e-13) -> float:
    # phi is nonincreasing; bracket then bisect on log w
    lo = 1.0
    while _phi(F, lo) <= target:
        lo /= 2.0
        if lo < 1e-280:
            raise DegenerateCdf("phi(w) <= target for arbitrarily small w")
    hi = max(2.0, lo * 2.0)
    while _phi(F, hi) > target:
        hi *= 2.0
        if hi > 1e280:
            raise DegenerateCdf("phi(w) never drops below target")
    for _ in range(200):
        mid = np.sqrt(lo * hi)
        if _phi(F, mid) <= target:
            hi = mid
        else:
            lo = mid
        if hi - lo <= rel_tol * hi:
            break
    return float(hi)


def _h_empirical(F: TailCdf, target: float) -> float:
    # exact flat-segment scan: on w in (1/s_{j+1}, 1/s_j] the condition
    # phi(w) <= target reads w >= C_j / (n * target)
    s = F.scores
    n = s.size
    uniq, counts = np.unique(s, return_counts=True)
    cum = np.cumsum(counts)
    m = uniq.size
    for j in range(m - 1, -1, -1):
        required = cum[j] / (n * target)
        upper = 1.0 / uniq[j]
        lower = 0.0 if j == m - 1 else 1.0 / uniq[j + 1]
        if required <= upper:
            return float(max(required, lower))
    # phi drops to 0 below the smallest score; the infimum sits at 1/s_min
    return float(1.0 / uniq[0])


def compute_h_fixed(F: TailCdf, n: int) -> float:
    """h_n = inf{w > 0 : F(1/w) / w <= 1/n}.

    Parametric CDFs are solved by bisection (the map is nonincreasing);
    empirical CDFs by an exact scan over the flat segments, because the map
    is then discontinuous.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if F.cdf(1.0) <= 0.0:
        raise DegenerateCdf("CDF carries no mass on (0, 1)")
    target = 1.0 / n
    if F.kind == "empirical":
        return _h_empirical(F, target)
    return _h_parametric(F, target)


def compute_h_intermediate(F: TailCdf, n: int, tau_n: float, g_at_q: float) -> float:
    """Intermediate-regime normalization, the fixed solver at level 1/(n tau_n)
    divided by the outcome density at the target quantile."""
    if not 0.0 < tau_n <= 1.0:
        raise ValueError("tau_n must lie in (0, 1]")
    if n * tau_n <= 1.0:
        raise ValueError("need n * tau_n > 1")
    if g_at_q <= 0.0:
        raise ValueError("g_at_q must be positive")
    if F.cdf(1.0) <= 0.0:
        raise DegenerateCdf("CDF carries no mass on (0, 1)")
    target = 1.0 / (n * tau_n)
    if F.kind == "empirical":
        root = _h_empirical(F, target)
    else:
        root = _h_parametric(F, target)
    return root / g_at_q


def scaling_for(
    F: TailCdf,
    n: int,
    theta: float,
    regime: str = "fixed",
    tau_n: float | None = None,
    g_at_q: float | None = None,
    g_approximate: bool = False,
) -> ScalingSequence:
    """Assemble the (h_n, b_n) pair for a regime from the score CDF."""
    if regime == "fixed":
        h_n = compute_h_fixed(F, n)
    else:
        if tau_n is None or g_at_q is None:
            raise ValueError("intermediate regime needs tau_n and g_at_q")
        h_n = compute_h_intermediate(F, n, tau_n, g_at_q)
    b_n = truncation_from_theta(h_n, theta, regime, g_at_q if g_at_q else 1.0)
    return ScalingSequence(
        regime=regime,
        h_n=h_n,
        b_n=b_n,
        theta=theta,
        n=n,
        tau_n=tau_n,
        g_at_q=g_at_q,
        g_approximate=g_approximate,
    )


def truncation_from_theta(
    h_n: float,
    theta: float,
    regime: str = "fixed",
    g_at_q: float = 1.0,
) -> float:
    """Truncation level b_n matching h_n b_n -> theta (fixed regime) or
    g(q) h_n b_n -> theta (intermediate regime, theta > 0 required)."""
    if h_n <= 0:
        raise ValueError("h_n must be positive")
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    if regime == "fixed":
        return theta / h_n
    if regime == "intermediate":
        if theta <= 0:
            raise ThetaRequiredPositive("intermediate regime requires theta > 0")
        if g_at_q <= 0:
            raise ValueError("g_at_q must be positive")
        return theta / (g_at_q * h_n)
    raise ValueError(f"unknown regime {regime!r}")


def _quad(fun, lo, hi, rel_tol=1e-11):
    val, err = integrate.quad(fun, lo, hi, limit=400, epsabs=0.0, epsrel=rel_tol)
    if not np.isfinite(val) or err > max(abs(val) * 1e-6, 1e-15):
        raise QuadratureFailure(
            f"quadrature on [{lo}, {hi}] unreliable (value {val}, error {err})"
        )
    return val


def karamata_ratios(F: TailCdf, gamma: float, u, beta: float | None = None):
    """Numerical-over-asymptotic ratios of the two Karamata integrals.

    ratio1(u) = int_0^u z F(dz) / [((gamma-1)/gamma) u F(u)]
    ratio2(u) = int_u^1 z^-beta F(dz) / [((gamma-1)/(1+beta-gamma)) u^-beta F(u)]

    Both tend to 1 as u -> 0.  ``beta`` must exceed gamma - 1; defaults to
    gamma itself.
    """
    if beta is None:
        beta = gamma
    if beta <= gamma - 1.0:
        raise ValueError("beta must exceed gamma - 1")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    r1 = np.empty(u.size)
    r2 = np.empty(u.size)
    for i, ui in enumerate(u):
        num1 = _quad(lambda z: z * F.pdf(z), 0.0, ui)
        den1 = (gamma - 1.0) / gamma * ui * F.cdf(ui)
        num2 = _quad(lambda z: z ** (-beta) * F.pdf(z), ui, 1.0)
        den2 = (gamma - 1.0) / (1.0 + beta - gamma) * ui ** (-beta) * F.cdf(ui)
        r1[i] = num1 / den1
        r2[i] = num2 / den2
    return r1, r2


def check_key_limits(
    F: TailCdf,
    gamma: float,
    theta: float,
    n_grid,
    u_grid=(1e-3, 1e-4, 1e-5),
    beta: float | None = None,
) -> dict:
    """Finite-n values of the two key scaling limits plus Karamata ratios.

    For each n: h_n from the CDF, b_n = theta / h_n, and the sequences
    n h_n^{-1} F(b_n) and n b_n F(b_n), whose limits are theta^(gamma-1)
    and theta^gamma.  In the pure-power case both hold exactly for every n.
    """
    n_grid = np.asarray(n_grid, dtype=int)
    rows = []
    for n in n_grid:
        h = compute_h_fixed(F, int(n))
        b = truncation_from_theta(h, theta, "fixed")
        Fb = F.cdf(b) if b > 0 else 0.0
        rows.append((int(n), h, b, n / h * Fb, n * b * Fb))
    seq = np.array(rows)
    report = {
        "n": seq[:, 0],
        "h_n": seq[:, 1],
        "b_n": seq[:, 2],
        "n_over_h_F_b": seq[:, 3],
        "n_b_F_b": seq[:, 4],
        "target_n_over_h_F_b": theta ** (gamma - 1.0) if theta > 0 else 0.0,
        "target_n_b_F_b": theta**gamma if theta > 0 else 0.0,
    }
    if F.kind in ("beta", "power"):
        u = np.asarray(u_grid, dtype=float)
        r1, r2 = karamata_ratios(F, gamma, u, beta=beta)
        report.update({"u": u, "karamata_ratio_small": r1, "karamata_ratio_large": r2})
    return report
