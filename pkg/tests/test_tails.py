import numpy as np
import pytest

from tailqte.errors import InsufficientData, NonPositiveValue, ThetaRequiredPositive
from tailqte.tails import (
    ScalingSequence,
    TailCdf,
    check_key_limits,
    compute_h_fixed,
    compute_h_intermediate,
    default_k_range,
    hill_curve,
    hill_estimate,
    karamata_ratios,
    scaling_for,
    select_order_mindist,
    truncation_from_theta,
)


def pareto_sample(index, n, seed):
    """Survival x^(-index) on [1, inf): inverse transform."""
    rng = np.random.default_rng(seed)
    return rng.random(n) ** (-1.0 / index)


class TestHill:
    def test_pareto_oracle(self):
        # survival x^-2 has reciprocal tail index 0.5
        data = pareto_sample(2.0, 100_000, seed=11)
        assert hill_estimate(data, 1000) == pytest.approx(0.5, abs=0.05)

    def test_constant_data(self):
        assert hill_estimate(np.full(100, 3.7), 10) == 0.0

    def test_geometric_closed_form(self):
        # data r^j: mean of (k - j + 1) log r over j = 1..k
        r, n, k = 1.3, 50, 7
        data = r ** np.arange(1, n + 1)
        expected = (k + 1) / 2.0 * np.log(r)
        assert hill_estimate(data, k) == pytest.approx(expected, rel=1e-12)

    def test_scale_invariance(self):
        data = pareto_sample(1.5, 500, seed=3)
        base = hill_estimate(data, 50)
        # powers of two rescale mantissas exactly, so invariance is bitwise
        for c in (0.25, 2.0, 2.0**40):
            assert hill_estimate(c * data, 50) == base
        # arbitrary scales are exact up to one rounding in the products
        for c in (0.01, 7.0, 1e8):
            assert hill_estimate(c * data, 50) == pytest.approx(base, rel=1e-12)

    def test_guards(self):
        with pytest.raises(NonPositiveValue):
            hill_estimate([1.0, -2.0, 3.0], 2)
        with pytest.raises(InsufficientData):
            hill_estimate([1.0, 2.0, 3.0], 5)

    def test_curve_matches_pointwise(self):
        data = pareto_sample(2.0, 400, seed=5)
        curve = hill_curve(data, [2, 10, 50])
        for k, xi in curve:
            assert xi == pytest.approx(hill_estimate(data, int(k)), rel=1e-12)

    def test_default_k_range(self):
        ks = default_k_range(1342)
        assert ks[0] == 2 and ks[-1] == 1342 // 4


class TestOrderSelection:
    def test_pure_pareto_recovers_index(self):
        data = pareto_sample(2.0, 10_000, seed=21)
        fit = select_order_mindist(data)
        xi = 1.0 / (fit.gamma_hat - 1.0)
        assert xi == pytest.approx(0.5, abs=0.1)

    def test_kmax_two_trivial(self):
        data = pareto_sample(1.0, 100, seed=2)
        fit = select_order_mindist(data, k_max=2)
        assert fit.k_selected == 2

    def test_curve_and_distances_aligned(self):
        data = pareto_sample(1.5, 500, seed=9)
        fit = select_order_mindist(data, k_max=100)
        assert fit.hill_curve.shape == fit.ks_distances.shape
        assert fit.hill_curve[0, 0] == 2
        row = np.where(fit.ks_distances[:, 0] == fit.k_selected)[0][0]
        assert fit.ks_distances[row, 1] == fit.ks_distances[:, 1].min()

    def test_in_theory_flag(self):
        heavy = select_order_mindist(pareto_sample(0.5, 2000, seed=3))
        assert heavy.in_theory_range  # gamma = 1 + 1/xi > 1 whenever xi > 0
        light = select_order_mindist(pareto_sample(8.0, 2000, seed=3))
        assert light.gamma_hat > 1.0


class TestComputeH:
    def test_power_closed_form(self):
        assert compute_h_fixed(TailCdf.power(0.5), 1000) == pytest.approx(100.0, abs=1e-9)

    def test_uniform_closed_form(self):
        assert compute_h_fixed(TailCdf.power(1.0), 10_000) == pytest.approx(100.0, abs=1e-9)

    def test_monotone_in_n(self):
        F = TailCdf.beta(0.7, 2.0)
        hs = [compute_h_fixed(F, n) for n in (10, 100, 1000, 10_000)]
        assert all(hs[i] <= hs[i + 1] for i in range(len(hs) - 1))

    def test_regular_variation_exponent(self):
        F = TailCdf.power(0.5)  # gamma = 1.5
        ns = np.array([10**3, 10**5, 10**7])
        hs = [compute_h_fixed(F, int(n)) for n in ns]
        slope = np.polyfit(np.log(ns), np.log(hs), 1)[0]
        assert slope == pytest.approx(1.0 / 1.5, abs=0.01)

    def test_empirical_matches_definition(self):
        rng = np.random.default_rng(17)
        for trial in range(50):
            scores = rng.uniform(1e-4, 0.999, size=rng.integers(3, 40))
            F = TailCdf.empirical(scores)
            n = int(rng.integers(2, 500))
            h = compute_h_fixed(F, n)
            target = 1.0 / n
            # definitional check: phi > target strictly below h, <= just above
            assert F.cdf(1.0 / (h * (1 + 1e-9))) / (h * (1 + 1e-9)) <= target
            below = h * (1 - 1e-9)
            assert F.cdf(1.0 / below) / below > target

    def test_empirical_vs_parametric_agreement(self):
        # large empirical sample from the power law approaches the closed form
        rng = np.random.default_rng(4)
        scores = rng.random(200_000) ** 2.0  # F(t) = t^0.5
        h_emp = compute_h_fixed(TailCdf.empirical(scores), 1000)
        assert h_emp == pytest.approx(100.0, rel=0.1)


class TestComputeHIntermediate:
    def test_closed_form(self):
        # F = t^0.5, n tau = 1000, g = 2 -> 1000^(2/3) / 2 = 50
        F = TailCdf.power(0.5)
        assert compute_h_intermediate(F, 10_000, 0.1, 2.0) == pytest.approx(50.0, abs=1e-8)

    def test_unit_density_reduces_to_fixed(self):
        F = TailCdf.beta(0.5, 2.0)
        h1 = compute_h_intermediate(F, 5000, 0.2, 1.0)
        h2 = compute_h_fixed(F, 1000)
        assert h1 == pytest.approx(h2, rel=1e-10)

    def test_tau_one_recovers_fixed_over_g(self):
        F = TailCdf.power(0.5)
        h = compute_h_intermediate(F, 1000, 1.0, 2.0)
        assert h == pytest.approx(compute_h_fixed(F, 1000) / 2.0, rel=1e-10)


class TestTruncation:
    def test_soft_thresholding(self):
        assert truncation_from_theta(100.0, 0.0, "fixed") == 0.0

    def test_fixed_division(self):
        assert truncation_from_theta(100.0, 2.0, "fixed") == pytest.approx(0.02)

    def test_intermediate_division(self):
        assert truncation_from_theta(50.0, 1.0, "intermediate", g_at_q=2.0) == pytest.approx(0.01)

    def test_intermediate_requires_positive_theta(self):
        with pytest.raises(ThetaRequiredPositive):
            truncation_from_theta(50.0, 0.0, "intermediate", g_at_q=2.0)


class TestScalingSequence:
    def test_fixed_regime_consistent_by_construction(self):
        seq = scaling_for(TailCdf.power(0.5), 1000, theta=2.0)
        assert seq.h_n == pytest.approx(100.0, abs=1e-9)
        assert seq.h_n * seq.b_n == pytest.approx(2.0, rel=1e-12)

    def test_intermediate_regime_consistent(self):
        seq = scaling_for(
            TailCdf.power(0.5), 10_000, theta=1.0, regime="intermediate", tau_n=0.1, g_at_q=2.0
        )
        assert seq.h_n == pytest.approx(50.0, abs=1e-6)
        assert seq.g_at_q * seq.h_n * seq.b_n == pytest.approx(1.0, rel=1e-10)

    def test_inconsistent_pair_rejected(self):
        with pytest.raises(ValueError, match="inconsistent"):
            ScalingSequence(regime="fixed", h_n=100.0, b_n=0.5, theta=2.0, n=10)

    def test_intermediate_needs_density(self):
        with pytest.raises(ValueError):
            ScalingSequence(regime="intermediate", h_n=10.0, b_n=0.1, theta=1.0, n=10)


class TestKeyLimits:
    def test_pure_power_exact(self):
        rep = check_key_limits(TailCdf.power(0.5), 1.5, 1.0, [100, 10_000, 10**6])
        np.testing.assert_allclose(rep["n_b_F_b"], 1.0, rtol=1e-9)
        np.testing.assert_allclose(rep["n_over_h_F_b"], 1.0, rtol=1e-9)

    def test_theta_zero_targets_vanish(self):
        rep = check_key_limits(TailCdf.power(0.5), 1.5, 0.0, [100])
        assert rep["target_n_b_F_b"] == 0.0
        assert rep["n_b_F_b"][0] == 0.0

    def test_power_karamata_ratio_exact(self):
        # int_0^u z dF = u^1.5/3 equals ((gamma-1)/gamma) u F(u) identically
        r1, _ = karamata_ratios(TailCdf.power(0.5), 1.5, [1e-2, 1e-4])
        np.testing.assert_allclose(r1, 1.0, rtol=1e-9)

    def test_beta_ratios_converge(self):
        r1, r2 = karamata_ratios(TailCdf.beta(0.5, 2.0), 1.5, [1e-5])
        assert abs(r1[0] - 1.0) <= 0.05
        assert abs(r2[0] - 1.0) <= 0.05

    def test_beta_tail_index_slope(self):
        for a in (0.2, 0.5, 1.0):
            F = TailCdf.beta(a, 2.0)
            ts = np.geomspace(1e-6, 1e-3, 50)
            slope = np.polyfit(np.log(ts), np.log(F.cdf(ts)), 1)[0]
            assert slope == pytest.approx(a, abs=0.02)
