import numpy as np
import pytest
from scipy import integrate
from scipy.stats import ks_2samp, levy_stable

from tailqte.errors import InvalidBalanceConstant, InvalidSpec, ThetaRequiredPositive
from tailqte.limitlaw import (
    FixedLimitSpec,
    IntermediateLimitSpec,
    _fixed_jump_arrays,
    _radial_cutoff,
    cf_construction_intermediate,
    eval_cf_fixed,
    eval_cf_intermediate,
    fixed_levy_tail,
    gaussian_limit_cov,
    qte_limit_combine,
    sample_fixed_limit,
    sample_intermediate_limit,
    sample_stable_cms,
    stable_params_from_fixed_spec,
)

KS_CRIT_1PCT = 1.628  # asymptotic two-sample coefficient at the 1% level


def empirical_cf(z, a_grid):
    return np.array([np.exp(1j * a * z).mean() for a in a_grid])


class TestSpecValidation:
    def test_gamma_range(self):
        with pytest.raises(InvalidSpec):
            FixedLimitSpec(gamma=2.5, theta=0.0, taus=(0.5,), p0=(0.5,))

    def test_non_monotone_p0_rejected(self):
        with pytest.raises(InvalidSpec):
            FixedLimitSpec(gamma=1.5, theta=1.0, taus=(0.3, 0.7), p0=(0.6, 0.4))

    def test_unsorted_taus_rejected(self):
        with pytest.raises(InvalidSpec):
            FixedLimitSpec(gamma=1.5, theta=1.0, taus=(0.7, 0.3), p0=(0.3, 0.7))

    def test_drift_vanishes_at_theta_zero(self):
        spec = FixedLimitSpec(gamma=1.3, theta=0.0, taus=(0.4,), p0=(0.2,))
        assert spec.drift[0] == 0.0

    def test_intermediate_requires_positive_theta(self):
        with pytest.raises(ThetaRequiredPositive):
            IntermediateLimitSpec(gamma=1.5, theta=0.0, beta=1.0)


class TestFixedSampler:
    def test_levy_tail_closed_form(self):
        # nu((-inf,-t]) for t < (1-tau)/theta: atom plus radial integral
        spec = FixedLimitSpec(gamma=1.5, theta=1.0, taus=(0.7,), p0=(0.5,))
        g, th, tau, p0 = 1.5, 1.0, 0.7, 0.5
        t = 0.2
        x_reach = (1 - tau) / t
        expected = p0 * ((g - 1) / g * th**g + (g - 1) * integrate.quad(
            lambda x: x ** (g - 1), th, x_reach
        )[0])
        assert fixed_levy_tail(spec, t) == pytest.approx(expected, rel=1e-12)

    def test_sampled_jump_tail_matches_levy_measure(self):
        spec = FixedLimitSpec(gamma=1.5, theta=1.0, taus=(0.7,), p0=(0.5,))
        n_draws = 40_000
        rng = np.random.default_rng(8)
        x_cut = _radial_cutoff(spec, 500.0)
        _, jumps = _fixed_jump_arrays(spec, n_draws, rng, x_cut)
        for t in (0.1, 0.2, 0.25):
            expected = n_draws * fixed_levy_tail(spec, t)
            count = np.sum(jumps[:, 0] <= -t)
            assert abs(count - expected) <= 5.0 * np.sqrt(expected)

    def test_mean_converges_to_drift(self):
        spec = FixedLimitSpec(gamma=1.5, theta=1.0, taus=(0.7,), p0=(0.5,))
        z = sample_fixed_limit(spec, 200_000, seed=4)
        assert z.mean(axis=0)[0] == pytest.approx(spec.drift[0], abs=0.01)

    def test_zero_mean_when_p0_equals_tau(self):
        spec = FixedLimitSpec(gamma=1.5, theta=1.0, taus=(0.7,), p0=(0.7,))
        z = sample_fixed_limit(spec, 200_000, seed=5)
        assert abs(z.mean(axis=0)[0]) < 0.01

    def test_bivariate_jump_sign_pattern(self):
        # one y drives all coordinates, so 1{y<=q1} <= 1{y<=q2} for tau1 < tau2:
        # a negative first coordinate (y <= q1) forces a negative second one
        spec = FixedLimitSpec(gamma=1.4, theta=0.8, taus=(0.3, 0.8), p0=(0.25, 0.75))
        rng = np.random.default_rng(10)
        _, jumps = _fixed_jump_arrays(spec, 5_000, rng, _radial_cutoff(spec, 200.0))
        neg1 = jumps[:, 0] < 0
        assert neg1.any()
        assert np.all(jumps[neg1, 1] < 0)

    def test_reproducible_given_seed(self):
        spec = FixedLimitSpec(gamma=1.5, theta=0.5, taus=(0.5,), p0=(0.5,))
        a = sample_fixed_limit(spec, 3000, seed=42)
        b = sample_fixed_limit(spec, 3000, seed=42)
        np.testing.assert_array_equal(a, b)


class TestFixedCf:
    def test_matches_stable_closed_form_at_theta_zero(self):
        spec = FixedLimitSpec(gamma=1.5, theta=0.0, taus=(0.7,), p0=(0.6,))
        alpha, sigma, skew = stable_params_from_fixed_spec(spec)
        for a in (0.5, 1.3, -2.0):
            closed = np.exp(
                -((sigma * abs(a)) ** alpha) * (1 - 1j * skew * np.sign(a) * np.tan(np.pi * alpha / 2))
            )
            assert eval_cf_fixed(spec, [a]) == pytest.approx(closed, abs=1e-12)

    def test_sampler_matches_cf_theta_positive(self):
        spec = FixedLimitSpec(gamma=1.5, theta=1.0, taus=(0.7,), p0=(0.5,))
        z = sample_fixed_limit(spec, 100_000, seed=33)[:, 0]
        for a in (0.5, 1.5, 3.0):
            emp = np.exp(1j * a * z).mean()
            assert abs(emp - eval_cf_fixed(spec, [a])) <= 0.01

    def test_bivariate_sampler_matches_cf(self):
        spec = FixedLimitSpec(gamma=1.4, theta=0.8, taus=(0.3, 0.8), p0=(0.25, 0.75))
        z = sample_fixed_limit(spec, 100_000, seed=34)
        for a in ([1.0, 0.0], [0.5, -1.0], [2.0, 1.0]):
            emp = np.exp(1j * (z @ np.asarray(a))).mean()
            assert abs(emp - eval_cf_fixed(spec, a)) <= 0.01

    def test_cf_at_origin(self):
        spec = FixedLimitSpec(gamma=1.5, theta=0.5, taus=(0.4, 0.6), p0=(0.4, 0.6))
        assert eval_cf_fixed(spec, [0.0, 0.0]) == 1.0

    def test_wrong_length_rejected(self):
        spec = FixedLimitSpec(gamma=1.5, theta=0.5, taus=(0.4, 0.6), p0=(0.4, 0.6))
        with pytest.raises(InvalidSpec):
            eval_cf_fixed(spec, [1.0])


class TestStableCrossCheck:
    @pytest.mark.parametrize("gamma", [1.2, 1.5, 1.8])
    @pytest.mark.parametrize("tau", [0.5, 0.9])
    def test_theta_zero_matches_cms(self, gamma, tau):
        n = 30_000
        spec = FixedLimitSpec(gamma=gamma, theta=0.0, taus=(tau,), p0=(tau,))
        alpha, sigma, skew = stable_params_from_fixed_spec(spec)
        z_id = sample_fixed_limit(spec, n, seed=61)[:, 0]
        z_st = sample_stable_cms(alpha, sigma, skew, n, seed=62)
        crit = KS_CRIT_1PCT * np.sqrt(2.0 / n)
        assert ks_2samp(z_id, z_st).statistic < crit

    def test_cms_against_scipy(self):
        # scipy's S1 parameterization coincides for alpha > 1, mu = 0
        alpha, sigma, skew = 1.5, 0.7, 0.4
        ours = sample_stable_cms(alpha, sigma, skew, 30_000, seed=3)
        ref = levy_stable.rvs(alpha, skew, loc=0.0, scale=sigma, size=30_000, random_state=4)
        crit = KS_CRIT_1PCT * np.sqrt(2.0 / 30_000)
        assert ks_2samp(ours, ref).statistic < crit

    def test_stable_params_positive_scale(self):
        spec = FixedLimitSpec(gamma=1.2, theta=0.0, taus=(0.9,), p0=(0.9,))
        alpha, sigma, skew = stable_params_from_fixed_spec(spec)
        assert alpha == 1.2 and sigma > 0 and -1 <= skew <= 1


class TestIntermediate:
    def test_atom_mass_and_drift_closed_form(self):
        spec = IntermediateLimitSpec(gamma=1.5, theta=1.0, beta=1.0)
        assert spec.atom_mass == pytest.approx(1.0 / 3.0)
        assert spec.drift == 0.0
        spec2 = IntermediateLimitSpec(gamma=1.5, theta=2.0, beta=3.0)
        assert spec2.drift == pytest.approx((3 - 1) / 1.5 * 2**1.5)

    def test_cf_at_zero_and_symmetry(self):
        spec = IntermediateLimitSpec(gamma=1.5, theta=1.0, beta=1.0)
        assert eval_cf_intermediate(spec, 0.0) == 1.0
        for a in (0.5, 1.7, 4.0):
            assert eval_cf_intermediate(spec, -a) == pytest.approx(
                np.conj(eval_cf_intermediate(spec, a)), abs=1e-10
            )

    def test_empirical_cf_matches_analytic(self):
        spec = IntermediateLimitSpec(gamma=1.5, theta=1.0, beta=1.0)
        z = sample_intermediate_limit(spec, 50_000, seed=3)
        a_grid = np.linspace(-5, 5, 21)
        err = np.abs(empirical_cf(z, a_grid) - [eval_cf_intermediate(spec, a) for a in a_grid])
        assert err.max() <= 0.03

    def test_cf_against_high_count_sampler(self):
        # one-point check at a=1 with a large draw count
        spec = IntermediateLimitSpec(gamma=1.5, theta=1.0, beta=1.0)
        z = sample_intermediate_limit(spec, 1_000_000, seed=9)
        emp = np.exp(1j * z).mean()
        assert abs(emp - eval_cf_intermediate(spec, 1.0)) <= 0.005

    def test_eps_halving_construction_stable(self):
        spec = IntermediateLimitSpec(gamma=1.5, theta=1.0, beta=1.0)
        a_grid = np.linspace(-5, 5, 11)
        diffs = [
            abs(cf_construction_intermediate(spec, 1e-3, a) - cf_construction_intermediate(spec, 5e-4, a))
            for a in a_grid
        ]
        assert max(diffs) < 1e-3

    def test_jump_support(self):
        # no density jump below -1/theta; magnitudes live in [eps, 1/theta]
        spec = IntermediateLimitSpec(gamma=1.5, theta=2.0, beta=1.5)
        g, th, b = spec.gamma, spec.theta, spec.beta
        eps = 0.05
        rng = np.random.default_rng(12)
        u = rng.random(100_000)
        s = (eps**-g - u * (eps**-g - th**g)) ** (-1.0 / g)
        assert s.max() <= 1.0 / th + 1e-12
        assert s.min() >= eps - 1e-12
        z = sample_intermediate_limit(spec, 5_000, seed=5, eps=eps)
        assert np.isfinite(z).all()

    def test_mean_equals_drift(self):
        spec = IntermediateLimitSpec(gamma=1.5, theta=1.0, beta=2.0)
        z = sample_intermediate_limit(spec, 300_000, seed=6)
        assert z.mean() == pytest.approx(spec.drift, abs=0.015)

    def test_independent_streams_uncorrelated(self):
        spec = IntermediateLimitSpec(gamma=1.5, theta=1.0, beta=1.0)
        z1 = sample_intermediate_limit(spec, 1_000_000, seed=100, eps=0.05)
        z0 = sample_intermediate_limit(spec, 1_000_000, seed=200, eps=0.05)
        r = np.corrcoef(z1, z0)[0, 1]
        assert abs(r) <= 0.01


class TestGaussianCov:
    @staticmethod
    def _sampler_const_e(value):
        def sampler(rng, size):
            return np.full(size, value), rng.standard_normal(size)

        return sampler

    def test_always_treated_bernoulli_variance(self):
        from scipy.stats import norm

        tau = 0.3
        spec = gaussian_limit_cov(
            self._sampler_const_e(1.0 - 1e-12), [tau], [norm.ppf(tau)], mc_count=400_000, seed=1
        )
        assert spec.covariance[0, 0] == pytest.approx(tau * (1 - tau), abs=0.005)

    def test_independent_scores_factorize(self):
        # E[1/e] = 2 for e ~ Uniform(1/3, 1)? No: choose two-point e in {0.25, 0.75}
        def sampler(rng, size):
            e = np.where(rng.random(size) < 0.5, 0.25, 0.75)  # E[1/e] = (4 + 4/3)/2 = 8/3
            return e, rng.standard_normal(size)

        spec = gaussian_limit_cov(sampler, [0.5], [0.0], mc_count=400_000, seed=2)
        assert spec.covariance[0, 0] == pytest.approx((8.0 / 3.0) * 0.25, abs=0.01)

    def test_matrix_symmetric_psd(self):
        def sampler(rng, size):
            return rng.uniform(0.3, 0.9, size), rng.standard_normal(size)

        from scipy.stats import norm

        taus = [0.25, 0.5, 0.75]
        qs = [norm.ppf(t) for t in taus]
        spec = gaussian_limit_cov(sampler, taus, qs, mc_count=100_000, seed=3)
        cov = spec.covariance
        np.testing.assert_allclose(cov, cov.T)
        assert np.linalg.eigvalsh(cov).min() >= -1e-12
        assert np.all(np.diag(cov) >= 0)


class TestQteCombine:
    def test_c_infinite_drops_second_stream(self):
        z1, z0 = np.array([1.0, 2.0]), np.array([5.0, 6.0])
        out = qte_limit_combine(z1, z0, c=np.inf, gamma1=1.5, g1=2.0, g0=3.0)
        np.testing.assert_allclose(out, z1 / 2.0)

    def test_unit_coefficients_difference(self):
        z1, z0 = np.array([1.0, 2.0]), np.array([0.5, 1.5])
        out = qte_limit_combine(z1, z0, c=1.0, gamma1=1.5, g1=1.0, g0=1.0)
        np.testing.assert_allclose(out, z1 - z0)

    def test_rho_zero_intermediate(self):
        z1, z0 = np.array([1.0, 2.0]), np.array([5.0, 6.0])
        out = qte_limit_combine(z1, z0, c=2.0, gamma1=1.5, rho=0.0, regime="intermediate")
        np.testing.assert_allclose(out, z1)

    def test_invalid_balance_constant(self):
        with pytest.raises(InvalidBalanceConstant):
            qte_limit_combine([1.0], [1.0], c=0.0, gamma1=1.5)

    def test_fixed_scaling(self):
        z1, z0 = np.array([4.0]), np.array([9.0])
        out = qte_limit_combine(z1, z0, c=16.0, gamma1=2.0 - 1e-9, g1=2.0, g0=3.0)
        assert out[0] == pytest.approx(4.0 / 2.0 - 16.0**-0.5 * 9.0 / 3.0)
