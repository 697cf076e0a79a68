import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize, stats
from scipy.integrate import trapezoid

from pcnarx.benchmarks.campaign import GM_CORRELATION, ground_motion_marginals, quarter_car_input_model
from pcnarx.probspace import (
    DomainError,
    InputModel,
    Marginal,
    from_standard,
    independent,
    lhs_unit,
    marginal_quantile,
    sample_lhs,
    to_standard,
)

ALL_MARGINALS = [
    Marginal.gaussian(2000.0, 200.0),
    Marginal.uniform(0.09, 0.11),
    Marginal.lognormal(0.0468, 0.164),
    Marginal.beta(17.3, 9.31, 5.0, 45.0),
    Marginal.gamma(5.87, 3.11),
    Marginal.two_sided_exponential(-0.089, 0.185, -2.0, 0.5),
]


class TestMarginalQuantile:
    def test_uniform_midpoint(self):
        assert marginal_quantile(Marginal.uniform(0.09, 0.11), 0.5) == pytest.approx(0.10, abs=1e-15)

    def test_gaussian_median(self):
        assert marginal_quantile(Marginal.gaussian(2000.0, 200.0), 0.5) == pytest.approx(2000.0, rel=1e-14)

    def test_lognormal_median_against_cdf_inversion(self):
        m = Marginal.lognormal(0.0468, 0.164)
        # moment-matched underlying normal: median = exp(mu)
        s2 = math.log(1 + (0.164 / 0.0468) ** 2)
        median = math.exp(math.log(0.0468) - s2 / 2)
        assert median == pytest.approx(0.012842, abs=5e-7)
        # independent oracle: invert the CDF numerically
        root = optimize.brentq(lambda x: m.cdf(x) - 0.5, 1e-6, 1.0, xtol=1e-15)
        assert marginal_quantile(m, 0.5) == pytest.approx(root, rel=1e-9)

    @pytest.mark.parametrize("u", [0.0, 1.0, -0.1, 1.5, np.nan])
    def test_outside_open_interval_raises(self, u):
        with pytest.raises(DomainError):
            marginal_quantile(Marginal.gaussian(0.0, 1.0), u)

    @pytest.mark.parametrize("m", ALL_MARGINALS, ids=lambda m: m.kind)
    def test_strictly_increasing(self, m):
        q = m.quantile(np.linspace(0.001, 0.999, 200))
        assert np.all(np.diff(q) > 0)

    @pytest.mark.parametrize("m", ALL_MARGINALS, ids=lambda m: m.kind)
    def test_quantile_cdf_roundtrip(self, m, rng):
        u = rng.uniform(1e-6, 1 - 1e-6, 1000)
        assert np.max(np.abs(m.cdf(m.quantile(u)) - u)) < 1e-10

    @pytest.mark.parametrize("m", ALL_MARGINALS[:5], ids=lambda m: m.kind)
    def test_moments_match_stated_values(self, m):
        if m.kind == "uniform":
            assert m._dist.mean() == pytest.approx(0.10, rel=1e-14)
            return
        assert m._dist.mean() == pytest.approx(m.params["mean"], rel=1e-12)
        assert m._dist.std() == pytest.approx(m.params["std"], rel=1e-12)


class TestMarginalValidation:
    def test_nonpositive_std(self):
        with pytest.raises(ValueError):
            Marginal.gaussian(0.0, 0.0)

    def test_mean_outside_support(self):
        with pytest.raises(ValueError):
            Marginal.beta(50.0, 1.0, 5.0, 45.0)

    def test_empty_support(self):
        with pytest.raises(ValueError):
            Marginal.uniform(1.0, 1.0)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            Marginal("cauchy", {"mean": 0, "std": 1})

    def test_truncated_laplace_moments(self):
        m = Marginal.two_sided_exponential(-0.089, 0.185, -2.0, 0.5)
        x = np.linspace(-2.0, 0.5, 400001)
        pdf = m.pdf(x)
        mean = trapezoid(x * pdf, x)
        assert trapezoid(pdf, x) == pytest.approx(1.0, abs=1e-6)
        assert mean == pytest.approx(-0.089, abs=1e-5)
        assert math.sqrt(trapezoid((x - mean) ** 2 * pdf, x)) == pytest.approx(0.185, abs=1e-5)
        assert m.pdf(np.array([-2.1, 0.6])).tolist() == [0.0, 0.0]


class TestInputModel:
    def test_rejects_non_positive_definite(self):
        with pytest.raises(ValueError):
            InputModel((Marginal.gaussian(0, 1),) * 2, [[1.0, 1.2], [1.2, 1.0]])

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            InputModel((Marginal.gaussian(0, 1),) * 2, [[1.0, 0.2], [0.3, 1.0]])

    def test_independent_flag(self):
        assert independent([Marginal.gaussian(0, 1)] * 3).independent
        im = InputModel((Marginal.gaussian(0, 1),) * 2, [[1.0, 0.5], [0.5, 1.0]])
        assert not im.independent

    def test_cholesky_2x2(self):
        im = InputModel((Marginal.gaussian(0, 1),) * 2, [[1.0, 0.5], [0.5, 1.0]])
        np.testing.assert_allclose(im.cholesky, [[1.0, 0.0], [0.5, math.sqrt(0.75)]], atol=1e-15)

    def test_identity_case_is_componentwise(self):
        im = independent([Marginal.uniform(0.0, 2.0), Marginal.gamma(5.87, 3.11)])
        xi = np.array([0.3, 4.0])
        expected = stats.norm.ppf([im.marginals[0].cdf(0.3), im.marginals[1].cdf(4.0)])
        np.testing.assert_allclose(to_standard(im, xi), expected, rtol=1e-14)

    def test_origin_maps_to_medians(self):
        im = independent([Marginal.gaussian(3.0, 2.0), Marginal.uniform(-1.0, 5.0)])
        np.testing.assert_allclose(from_standard(im, np.zeros(2)), [3.0, 2.0], atol=1e-14)

    def test_roundtrip_correlated(self, rng):
        im = InputModel(tuple(ground_motion_marginals()), GM_CORRELATION)
        X = im.sample_random(100, rng)
        assert np.max(np.abs(im.from_standard(im.to_standard(X)) - X)) < 1e-8

    def test_support_violation(self):
        im = quarter_car_input_model()
        xi = np.array([2000, 2000, 20, 40, 600, 0.2, 6.28])
        with pytest.raises(DomainError):
            im.to_standard(xi)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            quarter_car_input_model().to_standard(np.zeros(3))

    def test_rank_correlation_reproduces_copula(self):
        im = InputModel(tuple(ground_motion_marginals()), GM_CORRELATION)
        X = im.sample_random(100_000, np.random.default_rng(5))
        rho_s = stats.spearmanr(X).correlation
        # Spearman of a Gaussian copula: (6/pi) asin(R/2)
        expected = 6 / np.pi * np.arcsin(GM_CORRELATION / 2)
        assert np.max(np.abs(rho_s - expected)) < 0.02
        # and the stated matrix itself within the +-0.02 band on the Gaussian scale
        Z = stats.norm.ppf(stats.rankdata(X, axis=0) / (X.shape[0] + 1))
        assert np.max(np.abs(np.corrcoef(Z.T) - GM_CORRELATION)) < 0.02

    def test_identity_copula_matches_independent_marginals(self):
        im = independent(ALL_MARGINALS)
        X = im.sample_random(10_000, np.random.default_rng(12))
        ref = np.random.default_rng(13)
        for j, m in enumerate(ALL_MARGINALS):
            direct = m.quantile(ref.uniform(size=10_000))
            assert stats.ks_2samp(X[:, j], direct).pvalue > 0.01

    def test_json_roundtrip(self):
        im = InputModel(tuple(ground_motion_marginals()), GM_CORRELATION)
        back = InputModel.from_json(im.to_json())
        xi = im.sample_random(5, np.random.default_rng(1))
        np.testing.assert_array_equal(back.to_standard(xi), im.to_standard(xi))
        assert back.names == im.names

    def test_json_from_file(self, tmp_path):
        im = quarter_car_input_model()
        im.to_json(tmp_path / "im.json")
        assert InputModel.from_json(tmp_path / "im.json").dim == 7


class TestLatinHypercube:
    def test_four_strata(self):
        X = sample_lhs(independent([Marginal.uniform(0.0, 1.0)]), 4, 3)
        assert sorted(np.floor(X[:, 0] * 4).astype(int).tolist()) == [0, 1, 2, 3]

    def test_single_sample_inside_support(self):
        im = quarter_car_input_model()
        X = sample_lhs(im, 1, 0)
        assert X.shape == (1, 7)
        im.to_standard(X)

    def test_zero_size_raises(self):
        with pytest.raises(ValueError):
            sample_lhs(quarter_car_input_model(), 0, 0)

    def test_quarter_car_design_stratified(self):
        im = quarter_car_input_model()
        X = sample_lhs(im, 100, 42)
        assert X.shape == (100, 7)
        P = stats.norm.cdf(im.to_standard(X))
        for j in range(7):
            assert sorted(np.floor(P[:, j] * 100).astype(int).tolist()) == list(range(100))

    def test_deterministic(self):
        im = quarter_car_input_model()
        np.testing.assert_array_equal(sample_lhs(im, 10, 9), sample_lhs(im, 10, 9))

    @given(n=st.integers(1, 200), dim=st.integers(1, 6), seed=st.integers(0, 2**32 - 1))
    def test_one_point_per_stratum(self, n, dim, seed):
        U = lhs_unit(n, dim, np.random.default_rng(seed))
        for j in range(dim):
            assert np.array_equal(np.sort(np.floor(U[:, j] * n).astype(int)), np.arange(n))


@given(
    rho=st.floats(-0.9, 0.9),
    u=st.lists(st.floats(-6, 6), min_size=2, max_size=2),
)
def test_standard_roundtrip_property(rho, u):
    im = InputModel((Marginal.gamma(5.87, 3.11), Marginal.uniform(-2.0, 3.0)), [[1, rho], [rho, 1]])
    u = np.array(u)
    x = im.from_standard(u)
    assert np.allclose(im.from_standard(im.to_standard(x)), x, rtol=1e-8, atol=1e-10)
