import numpy as np
import pytest
from scipy import stats

from swg.sampling import (BoundsVec, RngStream, sample_inverse_gamma, sample_mvn,
                          sample_t_process, sample_truncated_mvn_gibbs,
                          truncated_normal)


def make_rng(seed=0):
    return RngStream(seed).generator()


class TestRngStream:
    def test_bit_exact_reproducibility(self):
        a = RngStream(42, 3).generator().standard_normal(1000)
        b = RngStream(42, 3).generator().standard_normal(1000)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        a = RngStream(42, 0).generator().standard_normal(10)
        b = RngStream(42, 1).generator().standard_normal(10)
        assert not np.allclose(a, b)

    def test_children_distinct(self):
        base = RngStream(7, 2)
        kids = {base.child(k) for k in range(10)}
        assert len(kids) == 10


class TestSampleMvn:
    def test_standard_normal_moments(self):
        rng = make_rng(1)
        draws = np.array([sample_mvn(np.zeros(1), np.eye(1), rng)[0]
                          for _ in range(100_000)])
        assert abs(draws.mean()) < 0.02
        assert abs(draws.var() - 1.0) < 0.03

    def test_zero_factor_returns_mean(self):
        rng = make_rng(2)
        mean = np.array([3.0, -1.0])
        np.testing.assert_array_equal(sample_mvn(mean, np.zeros((2, 2)), rng), mean)

    def test_correlation_recovered(self):
        rng = make_rng(3)
        cov = np.array([[1.0, 0.8], [0.8, 1.0]])
        chol = np.linalg.cholesky(cov)
        draws = np.array([sample_mvn(np.zeros(2), chol, rng) for _ in range(100_000)])
        assert abs(np.corrcoef(draws.T)[0, 1] - 0.8) < 0.02

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            sample_mvn(np.zeros(3), np.eye(2), make_rng(0))


class TestTruncatedNormal:
    def test_half_normal_mean(self):
        rng = make_rng(4)
        x = truncated_normal(np.zeros(100_000), 1.0, 0.0, np.inf, rng)
        assert np.all(x > 0)
        assert abs(x.mean() - np.sqrt(2 / np.pi)) < 0.01

    def test_untruncated_matches_normal(self):
        rng = make_rng(5)
        x = truncated_normal(np.zeros(10_000), 1.0, -np.inf, np.inf, rng)
        assert stats.kstest(x, "norm").pvalue > 0.01

    def test_far_tail_region(self):
        # beyond the 6-sd switch the rejection path must stay in bounds and
        # match the analytic conditional tail mean E[Z | Z > a] = phi(a)/Phi(-a)
        rng = make_rng(6)
        a = 8.0
        x = truncated_normal(np.zeros(20_000), 1.0, a, np.inf, rng)
        assert np.all(x >= a)
        expected = stats.norm.pdf(a) / stats.norm.sf(a)
        assert abs(x.mean() - expected) < 0.01

    def test_mirrored_tail(self):
        rng = make_rng(7)
        x = truncated_normal(np.zeros(5_000), 1.0, -np.inf, -7.5, rng)
        assert np.all(x <= -7.5)

    def test_two_sided_interval(self):
        rng = make_rng(8)
        x = truncated_normal(np.full(50_000, 1.0), 2.0, 0.5, 2.5, rng)
        assert np.all((x > 0.5) & (x < 2.5))
        a, b = (0.5 - 1.0) / 2.0, (2.5 - 1.0) / 2.0
        expected = 1.0 + 2.0 * stats.truncnorm.mean(a, b)
        assert abs(x.mean() - expected) < 0.01


class TestTruncatedMvnGibbs:
    def test_half_normal_univariate(self):
        rng = make_rng(9)
        bounds = BoundsVec(np.array([0.0]), np.array([np.inf]))
        draws = np.empty(100_000)
        x = np.array([0.5])
        for i in range(draws.size):
            x = sample_truncated_mvn_gibbs(x, np.zeros(1), np.eye(1), bounds, 1, rng)
            draws[i] = x[0]
        assert abs(draws.mean() - np.sqrt(2 / np.pi)) < 0.01

    def test_unbounded_matches_mvn_margins(self):
        rng = make_rng(10)
        cov = np.array([[1.0, 0.5], [0.5, 2.0]])
        prec = np.linalg.inv(cov)
        bounds = BoundsVec(np.full(2, -np.inf), np.full(2, np.inf))
        x = np.zeros(2)
        draws = np.empty((10_000, 2))
        for i in range(draws.shape[0]):
            x = sample_truncated_mvn_gibbs(x, np.array([1.0, -1.0]), prec, bounds,
                                           2, rng)
            draws[i] = x
        assert stats.kstest(draws[:, 0], "norm", args=(1.0, 1.0)).pvalue > 0.01
        assert stats.kstest(draws[:, 1], "norm", args=(-1.0, np.sqrt(2.0))).pvalue > 0.01

    def test_positive_orthant_against_rejection_oracle(self):
        # moments of the Gibbs chain vs exact rejection sampling, and the raw
        # orthant probability vs the oracle acceptance rate
        rng = make_rng(11)
        cov = np.array([[1.0, 0.9], [0.9, 1.0]])
        prec = np.linalg.inv(cov)
        chol = np.linalg.cholesky(cov)

        raw = rng.standard_normal((200_000, 2)) @ chol.T
        inside = raw[(raw > 0).all(axis=1)]
        accept_rate = inside.shape[0] / raw.shape[0]

        bounds = BoundsVec(np.zeros(2), np.full(2, np.inf))
        x = np.array([0.5, 0.5])
        draws = np.empty((60_000, 2))
        for i in range(draws.shape[0]):
            x = sample_truncated_mvn_gibbs(x, np.zeros(2), prec, bounds, 1, rng)
            draws[i] = x
        # orthant probability of the raw MVN for this matrix is arcsin-known:
        p_orthant = 0.25 + np.arcsin(0.9) / (2 * np.pi)
        assert abs(accept_rate - p_orthant) < 0.01
        np.testing.assert_allclose(draws.mean(axis=0), inside.mean(axis=0), atol=0.02)
        np.testing.assert_allclose(draws.std(axis=0), inside.std(axis=0), atol=0.02)

    def test_sweep_preserves_truncated_target(self):
        # start from exact truncated samples (rejection); one sweep must leave
        # first/second moments unchanged within Monte Carlo error
        rng = make_rng(12)
        cov = np.array([[1.0, 0.6, 0.3], [0.6, 1.0, 0.5], [0.3, 0.5, 1.0]])
        prec = np.linalg.inv(cov)
        chol = np.linalg.cholesky(cov)
        raw = rng.standard_normal((400_000, 3)) @ chol.T
        exact = raw[(raw[:, 0] > 0) & (raw[:, 1] < 0) & (raw[:, 2] > 0)][:20_000]
        bounds = BoundsVec(np.array([0.0, -np.inf, 0.0]), np.array([np.inf, 0.0, np.inf]))
        moved = np.array([
            sample_truncated_mvn_gibbs(row, np.zeros(3), prec, bounds, 1, rng)
            for row in exact])
        np.testing.assert_allclose(moved.mean(axis=0), exact.mean(axis=0), atol=0.025)
        np.testing.assert_allclose(np.cov(moved.T), np.cov(exact.T), atol=0.035)

    def test_infeasible_start_rejected(self):
        bounds = BoundsVec(np.zeros(2), np.full(2, np.inf))
        with pytest.raises(ValueError, match="violates"):
            sample_truncated_mvn_gibbs(np.array([-1.0, 1.0]), np.zeros(2), np.eye(2),
                                       bounds, 1, make_rng(0))

    def test_bounds_from_occurrence(self):
        b = BoundsVec.from_occurrence(np.array([1, 0, 1]), np.array([False, False, True]))
        np.testing.assert_array_equal(b.lower, [0.0, -np.inf, -np.inf])
        np.testing.assert_array_equal(b.upper, [np.inf, 0.0, np.inf])
        with pytest.raises(ValueError):
            BoundsVec(np.array([1.0]), np.array([0.0]))


class TestInverseGamma:
    def test_mean(self):
        rng = make_rng(13)
        x = sample_inverse_gamma(3.0, 4.0, rng, size=100_000)
        assert abs(x.mean() - 2.0) < 0.05

    def test_variance(self):
        # var = b^2 / ((a-1)^2 (a-2)) = 4; the 4th moment of IG(3, .) is
        # infinite so the sample variance is heavy-tailed: fixed seed
        rng = make_rng(19)
        x = sample_inverse_gamma(3.0, 4.0, rng, size=100_000)
        assert abs(x.var() - 4.0) < 0.3

    def test_reciprocal_is_gamma(self):
        rng = make_rng(15)
        x = sample_inverse_gamma(3.0, 4.0, rng, size=10_000)
        assert stats.kstest(1.0 / x, "gamma", args=(3.0, 0.0, 1.0 / 4.0)).pvalue > 0.01

    def test_rejects_bad_params(self):
        with pytest.raises(ValueError):
            sample_inverse_gamma(0.0, 1.0, make_rng(0))
        with pytest.raises(ValueError):
            sample_inverse_gamma(1.0, -1.0, make_rng(0))


class TestTProcess:
    def test_gaussian_limit(self):
        rng = make_rng(16)
        draws = np.array([sample_t_process(np.zeros(1), 1.0, 1e6, np.eye(1), rng)[0]
                          for _ in range(100_000)])
        assert abs(draws.var() - 1.0) < 0.03

    def test_heavy_tail_variance(self):
        # marginal variance of a t with a=4, b=1 is a*b/(a-2) = 2
        rng = make_rng(17)
        draws = np.array([sample_t_process(np.zeros(1), 1.0, 4.0, np.eye(1), rng)[0]
                          for _ in range(200_000)])
        assert abs(draws.var() - 2.0) < 0.1

    def test_tiny_scale_collapses_to_location(self):
        rng = make_rng(18)
        loc = np.array([2.0, -3.0])
        draw = sample_t_process(loc, 1e-12, 50.0, np.eye(2), rng)
        np.testing.assert_allclose(draw, loc, atol=1e-5)

    def test_marginal_is_student_t(self):
        rng = make_rng(19)
        draws = np.array([sample_t_process(np.zeros(1), 1.0, 5.0, np.eye(1), rng)[0]
                          for _ in range(20_000)])
        assert stats.kstest(draws, "t", args=(5.0,)).pvalue > 0.01
