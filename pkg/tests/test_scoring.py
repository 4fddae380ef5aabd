import numpy as np
import pytest
from scipy.special import ndtr

from swg.scoring import (ChiEstimate, EnsembleForecast, IndicatorWeight,
                         SmoothWeight, chi_u_empirical, f_madogram,
                         posterior_summaries, score_table, twcrps, twcrps_single)


def brute_force_twcrps(members, y, weight_fn, lo, hi, knots=(), n_per_seg=20_001):
    """Midpoint-rule integration of (F_hat - 1{y<=x})^2 w(x).

    The integrand jumps at ensemble members, the observation, and any weight
    threshold, so those points bound the integration segments; inside a
    segment a fine midpoint rule is exact for steps and O(h^2) otherwise.
    """
    x_sorted = np.sort(members)
    edges = np.unique(np.concatenate([x_sorted, [y, lo, hi], list(knots)]))
    edges = edges[(edges >= lo) & (edges <= hi)]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        xs = np.linspace(a, b, n_per_seg + 1)
        mid = 0.5 * (xs[:-1] + xs[1:])
        fhat = np.searchsorted(x_sorted, mid, side="right") / x_sorted.size
        integrand = (fhat - (y <= mid)) ** 2 * weight_fn(mid)
        total += integrand.mean() * (b - a)
    return total


class TestTwcrps:
    def test_degenerate_perfect_forecast(self):
        for weight in (IndicatorWeight(-np.inf), IndicatorWeight(1.0),
                       SmoothWeight(0.5, 1.0)):
            assert twcrps_single([2.0, 2.0, 2.0], 2.0, weight) == 0.0

    def test_two_member_example_against_brute_force(self):
        # ensemble {0, 2}, obs 1, w == 1: two unit intervals at 0.5^2 each
        got = twcrps_single([0.0, 2.0], 1.0, IndicatorWeight(-np.inf))
        oracle = brute_force_twcrps(np.array([0.0, 2.0]), 1.0,
                                    lambda x: np.ones_like(x), -1.0, 3.0)
        assert got == pytest.approx(oracle, abs=1e-6)
        assert got == pytest.approx(0.5, abs=1e-12)

    def test_matches_closed_form_crps(self):
        # independent identity: CRPS = E|X-y| - E|X-X'|/2 over the ensemble
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = rng.normal(size=rng.integers(2, 12))
            y = rng.normal()
            crps = (np.mean(np.abs(x - y))
                    - 0.5 * np.mean(np.abs(x[:, None] - x[None, :])))
            assert twcrps_single(x, y, IndicatorWeight(-np.inf)) == pytest.approx(
                crps, abs=1e-12)

    def test_brute_force_oracle_random_ensembles(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            x = rng.normal(scale=2.0, size=rng.integers(2, 9))
            y = rng.normal(scale=2.0)
            got = twcrps_single(x, y, IndicatorWeight(-np.inf))
            lo = min(x.min(), y) - 1.0
            hi = max(x.max(), y) + 1.0
            oracle = brute_force_twcrps(x, y, lambda v: np.ones_like(v), lo, hi)
            assert got == pytest.approx(oracle, abs=1e-6)

    def test_indicator_weight_against_brute_force(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            x = rng.normal(size=6)
            y = rng.normal()
            q = rng.normal()
            got = twcrps_single(x, y, IndicatorWeight(q))
            lo = min(x.min(), y, q) - 1.0
            hi = max(x.max(), y, q) + 1.0
            oracle = brute_force_twcrps(x, y, lambda v: (v >= q).astype(float),
                                        lo, hi, knots=[q])
            assert got == pytest.approx(oracle, abs=1e-6)

    def test_smooth_weight_against_brute_force(self):
        rng = np.random.default_rng(3)
        for _ in range(15):
            x = rng.normal(size=5)
            y = rng.normal()
            q, s = rng.normal(), rng.uniform(0.5, 2.0)
            got = twcrps_single(x, y, SmoothWeight(q, s))
            lo = min(x.min(), y) - 1.0
            hi = max(x.max(), y) + 1.0
            oracle = brute_force_twcrps(x, y, lambda v: ndtr((v - q) / s), lo, hi)
            assert got == pytest.approx(oracle, abs=2e-6)

    def test_translation_invariance_above_threshold(self):
        # shifting members and observation above q by a common constant
        # leaves the indicator-weight score unchanged
        x = np.array([3.0, 4.5, 6.0])
        y = 5.0
        q = 2.0
        base = twcrps_single(x, y, IndicatorWeight(q))
        shifted = twcrps_single(x + 7.0, y + 7.0, IndicatorWeight(q))
        assert shifted == pytest.approx(base, abs=1e-12)

    def test_nonnegative(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            x = rng.normal(size=4)
            val = twcrps_single(x, rng.normal(), IndicatorWeight(rng.normal()))
            assert val >= 0.0

    def test_averaging_and_bootstrap(self):
        rng = np.random.default_rng(5)
        fc = EnsembleForecast(rng.normal(size=(40, 8)), rng.normal(size=40))
        score, (lo, hi) = twcrps(fc, IndicatorWeight(-np.inf), n_boot=300, seed=1)
        per_day = [twcrps_single(fc.members[t], fc.observations[t],
                                 IndicatorWeight(-np.inf)) for t in range(40)]
        assert score == pytest.approx(np.mean(per_day))
        assert lo <= score <= hi

    def test_validation(self):
        with pytest.raises(ValueError):
            EnsembleForecast(np.zeros((3, 1)), np.zeros(3))
        with pytest.raises(ValueError):
            EnsembleForecast(np.full((3, 4), np.nan), np.zeros(3))


class TestFMadogram:
    def test_perfect_dependence_zero(self):
        rng = np.random.default_rng(6)
        w = rng.gumbel(size=(500, 1))
        maxima = np.hstack([w, w])  # duplicated station
        dist = np.array([[0.0, 1.0], [1.0, 0.0]])
        res = f_madogram(maxima, dist, [0.5, 1.5], n_boot=50)
        assert res["estimate"][0] == pytest.approx(0.0, abs=1e-12)

    def test_independence_limit(self):
        rng = np.random.default_rng(7)
        maxima = rng.gumbel(size=(10_000, 2))
        dist = np.array([[0.0, 3.0], [3.0, 0.0]])
        res = f_madogram(maxima, dist, [2.0, 4.0], n_boot=50)
        assert res["estimate"][0] == pytest.approx(1.0 / 6.0, abs=0.01)

    def test_gaussian_dependence_against_mc_oracle(self):
        # rank-based estimate vs direct Monte Carlo of the defining
        # expectation with the true margin
        rng = np.random.default_rng(8)
        rho = 0.8
        chol = np.linalg.cholesky([[1.0, rho], [rho, 1.0]])
        b = 100_000
        w = rng.standard_normal((b, 2)) @ chol.T
        oracle_draws = rng.standard_normal((200_000, 2)) @ chol.T
        oracle = 0.5 * np.mean(np.abs(ndtr(oracle_draws[:, 0]) - ndtr(oracle_draws[:, 1])))
        dist = np.array([[0.0, 1.0], [1.0, 0.0]])
        res = f_madogram(w, dist, [0.5, 1.5], n_boot=20)
        assert res["estimate"][0] == pytest.approx(oracle, abs=0.005)

    def test_range_bound_and_empty_bins(self):
        rng = np.random.default_rng(9)
        b = 400
        maxima = rng.gumbel(size=(b, 5))
        dist = np.abs(np.subtract.outer(np.arange(5.0), np.arange(5.0)))
        res = f_madogram(maxima, dist, [0.5, 1.5, 2.5, 10.0, 20.0], n_boot=20)
        valid = ~res["empty"]
        assert res["empty"][-1]  # nothing beyond distance 4
        assert np.all(res["estimate"][valid] >= 0.0)
        assert np.all(res["estimate"][valid] <= 1.0 / 6.0 + 2.0 / b)

    def test_monotone_margin_invariance(self):
        rng = np.random.default_rng(10)
        maxima = rng.gamma(2.0, size=(300, 3)) + 1.0
        dist = np.abs(np.subtract.outer(np.arange(3.0), np.arange(3.0)))
        res1 = f_madogram(maxima, dist, [0.5, 1.5, 2.5], n_boot=10)
        res2 = f_madogram(np.log(maxima), dist, [0.5, 1.5, 2.5], n_boot=10)
        np.testing.assert_array_equal(res1["estimate"], res2["estimate"])


class TestChiU:
    def test_comonotone(self):
        x = np.random.default_rng(11).normal(size=5000)
        for u in (0.5, 0.9, 0.99):
            est = chi_u_empirical(x, x, u)
            assert est.value == pytest.approx(1.0)

    def test_independent_pairs(self):
        rng = np.random.default_rng(12)
        x, y = rng.normal(size=(2, 200_000))
        for u in (0.8, 0.9):
            est = chi_u_empirical(x, y, u)
            assert est.value == pytest.approx(1.0 - u, abs=0.01)

    def test_bivariate_t_against_mc_oracle(self):
        # same-generator Monte Carlo oracle on an independent stream; the
        # t copula stays bounded away from 0 as u -> 1
        def draw_t(rng, n, rho=0.5, dof=4.0):
            chol = np.linalg.cholesky([[1.0, rho], [rho, 1.0]])
            z = rng.standard_normal((n, 2)) @ chol.T
            s = rng.chisquare(dof, size=n) / dof
            return z / np.sqrt(s)[:, None]

        u = 0.99
        sample = draw_t(np.random.default_rng(13), 1_000_000)
        oracle = draw_t(np.random.default_rng(14), 1_000_000)
        est = chi_u_empirical(sample[:, 0], sample[:, 1], u)
        ref = chi_u_empirical(oracle[:, 0], oracle[:, 1], u)
        assert est.value == pytest.approx(ref.value, abs=0.02)
        assert est.value > 0.2
        assert not est.wide_ci

    def test_monotone_margin_invariance(self):
        rng = np.random.default_rng(15)
        x, y = rng.normal(size=(2, 10_000))
        a = chi_u_empirical(x, y, 0.9)
        b = chi_u_empirical(np.exp(x), y ** 3, 0.9)
        assert a.value == b.value

    def test_wide_ci_flag(self):
        rng = np.random.default_rng(16)
        x, y = rng.normal(size=(2, 200))
        est = chi_u_empirical(x, y, 0.95)
        assert isinstance(est, ChiEstimate)
        assert est.wide_ci  # cannot have 20 joint exceedances here

    def test_level_validation(self):
        with pytest.raises(ValueError):
            chi_u_empirical(np.zeros(10), np.zeros(10), 1.5)


class TestPosteriorSummaries:
    def test_identical_iid_chains(self):
        rng = np.random.default_rng(17)
        chains = rng.standard_normal((4, 2000))
        out = posterior_summaries({"x": chains})["x"]
        assert out["rhat"] == pytest.approx(1.0, abs=0.01)
        assert not out["flagged"]
        assert out["ess"] > 2000

    def test_shifted_chain_flagged(self):
        rng = np.random.default_rng(18)
        chains = rng.standard_normal((2, 1000))
        chains[1] += 5.0
        out = posterior_summaries({"x": chains})["x"]
        assert out["rhat"] > 1.5
        assert out["flagged"]

    def test_ar1_ess(self):
        rng = np.random.default_rng(19)
        phi = 0.9
        n = 40_000
        eps = rng.standard_normal(n)
        x = np.empty(n)
        x[0] = eps[0]
        for i in range(1, n):
            x[i] = phi * x[i - 1] + eps[i]
        out = posterior_summaries({"x": x[None, :]})["x"]
        expected = n * (1 - phi) / (1 + phi)
        assert abs(out["ess"] - expected) / expected < 0.3

    def test_single_chain_notice(self):
        out = posterior_summaries({"x": np.random.default_rng(20).normal(size=500)})
        assert out["x"]["rhat"] is None
        assert "single chain" in out["x"]["notice"]

    def test_quantiles_and_mean(self):
        x = np.arange(1001.0)[None, :]
        out = posterior_summaries({"x": x}, quantiles=(0.5,))
        assert out["x"]["mean"] == pytest.approx(500.0)
        assert out["x"]["quantiles"][0.5] == pytest.approx(500.0)


class TestScoreTable:
    def test_layout(self):
        rows = {
            ("in-sample", "w1"): {"analogue": (7.37, (7.28, 7.48)),
                                  "independence": (7.43, (7.35, 7.55))},
            ("out-of-sample", "w2"): {"analogue": (10.7, (10.2, 11.4))},
        }
        text = score_table(rows, ["independence", "analogue"])
        lines = text.strip().split("\n")
        assert lines[0].startswith("mode,weight,independence")
        assert lines[1].startswith("in-sample,w1,7.43")
        assert lines[2].split(",")[2] == ""  # missing cell left empty
