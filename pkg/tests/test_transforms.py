import numpy as np
import pytest

from swg.transforms import (MixtureLogit, mixture_probabilities, softmax_rows,
                            softplus_fwd, softplus_inv)


class TestSoftplus:
    def test_inverse_of_log_two_is_zero(self):
        assert softplus_inv(np.log(2.0)) == pytest.approx(0.0, abs=1e-15)

    def test_large_values_pass_through(self):
        # moderate-to-large values are effectively unchanged by the transform
        assert softplus_inv(50.0) == pytest.approx(50.0, rel=1e-12)
        assert softplus_fwd(50.0) == pytest.approx(50.0, rel=1e-12)

    def test_round_trip_spot_values(self):
        for y in (1e-6, 1.0, 1e3):
            assert softplus_fwd(softplus_inv(y)) == pytest.approx(y, rel=1e-12)

    def test_round_trip_log_spaced(self):
        y = np.logspace(-8, 8, 200)
        back = softplus_fwd(softplus_inv(y))
        assert np.max(np.abs(back - y) / y) < 1e-10

    def test_extreme_arguments_stable(self):
        assert np.isfinite(softplus_fwd(700.0))
        assert softplus_fwd(-700.0) > 0.0
        assert np.isfinite(softplus_inv(700.0))

    def test_strictly_increasing(self):
        x = np.linspace(-30, 30, 500)
        assert np.all(np.diff(softplus_fwd(x)) > 0)
        y = np.logspace(-6, 3, 500)
        assert np.all(np.diff(softplus_inv(y)) > 0)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            softplus_inv(0.0)
        with pytest.raises(ValueError):
            softplus_inv(-1.0)


class TestMixtureProbabilities:
    def test_zero_loadings_give_uniform(self):
        rng = np.random.default_rng(0)
        logit = MixtureLogit(np.zeros((3, 4)), rng.standard_normal((6, 4)))
        pis = mixture_probabilities(logit)
        np.testing.assert_allclose(pis, 0.25, atol=1e-15)

    def test_two_class_analytic(self):
        # eta = (log 2, 0) -> (2/3, 1/3)
        logit = MixtureLogit(np.array([[np.log(2.0)]]), np.array([[1.0]]))
        pi = mixture_probabilities(logit, 0)
        np.testing.assert_allclose(pi, [2.0 / 3.0, 1.0 / 3.0], atol=1e-15)

    def test_matches_extended_precision_softmax(self):
        # direct normalized-exponential computation in float128
        rng = np.random.default_rng(1)
        eta = rng.uniform(-5, 5, (10, 3))
        got = softmax_rows(eta)
        eta_hp = eta.astype(np.longdouble)
        expected = np.exp(eta_hp) / np.exp(eta_hp).sum(axis=1, keepdims=True)
        np.testing.assert_allclose(got, expected.astype(float), atol=1e-14)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        logit = MixtureLogit(rng.standard_normal((4, 6)), rng.standard_normal((50, 6)))
        pis = mixture_probabilities(logit)
        assert np.all(pis > 0)
        np.testing.assert_allclose(pis.sum(axis=1), 1.0, atol=1e-12)

    def test_shift_invariance_exact(self):
        # eta -> eta + c per row leaves the probabilities unchanged
        rng = np.random.default_rng(3)
        eta = rng.standard_normal((8, 5))
        shifted = eta + rng.uniform(-700, 700, (8, 1))
        np.testing.assert_array_equal(softmax_rows(eta), softmax_rows(eta))
        np.testing.assert_allclose(softmax_rows(shifted), softmax_rows(eta), atol=1e-12)

    def test_overflow_safe(self):
        pis = softmax_rows(np.array([[1e4, 1e4 - 5.0]]))
        assert np.all(np.isfinite(pis))
        np.testing.assert_allclose(pis.sum(), 1.0)

    def test_rejects_nonfinite_covariates(self):
        with pytest.raises(ValueError):
            MixtureLogit(np.zeros((1, 2)), np.array([[np.inf, 0.0]]))

    def test_linear_predictor_pins_last_class(self):
        rng = np.random.default_rng(4)
        logit = MixtureLogit(rng.standard_normal((2, 3)), rng.standard_normal((5, 3)))
        eta = logit.linear_predictor()
        np.testing.assert_array_equal(eta[:, -1], 0.0)
        assert logit.n_classes == 3
