import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from kasolve.errors import NotSymmetric
from kasolve.model import (
    NOISELESS_WEIGHT,
    GaussianPrior,
    LinearModel,
    NoiseModel,
    WeightScheme,
    calibrate_noise,
    convolution_matrix,
    convolution_rows,
    expected_signal_energy,
    generate_random_model,
    observe,
    prior_is_consistent,
    sample_parameter,
    trial_seed,
    uniform_weights,
)


class TestLinearModel:
    def test_dimensions_and_rows(self):
        model = LinearModel(np.arange(1.0, 7.0).reshape(3, 2))
        assert (model.m, model.p) == (3, 2)
        assert_array_equal(model.row(1), [3.0, 4.0])
        assert_allclose(model.row_norms_sq(), [5.0, 25.0, 61.0])

    def test_zero_row_rejected(self):
        with pytest.raises(ValueError, match="all-zero rows"):
            LinearModel(np.array([[1.0, 2.0], [0.0, 0.0]]))

    def test_matrix_is_read_only(self):
        model = generate_random_model(4, 2, seed=0)
        with pytest.raises(ValueError):
            model.H[0, 0] = 1.0

    def test_random_model_is_seeded(self):
        a = generate_random_model(5, 3, seed=7)
        b = generate_random_model(5, 3, seed=7)
        assert_array_equal(a.H, b.H)
        assert np.all((a.H >= 0.0) & (a.H < 1.0))


class TestGaussianPrior:
    def test_isotropic(self):
        prior = GaussianPrior.isotropic(5, 0.1)
        assert_allclose(prior.cov_inv, 10.0 * np.eye(5))
        assert_allclose(prior.lambda1_inv, 10.0, rtol=1e-12)
        assert prior.cov_inv_diag is not None
        assert_allclose(prior.prior_gradient(np.ones(5)), 10.0 * np.ones(5))

    def test_full_covariance(self):
        cov = np.array([[2.0, 0.5], [0.5, 1.0]])
        prior = GaussianPrior.from_covariance([1.0, -1.0], cov)
        assert prior.cov_inv_diag is None
        theta = np.array([0.3, 0.7])
        assert_allclose(prior.prior_gradient(theta), np.linalg.solve(cov, theta - prior.mean))
        assert_allclose(prior.lambda1_inv, np.linalg.eigvalsh(np.linalg.inv(cov))[-1], rtol=1e-9)
        assert prior_is_consistent(prior)

    def test_asymmetric_covariance_rejected(self):
        with pytest.raises(NotSymmetric):
            GaussianPrior.from_covariance([0.0, 0.0], [[1.0, 0.2], [0.0, 1.0]])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            GaussianPrior.from_covariance([0.0, 0.0, 0.0], np.eye(2))

    def test_repair(self):
        prior = GaussianPrior.from_covariance([0.0, 0.0], [[1.0, 1.05], [1.05, 1.0]], repair=True)
        assert prior_is_consistent(prior)

    def test_zero_dimensional_mean(self):
        prior = GaussianPrior.isotropic(3, 0.1, mean=np.array(0.5))
        assert_array_equal(prior.mean, np.full(3, 0.5))

    def test_non_positive_scale(self):
        with pytest.raises(ValueError):
            GaussianPrior.isotropic(3, 0.0)

    def test_samples_follow_the_prior(self):
        prior = GaussianPrior.isotropic(3, 0.1, mean=0.5)
        rng = np.random.default_rng(11)
        draws = np.array([sample_parameter(prior, rng) for _ in range(20000)])
        assert_allclose(draws.mean(axis=0), 0.5, atol=0.02)
        assert_allclose(draws.var(axis=0), 0.1, rtol=0.05)


class TestNoiseAndWeights:
    def test_weights_are_inverse_variances(self):
        noise = NoiseModel.from_variances([0.5, 2.0])
        assert_allclose(noise.weights, [2.0, 0.5])
        assert not noise.is_noiseless

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError):
            NoiseModel.from_variances([1.0, 0.0])

    def test_noiseless_weights_dominate(self):
        noise = NoiseModel.noiseless(3)
        assert noise.is_noiseless
        assert_array_equal(noise.weights, np.full(3, NOISELESS_WEIGHT))

    def test_uniform_weights(self):
        weights = uniform_weights(4)
        assert_allclose(weights.a, 0.25)

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            WeightScheme(np.array([0.5, 0.6]))

    def test_weights_must_be_positive(self):
        with pytest.raises(ValueError):
            WeightScheme(np.array([1.5, -0.5]))


class TestCalibration:
    def test_variance_from_snr(self):
        model = generate_random_model(20, 4, seed=3)
        prior = GaussianPrior.isotropic(4, 0.1, mean=0.2)
        energy = np.trace(model.H.T @ model.H @ (0.1 * np.eye(4) + 0.04 * np.ones((4, 4))))
        assert_allclose(expected_signal_energy(model, prior), energy, rtol=1e-12)
        noise = calibrate_noise(model, prior, 10.0)
        assert_allclose(noise.variances, energy / (20 * 10.0), rtol=1e-12)

    def test_zero_db(self):
        model = generate_random_model(10, 2, seed=4)
        prior = GaussianPrior.isotropic(2, 1.0)
        noise = calibrate_noise(model, prior, 0.0)
        assert_allclose(noise.variances * model.m, expected_signal_energy(model, prior))

    def test_infinite_snr_is_noiseless(self):
        model = generate_random_model(10, 2, seed=4)
        noise = calibrate_noise(model, GaussianPrior.isotropic(2, 1.0), math.inf)
        assert noise.is_noiseless

    @pytest.mark.parametrize("snr_db", [math.nan, -math.inf])
    def test_invalid_snr(self, snr_db):
        model = generate_random_model(10, 2, seed=4)
        with pytest.raises(ValueError):
            calibrate_noise(model, GaussianPrior.isotropic(2, 1.0), snr_db)

    def test_noiseless_observation_is_exact(self):
        model = generate_random_model(6, 3, seed=5)
        theta = np.array([1.0, -2.0, 0.5])
        observation = observe(model, theta, NoiseModel.noiseless(6), seed=1)
        assert_allclose(observation.y, model.H @ theta)
        assert_array_equal(observation.theta_true, theta)

    def test_empirical_snr_matches_target(self):
        model = generate_random_model(50, 5, seed=6)
        prior = GaussianPrior.isotropic(5, 0.1)
        noise = calibrate_noise(model, prior, 3.0)
        rng = np.random.default_rng(7)
        signal = noise_power = 0.0
        for _ in range(40_000):
            theta = sample_parameter(prior, rng)
            clean = model.H @ theta
            observation = observe(model, theta, noise, rng)
            signal += clean @ clean
            noise_power += np.sum((observation.y - clean) ** 2)
        assert signal / noise_power == pytest.approx(10.0 ** 0.3, rel=0.05)


class TestSeeds:
    def test_same_key_same_stream(self):
        a = np.random.default_rng(trial_seed(42, 0, 3)).random(4)
        b = np.random.default_rng(trial_seed(42, 0, 3)).random(4)
        assert_array_equal(a, b)

    def test_neighbouring_trials_differ(self):
        a = np.random.default_rng(trial_seed(42, 0, 3)).random(4)
        b = np.random.default_rng(trial_seed(42, 0, 4)).random(4)
        assert not np.allclose(a, b)

    def test_key_is_not_padded_into_the_master_seed(self):
        a = np.random.default_rng(trial_seed(42, 0)).random(4)
        b = np.random.default_rng(trial_seed(42)).random(4)
        assert not np.allclose(a, b)


class TestConvolution:
    def test_zero_prehistory(self):
        assert_array_equal(convolution_matrix([1.0, 2.0, 3.0], 2), [[1.0, 0.0], [2.0, 1.0], [3.0, 2.0]])

    def test_rows_are_lazy(self):
        rows = convolution_rows(np.arange(1.0, 6.0), 3)
        assert_array_equal(next(rows), [1.0, 0.0, 0.0])
        assert_array_equal(next(rows), [2.0, 1.0, 0.0])

    def test_filter_output(self):
        x = np.random.default_rng(0).standard_normal(30)
        taps = np.array([0.5, -0.25, 0.125])
        assert_allclose(convolution_matrix(x, 3) @ taps, np.convolve(x, taps)[:30])
