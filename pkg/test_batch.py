import numpy as np
import pytest
from numpy.testing import assert_allclose

from kasolve.batch import (
    cost_J,
    gradient_J,
    ls_bayes_mse,
    ls_estimate,
    map_bayes_mse,
    map_estimate,
    partial_gradient,
    safe_step_width,
    steepest_descent,
)
from kasolve.errors import Diverged, NotPositiveDefinite
from kasolve.model import (
    GaussianPrior,
    LinearModel,
    NoiseModel,
    Observation,
    generate_random_model,
    observe,
    sample_parameter,
    uniform_weights,
)


@pytest.fixture
def problem():
    model = generate_random_model(50, 5, seed=1)
    prior = GaussianPrior.isotropic(5, 0.1, mean=0.2)
    noise = NoiseModel.homoscedastic(50, 0.5)
    theta = sample_parameter(prior, seed=2)
    observation = observe(model, theta, noise, seed=3)
    return model, observation, noise, prior


class TestOracles:
    def test_map_solves_normal_equations(self, problem):
        model, observation, noise, prior = problem
        W = np.diag(noise.weights)
        system = model.H.T @ W @ model.H + prior.cov_inv
        rhs = model.H.T @ W @ observation.y + prior.cov_inv @ prior.mean
        assert_allclose(map_estimate(model, observation, noise, prior), np.linalg.solve(system, rhs), rtol=1e-10)

    def test_gradient_vanishes_at_map(self, problem):
        model, observation, noise, prior = problem
        theta_map = map_estimate(model, observation, noise, prior)
        assert_allclose(gradient_J(theta_map, model, observation, noise, prior), 0.0, atol=1e-9)

    def test_map_minimizes_cost(self, problem):
        model, observation, noise, prior = problem
        theta_map = map_estimate(model, observation, noise, prior)
        best = cost_J(theta_map, model, observation, noise, prior).total
        for direction in np.eye(5):
            assert cost_J(theta_map + 0.01 * direction, model, observation, noise, prior).total > best

    def test_ls_recovers_noiseless_parameter(self):
        model = generate_random_model(20, 4, seed=5)
        theta = np.array([1.0, -1.0, 0.5, 2.0])
        noise = NoiseModel.noiseless(20)
        observation = observe(model, theta, noise)
        assert_allclose(ls_estimate(model, observation, noise), theta, rtol=1e-8)

    def test_ls_rank_deficient(self):
        model = LinearModel(np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]))
        noise = NoiseModel.homoscedastic(3, 1.0)
        with pytest.raises(NotPositiveDefinite):
            ls_estimate(model, Observation([1.0, 2.0, 3.0]), noise)

    def test_map_defined_when_ls_is_not(self):
        model = LinearModel(np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]))
        noise = NoiseModel.homoscedastic(3, 1.0)
        estimate = map_estimate(model, Observation([1.0, 2.0, 3.0]), noise, GaussianPrior.isotropic(2, 1.0))
        assert estimate[1] == pytest.approx(0.0)

    def test_bayes_mse(self, problem):
        model, _, noise, prior = problem
        W = np.diag(noise.weights)
        expected = np.trace(np.linalg.inv(model.H.T @ W @ model.H + prior.cov_inv))
        assert_allclose(map_bayes_mse(model, noise, prior), expected, rtol=1e-10)
        assert map_bayes_mse(model, noise, prior) < ls_bayes_mse(model, noise)


class TestCost:
    def test_cost_parts(self, problem):
        model, observation, noise, prior = problem
        cost = cost_J(prior.mean, model, observation, noise, prior)
        assert cost.prior_cost == 0.0
        residual = observation.y - model.H @ prior.mean
        assert_allclose(cost.measurement_cost, residual @ (noise.weights * residual))
        assert cost.total == cost.measurement_cost

    def test_partial_gradients_sum_to_half_gradient(self, problem):
        model, observation, noise, prior = problem
        weights = uniform_weights(model.m)
        theta = np.linspace(-1.0, 1.0, 5)
        total = sum(partial_gradient(theta, i, model, observation, noise, prior, weights) for i in range(model.m))
        assert_allclose(2.0 * total, gradient_J(theta, model, observation, noise, prior), rtol=1e-10, atol=1e-10)


class TestSteepestDescent:
    def test_converges_to_map(self, problem):
        model, observation, noise, prior = problem
        mu = safe_step_width(model, noise, prior)
        theta = steepest_descent(model, observation, noise, prior, mu, 3000)
        assert_allclose(theta, map_estimate(model, observation, noise, prior), rtol=1e-8, atol=1e-10)

    def test_zero_iterations_returns_start(self, problem):
        model, observation, noise, prior = problem
        theta = steepest_descent(model, observation, noise, prior, 0.01, 0, theta0=np.ones(5))
        assert_allclose(theta, np.ones(5))

    def test_oversized_step_diverges(self, problem):
        model, observation, noise, prior = problem
        mu = 10.0 * safe_step_width(model, noise, prior)
        with pytest.raises(Diverged) as excinfo:
            steepest_descent(model, observation, noise, prior, mu, 1000)
        assert excinfo.value.k < 1000


def random_problem(rng, prior_scale=None, variance=None, min_rows_per_column=1):
    """Uniform H with a correlated prior (or C = prior_scale * I) and noisy y"""
    p = int(rng.integers(1, 11))
    m = int(rng.integers(min_rows_per_column * p, 51))
    model = LinearModel(rng.random((m, p)) + 1e-3)
    if prior_scale is None:
        B = rng.standard_normal((p, p))
        cov = 0.1 * (B @ B.T / p + np.eye(p))
        prior = GaussianPrior.from_covariance(rng.standard_normal(p), 0.5 * (cov + cov.T))
    else:
        prior = GaussianPrior.isotropic(p, prior_scale, mean=rng.standard_normal(p))
    if variance is None:
        noise = NoiseModel.from_variances(rng.uniform(0.5, 2.0, m))
    else:
        noise = NoiseModel.homoscedastic(m, variance)
    theta = rng.standard_normal(p)
    return model, Observation(model.H @ theta + rng.standard_normal(m), theta), noise, prior


class TestRandomProblems:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(100)
        for _ in range(100):
            model, observation, noise, prior = random_problem(rng)
            theta = map_estimate(model, observation, noise, prior) + rng.standard_normal(model.p)
            numeric = np.empty(model.p)
            for i in range(model.p):
                step = 1e-6 * (1.0 + abs(theta[i]))
                offset = np.zeros(model.p)
                offset[i] = step
                upper = cost_J(theta + offset, model, observation, noise, prior).total
                lower = cost_J(theta - offset, model, observation, noise, prior).total
                numeric[i] = (upper - lower) / (2.0 * step)
            analytic = gradient_J(theta, model, observation, noise, prior)
            assert np.linalg.norm(numeric - analytic) <= 1e-6 * np.linalg.norm(analytic)

    def test_map_beats_small_perturbations(self):
        rng = np.random.default_rng(101)
        model, observation, noise, prior = random_problem(rng)
        theta_map = map_estimate(model, observation, noise, prior)
        best = cost_J(theta_map, model, observation, noise, prior).total
        for _ in range(100):
            delta = rng.standard_normal(model.p)
            delta *= 1e-3 / np.linalg.norm(delta)
            assert cost_J(theta_map + delta, model, observation, noise, prior).total >= best

    def test_flat_prior_map_matches_ls(self):
        rng = np.random.default_rng(102)
        for _ in range(100):
            model, observation, noise, prior = random_problem(rng, prior_scale=1e8, variance=1.0,
                                                              min_rows_per_column=2)
            ls = ls_estimate(model, observation, noise)
            assert np.linalg.norm(map_estimate(model, observation, noise, prior) - ls) <= 1e-4 * np.linalg.norm(ls)

    def test_weightless_data_returns_prior_mean(self):
        rng = np.random.default_rng(103)
        for _ in range(20):
            model, observation, noise, prior = random_problem(rng, prior_scale=0.1, variance=1e8)
            exact = Observation(model.H @ observation.theta_true)
            theta_map = map_estimate(model, exact, noise, prior)
            assert np.linalg.norm(theta_map - prior.mean) <= 1e-4 * (1.0 + np.linalg.norm(prior.mean))


class TestScalarCase:
    def test_map_and_bayes_mse(self):
        model = LinearModel(np.array([[1.0]]))
        noise = NoiseModel.homoscedastic(1, 1.0)
        prior = GaussianPrior.isotropic(1, 0.1)
        assert_allclose(map_estimate(model, Observation([1.0]), noise, prior), [1.0 / 11.0], rtol=0, atol=1e-15)
        assert_allclose(map_bayes_mse(model, noise, prior), 1.0 / 11.0, rtol=0, atol=1e-15)


def test_steepest_descent_cost_never_increases(problem):
    model, observation, noise, prior = problem
    mu = safe_step_width(model, noise, prior)
    theta = np.zeros(model.p)
    previous = cost_J(theta, model, observation, noise, prior).total
    for _ in range(200):
        theta = steepest_descent(model, observation, noise, prior, mu, 1, theta0=theta)
        current = cost_J(theta, model, observation, noise, prior).total
        assert current <= previous + 1e-12 * max(1.0, previous)
        previous = current
