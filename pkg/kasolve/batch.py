"""
Closed-form LS and MAP estimators, the MAP cost J(theta) and steepest descent.

    J(theta) = (y - H theta)^T C_nn^-1 (y - H theta) + (theta - theta_bar)^T C^-1 (theta - theta_bar)

gradient_J keeps the factor 2 of the exact gradient; the iterative solvers
(steepest_descent and the row-action modules) absorb it into the step width.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike

from .errors import Diverged
from .model import GaussianPrior, LinearModel, NoiseModel, Observation, WeightScheme
from .numerics import Matrix, Vector, as_vector, largest_eigenvalue, spd_inverse, spd_solve

logger = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class CostBreakdown:
    """Measurement and prior parts of J(theta)"""
    measurement_cost: float
    prior_cost: float

    @property
    def total(self) -> float:
        return self.measurement_cost + self.prior_cost


def _check_dims(model: LinearModel, observation: Observation, noise: NoiseModel,
                prior: Optional[GaussianPrior] = None) -> None:
    if observation.m != model.m or noise.m != model.m:
        raise ValueError(
            f"H has {model.m} rows but y has {observation.m} and the noise model {noise.m} entries"
        )
    if prior is not None and prior.p != model.p:
        raise ValueError(f"prior has dimension {prior.p}, H has {model.p} columns")


def _weighted_gram(model: LinearModel, noise: NoiseModel) -> Matrix:
    """H^T C_nn^-1 H"""
    return model.H.T @ (noise.weights[:, None] * model.H)


def cost_J(theta: ArrayLike, model: LinearModel, observation: Observation,
           noise: NoiseModel, prior: GaussianPrior) -> CostBreakdown:
    _check_dims(model, observation, noise, prior)
    theta = as_vector(theta, "theta")
    residual = observation.y - model.H @ theta
    delta = theta - prior.mean
    measurement = float(residual @ (noise.weights * residual))
    prior_part = float(delta @ prior.cov_inv @ delta)
    # quadratic forms of PSD matrices; clip rounding below zero
    return CostBreakdown(max(measurement, 0.0), max(prior_part, 0.0))


def gradient_J(theta: ArrayLike, model: LinearModel, observation: Observation,
               noise: NoiseModel, prior: GaussianPrior) -> Vector:
    """2 H^T C_nn^-1 (H theta - y) + 2 C^-1 (theta - theta_bar)"""
    _check_dims(model, observation, noise, prior)
    theta = as_vector(theta, "theta")
    residual = model.H @ theta - observation.y
    return 2.0 * (model.H.T @ (noise.weights * residual)) + 2.0 * (prior.cov_inv @ (theta - prior.mean))


def partial_gradient(theta: ArrayLike, i: int, model: LinearModel, observation: Observation,
                     noise: NoiseModel, prior: GaussianPrior, weights: WeightScheme) -> Vector:
    """
    Partial gradient of row i (0-based), factor 2 omitted:

        h_i w_i (h_i^T theta - y_i) + a_i C^-1 (theta - theta_bar)

    Summed over all rows this equals gradient_J / 2 because sum(a_i) = 1.
    """
    theta = as_vector(theta, "theta")
    h = model.row(i)
    w = noise.weights[i]
    return h * w * (h @ theta - observation.y[i]) + weights.a[i] * (prior.cov_inv @ (theta - prior.mean))


def map_estimate(model: LinearModel, observation: Observation,
                 noise: NoiseModel, prior: GaussianPrior) -> Vector:
    """(H^T C_nn^-1 H + C^-1)^-1 (H^T C_nn^-1 y + C^-1 theta_bar) via an SPD solve"""
    _check_dims(model, observation, noise, prior)
    system = _weighted_gram(model, noise) + prior.cov_inv
    rhs = model.H.T @ (noise.weights * observation.y) + prior.cov_inv @ prior.mean
    return spd_solve(0.5 * (system + system.T), rhs)


def ls_estimate(model: LinearModel, observation: Observation, noise: NoiseModel) -> Vector:
    """
    Weighted least squares (H^T C_nn^-1 H)^-1 H^T C_nn^-1 y.

    Raises:
        NotPositiveDefinite: when H is column rank deficient
    """
    _check_dims(model, observation, noise)
    gram = _weighted_gram(model, noise)
    rhs = model.H.T @ (noise.weights * observation.y)
    return spd_solve(0.5 * (gram + gram.T), rhs)


def safe_step_width(model: LinearModel, noise: NoiseModel, prior: GaussianPrior) -> float:
    """1 / lambda_1(H^T C_nn^-1 H + C^-1), the largest monotone steepest-descent step"""
    system = _weighted_gram(model, noise) + prior.cov_inv
    return 1.0 / largest_eigenvalue(0.5 * (system + system.T))


def steepest_descent(model: LinearModel, observation: Observation, noise: NoiseModel,
                     prior: GaussianPrior, mu: float, iterations: int,
                     theta0: Optional[ArrayLike] = None) -> Vector:
    """
    Full-gradient descent on J with the factor 2 absorbed into mu:

        theta <- theta - mu (H^T C_nn^-1 (H theta - y) + C^-1 (theta - theta_bar))

    Raises:
        Diverged: when ||theta|| exceeds 1e12
    """
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if iterations < 0:
        raise ValueError(f"iterations must be >= 0, got {iterations}")
    _check_dims(model, observation, noise, prior)
    theta = np.zeros(model.p) if theta0 is None else as_vector(theta0, "theta0").copy()

    for k in range(1, iterations + 1):
        residual = model.H @ theta - observation.y
        step = model.H.T @ (noise.weights * residual) + prior.prior_gradient(theta)
        theta = theta - mu * step
        norm = float(np.linalg.norm(theta))
        if not norm <= DIVERGENCE_LIMIT:
            raise Diverged(f"steepest descent diverged at iteration {k} (||theta|| = {norm:.3e})", k)
    return theta


def map_bayes_mse(model: LinearModel, noise: NoiseModel, prior: GaussianPrior) -> float:
    """Bayesian MSE of the MAP/LMMSE estimator: trace((H^T C_nn^-1 H + C^-1)^-1)"""
    system = _weighted_gram(model, noise) + prior.cov_inv
    return float(np.trace(spd_inverse(0.5 * (system + system.T))))


def ls_bayes_mse(model: LinearModel, noise: NoiseModel) -> float:
    """MSE of the weighted LS estimator: trace((H^T C_nn^-1 H)^-1)"""
    gram = _weighted_gram(model, noise)
    return float(np.trace(spd_inverse(0.5 * (gram + gram.T))))
