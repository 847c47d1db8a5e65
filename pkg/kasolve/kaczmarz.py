"""
Classical and Knowledge-Aided Kaczmarz row-action solvers.

One row h_i of H is used per iteration, cycling through the rows. The
Knowledge-Aided update adds the weighted prior gradient a_i C^-1 (theta - theta_bar):

    theta <- theta - mu_k (h_i w_i (h_i^T theta - y_i) + a_i C^-1 (theta - theta_bar))

Step widths follow the knowledge-aided schedule: per-row upper bounds
1 / (w_i ||h_i||^2 + a_i lambda_1(C^-1)) until the row-1 residual settles
(|v_k - v_{k-m}| < v_th), then a linear decay towards zero at k = N.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike

from .errors import NonFiniteIterate
from .model import GaussianPrior, LinearModel, NoiseModel, Observation, WeightScheme
from .numerics import Matrix, Vector, as_vector

logger = logging.getLogger(__name__)

DEFAULT_V_TH = 1e-4


class StepPhase(Enum):
    """Phases of the step-width schedule"""
    BOUND = "bound"
    DECAY = "decay"


@dataclass(frozen=True, eq=False)
class ErrorTrace:
    """Squared errors ||theta_k - theta_T||^2 for k = 0..N and optionally e_k"""
    squared_errors: Vector
    error_vectors: Optional[Matrix] = None

    @property
    def final(self) -> float:
        return float(self.squared_errors[-1])


@dataclass(frozen=True, eq=False)
class SolveReport:
    """Result of a solver run"""
    estimate: Vector
    iterations_run: int
    step_widths: Vector
    trace: Optional[ErrorTrace] = None
    decay_started_at: Optional[int] = None


def cyclic_index(k: int, m: int) -> int:
    """Row used in iteration k (1-based): ((k - 1) mod m) + 1"""
    if k < 1 or m < 1:
        raise ValueError(f"k and m must be >= 1, got k={k}, m={m}")
    return (k - 1) % m + 1


def max_step_width(h: ArrayLike, w: float, a: float, lambda1_inv: float) -> float:
    """Upper bound 1 / (w ||h||^2 + a lambda_1(C^-1)) keeping the spectrum of M in [0, 1)"""
    h = np.asarray(h, dtype=np.float64)
    denominator = w * float(h @ h) + a * lambda1_inv
    if not denominator > 0:
        raise ValueError(f"step-width bound undefined: w||h||^2 + a*lambda1 = {denominator}")
    return 1.0 / denominator


def ka_kaczmarz_step(theta: Vector, h: Vector, y_i: float, w: float, a: float,
                     prior: GaussianPrior, mu: float) -> Vector:
    """Single Knowledge-Aided row update"""
    return theta - mu * (h * (w * (h @ theta - y_i)) + a * prior.prior_gradient(theta))


def kaczmarz_step(theta: Vector, h: Vector, y_i: float, w: float, mu: float) -> Vector:
    """Single classical (weighted) Kaczmarz row update"""
    return theta - mu * (h * (w * (h @ theta - y_i)))


def error_propagation_matrix(h: ArrayLike, w: float, a: float, prior: GaussianPrior, mu: float) -> Matrix:
    """M = I - mu (h w h^T + a C^-1)"""
    h = np.asarray(h, dtype=np.float64)
    return np.eye(h.size) - mu * (w * np.outer(h, h) + a * prior.cov_inv)


def error_recursion_step(e: Vector, h: Vector, w: float, a: float, prior: GaussianPrior,
                         mu: float, n_i: float, theta_true: Vector) -> Vector:
    """
    Error after one Knowledge-Aided update, given the error e before it:

        M e + mu h w n_i - mu a C^-1 (theta_T - theta_bar)
    """
    M = error_propagation_matrix(h, w, a, prior, mu)
    return M @ e + mu * w * n_i * h - mu * a * (prior.cov_inv @ (theta_true - prior.mean))


class StepController:
    """
    Step-width schedule with residual trigger.

    In the bound phase mu_k is the cached per-row bound; at iterations using
    row 1 the residual v_k is compared with the one from the previous cycle
    and, once they differ by less than v_th, the schedule switches to
    mu = decay_start followed by a linear decrement mu_r = mu / (N - k + 1).
    """

    def __init__(self, bounds: Vector, decay_start: float, N: int, v_threshold: float):
        self.bounds = bounds
        self.decay_start = decay_start
        self.N = N
        self.v_threshold = v_threshold
        self.mode = StepPhase.BOUND
        self.mu_current = 0.0
        self.mu_r = 0.0
        # "largest available number": the first cycle can never trigger
        self.v_prev_cycle = np.finfo(np.float64).max
        self.k = 0
        self.decay_started_at: Optional[int] = None

    def next_step_width(self, row: int, v_k: float) -> float:
        """Step width for the next iteration using 1-based row `row` with residual v_k"""
        self.k += 1
        if self.mode is StepPhase.DECAY:
            self.mu_current = max(self.mu_current - self.mu_r, 0.0)
            return self.mu_current

        mu = float(self.bounds[row - 1])
        if row == 1:
            if abs(v_k - self.v_prev_cycle) < self.v_threshold:
                self.mode = StepPhase.DECAY
                mu = self.decay_start
                self.mu_r = mu / (self.N - self.k + 1)
                self.decay_started_at = self.k
                logger.debug("step-width decay starts at k=%d (mu=%.6g, mu_r=%.6g)", self.k, mu, self.mu_r)
            self.v_prev_cycle = v_k
        self.mu_current = mu
        return mu


def _run_row_action(model: LinearModel, observation: Observation, noise: NoiseModel,
                    prior: Optional[GaussianPrior], a: Vector, N: int, v_th: float,
                    theta0: Optional[ArrayLike], record_trace: bool,
                    record_error_vectors: bool, step_widths: Optional[ArrayLike]) -> SolveReport:
    m, p = model.m, model.p
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if observation.m != m or noise.m != m:
        raise ValueError(f"H has {m} rows but y has {observation.m} and the noise model {noise.m} entries")
    if prior is not None and prior.p != p:
        raise ValueError(f"prior has dimension {prior.p}, H has {p} columns")

    theta = np.zeros(p) if theta0 is None else as_vector(theta0, "theta0").copy()
    if theta.size != p:
        raise ValueError(f"theta0 has length {theta.size}, expected {p}")

    weights = noise.weights
    lambda1 = prior.lambda1_inv if prior is not None else 0.0
    denominators = weights * model.row_norms_sq() + a * lambda1
    bounds = 1.0 / denominators
    controller = StepController(bounds, 1.0 / float(np.max(denominators)), N, v_th)

    forced = None
    if step_widths is not None:
        forced = np.asarray(step_widths, dtype=np.float64)
        if forced.size < N:
            raise ValueError(f"step_widths has {forced.size} entries, N={N} required")

    theta_true = observation.theta_true if record_trace else None
    squared = np.empty(N + 1) if theta_true is not None else None
    vectors = np.empty((N + 1, p)) if theta_true is not None and record_error_vectors else None
    if squared is not None:
        error = theta - theta_true
        squared[0] = error @ error
        if vectors is not None:
            vectors[0] = error

    used = np.empty(N)
    for k in range(1, N + 1):
        row = cyclic_index(k, m)
        i = row - 1
        h = model.H[i]
        v_k = observation.y[i] - h @ theta
        mu = controller.next_step_width(row, v_k) if forced is None else float(forced[k - 1])
        used[k - 1] = mu
        if prior is None:
            theta = kaczmarz_step(theta, h, observation.y[i], weights[i], mu)
        else:
            theta = ka_kaczmarz_step(theta, h, observation.y[i], weights[i], a[i], prior, mu)
        if not np.all(np.isfinite(theta)):
            raise NonFiniteIterate(f"non-finite estimate at iteration {k}", k)
        if squared is not None:
            error = theta - theta_true
            squared[k] = error @ error
            if vectors is not None:
                vectors[k] = error

    trace = ErrorTrace(squared, vectors) if squared is not None else None
    return SolveReport(
        estimate=theta,
        iterations_run=N,
        step_widths=used,
        trace=trace,
        decay_started_at=controller.decay_started_at if forced is None else None,
    )


def run_ka_kaczmarz(model: LinearModel, observation: Observation, noise: NoiseModel,
                    prior: GaussianPrior, weights: WeightScheme, N: int,
                    v_th: float = DEFAULT_V_TH, theta0: Optional[ArrayLike] = None,
                    record_trace: bool = False, record_error_vectors: bool = False,
                    step_widths: Optional[ArrayLike] = None) -> SolveReport:
    """
    Knowledge-Aided Kaczmarz with the residual-triggered step-width schedule.

    Args:
        model, observation, noise, prior: the estimation problem
        weights: prior-gradient weights a_i (one per row)
        N: number of iterations
        v_th: residual-change threshold that starts the linear decay
        theta0: start estimate (zero vector by default)
        record_trace: record ||theta_k - theta_T||^2 (needs observation.theta_true)
        record_error_vectors: also keep the error vectors e_k
        step_widths: forced schedule overriding the controller (length >= N)

    Raises:
        NonFiniteIterate: if the estimate becomes non-finite
    """
    if weights.m != model.m:
        raise ValueError(f"weight scheme has {weights.m} entries, H has {model.m} rows")
    return _run_row_action(model, observation, noise, prior, weights.a, N, v_th, theta0,
                           record_trace, record_error_vectors, step_widths)


def run_kaczmarz(model: LinearModel, observation: Observation, noise: NoiseModel, N: int,
                 v_th: float = DEFAULT_V_TH, theta0: Optional[ArrayLike] = None,
                 record_trace: bool = False, record_error_vectors: bool = False,
                 step_widths: Optional[ArrayLike] = None) -> SolveReport:
    """Classical Kaczmarz with the same schedule; bounds become 1 / (w_i ||h_i||^2)"""
    return _run_row_action(model, observation, noise, None, np.zeros(model.m), N, v_th, theta0,
                           record_trace, record_error_vectors, step_widths)
