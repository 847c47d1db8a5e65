"""
Linear Gaussian observation model.

    y = H theta + n,  theta ~ N(theta_bar, C_thth),  n ~ N(0, C_nn), C_nn diagonal

Holds the model, prior and noise types, seeded random problem generation,
SNR calibration and the tapped-delay (convolution matrix) rows used by the
LMS filters.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import ArrayLike
from scipy.linalg import cholesky

from .numerics import (
    Matrix,
    Vector,
    as_matrix,
    as_vector,
    check_symmetric,
    ensure_positive_definite,
    is_positive_definite,
    largest_eigenvalue,
    spd_inverse,
)

logger = logging.getLogger(__name__)

Seed = Union[None, int, np.random.SeedSequence, np.random.Generator]

WEIGHT_SUM_TOL = 1e-12
# w_i of a noiseless row, standing in for 1/sigma^2 -> inf
NOISELESS_WEIGHT = 1e12


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def trial_seed(master_seed: int, *key: int) -> np.random.SeedSequence:
    """Seed sequence for (master_seed, *key); independent of evaluation order"""
    return np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Observation matrix H (m x p); rows h_i are accessed 0-based"""
    H: Matrix

    def __post_init__(self):
        H = as_matrix(self.H, "H").copy()
        zero_rows = np.flatnonzero(~np.any(H != 0.0, axis=1))
        if zero_rows.size:
            raise ValueError(f"H has all-zero rows at indices {zero_rows.tolist()}")
        object.__setattr__(self, "H", _frozen(H))

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def p(self) -> int:
        return self.H.shape[1]

    def row(self, i: int) -> Vector:
        """Row h_i of H (0-based index)"""
        return self.H[i]

    def row_norms_sq(self) -> Vector:
        return np.einsum("ij,ij->i", self.H, self.H)


@dataclass(frozen=True, eq=False)
class GaussianPrior:
    """Prior mean theta_bar and covariance C with cached C^-1 and lambda_1(C^-1)"""
    mean: Vector
    cov: Matrix
    cov_inv: Matrix
    lambda1_inv: float
    cov_factor: Matrix = field(repr=False)
    # diagonal of C^-1 when C is diagonal, enabling the elementwise prior term
    cov_inv_diag: Optional[Vector] = field(default=None, repr=False)

    @classmethod
    def from_covariance(cls, mean: ArrayLike, cov: ArrayLike, repair: bool = False) -> "GaussianPrior":
        """
        Build a prior and precalculate C^-1 and lambda_1(C^-1).

        Args:
            mean: prior mean of length p
            cov: p x p symmetric covariance
            repair: run the automatic positive-definiteness repair on cov
        """
        mean_vec = as_vector(mean, "mean").copy()
        cov_mat = as_matrix(cov, "cov")
        check_symmetric(cov_mat)
        if cov_mat.shape != (mean_vec.size, mean_vec.size):
            raise ValueError(f"cov has shape {cov_mat.shape}, mean has length {mean_vec.size}")
        if repair:
            cov_mat = ensure_positive_definite(cov_mat)
        cov_mat = 0.5 * (cov_mat + cov_mat.T)

        cov_inv = spd_inverse(cov_mat)
        lambda1_inv = largest_eigenvalue(cov_inv)
        if not lambda1_inv > 0:
            raise ValueError(f"lambda_1(C^-1) must be positive, got {lambda1_inv}")
        factor = cholesky(cov_mat, lower=True, check_finite=False)

        cov_inv_diag = None
        if np.count_nonzero(cov_mat - np.diag(np.diag(cov_mat))) == 0:
            cov_inv_diag = _frozen(np.diag(cov_inv).copy())
        return cls(
            mean=_frozen(mean_vec),
            cov=_frozen(cov_mat),
            cov_inv=_frozen(cov_inv),
            lambda1_inv=float(lambda1_inv),
            cov_factor=_frozen(factor),
            cov_inv_diag=cov_inv_diag,
        )

    @classmethod
    def isotropic(cls, p: int, scale: float, mean: Union[float, ArrayLike] = 0.0) -> "GaussianPrior":
        """Prior with C = scale * I and a scalar-filled or explicit mean"""
        if scale <= 0:
            raise ValueError(f"covariance scale must be positive, got {scale}")
        mean_vec = np.full(p, float(mean)) if np.ndim(mean) == 0 else mean
        return cls.from_covariance(mean_vec, scale * np.eye(p))

    @property
    def p(self) -> int:
        return self.mean.size

    def prior_gradient(self, theta: Vector) -> Vector:
        """C^-1 (theta - theta_bar)"""
        delta = theta - self.mean
        if self.cov_inv_diag is not None:
            return self.cov_inv_diag * delta
        return self.cov_inv @ delta


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Diagonal noise covariance as per-row variances sigma_i^2 and weights w_i = 1/sigma_i^2"""
    variances: Vector
    weights: Vector

    @classmethod
    def from_variances(cls, variances: ArrayLike) -> "NoiseModel":
        var = as_vector(variances, "variances").copy()
        if np.any(var <= 0):
            raise ValueError("noise variances must be positive; use NoiseModel.noiseless for zero noise")
        return cls(variances=_frozen(var), weights=_frozen(1.0 / var))

    @classmethod
    def homoscedastic(cls, m: int, variance: float) -> "NoiseModel":
        return cls.from_variances(np.full(m, float(variance)))

    @classmethod
    def noiseless(cls, m: int) -> "NoiseModel":
        """
        Zero noise.

        Weights are the large finite NOISELESS_WEIGHT, so MAP and the
        knowledge-aided solvers follow the data and reach the sigma^2 -> 0
        limit. LS and the plain row-action steps do not depend on the scale.
        """
        return cls(variances=_frozen(np.zeros(m)), weights=_frozen(np.full(m, NOISELESS_WEIGHT)))

    @property
    def m(self) -> int:
        return self.variances.size

    @property
    def is_noiseless(self) -> bool:
        return bool(np.all(self.variances == 0.0))


@dataclass(frozen=True, eq=False)
class WeightScheme:
    """Prior-gradient weights a_i > 0 with sum 1"""
    a: Vector

    def __post_init__(self):
        a = as_vector(self.a, "a").copy()
        if np.any(a <= 0):
            raise ValueError("all prior weights a_i must be positive")
        total = math.fsum(a)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"prior weights must sum to 1, got {total!r}")
        object.__setattr__(self, "a", _frozen(a))

    @property
    def m(self) -> int:
        return self.a.size


@dataclass(frozen=True, eq=False)
class Observation:
    """Measurement vector y; theta_true is kept for error evaluation in simulations"""
    y: Vector
    theta_true: Optional[Vector] = None

    def __post_init__(self):
        object.__setattr__(self, "y", _frozen(as_vector(self.y, "y").copy()))
        if self.theta_true is not None:
            object.__setattr__(self, "theta_true", _frozen(as_vector(self.theta_true, "theta_true").copy()))

    @property
    def m(self) -> int:
        return self.y.size


def uniform_weights(m: int) -> WeightScheme:
    """a_i = 1/m for all rows"""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    return WeightScheme(np.full(m, 1.0 / m))


def generate_random_model(m: int, p: int, seed: Seed = None) -> LinearModel:
    """m x p matrix with i.i.d. entries uniform on [0, 1)"""
    if m < 1 or p < 1:
        raise ValueError(f"dimensions must be >= 1, got m={m}, p={p}")
    rng = np.random.default_rng(seed)
    return LinearModel(rng.random((m, p)))


def sample_parameter(prior: GaussianPrior, seed: Seed = None) -> Vector:
    """Draw theta_T ~ N(theta_bar, C) as theta_bar + L z with C = L L^T"""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(prior.p)
    return prior.mean + prior.cov_factor @ z


def sample_uniform_parameter(p: int, seed: Seed = None) -> Vector:
    """theta_T with i.i.d. entries uniform on [0, 1)"""
    rng = np.random.default_rng(seed)
    return rng.random(p)


def expected_signal_energy(model: LinearModel, prior: GaussianPrior) -> float:
    """E[||H theta||^2] = trace(H^T H (C + theta_bar theta_bar^T))"""
    if prior.p != model.p:
        raise ValueError(f"prior has dimension {prior.p}, model has p={model.p}")
    gram = model.H.T @ model.H
    second_moment = prior.cov + np.outer(prior.mean, prior.mean)
    return float(np.einsum("ij,ji->", gram, second_moment))


def calibrate_noise(model: LinearModel, prior: GaussianPrior, snr_db: float) -> NoiseModel:
    """
    Homoscedastic noise for a target SNR.

    SNR = E[||H theta||^2] / (m sigma^2), the expectation taken over the prior.
    snr_db = +inf yields the noiseless model.
    """
    if math.isnan(snr_db) or snr_db == -math.inf:
        raise ValueError(f"snr_db must be a number or +inf, got {snr_db}")
    if snr_db == math.inf:
        return NoiseModel.noiseless(model.m)
    variance = expected_signal_energy(model, prior) / (model.m * 10.0 ** (snr_db / 10.0))
    if variance == 0.0:
        return NoiseModel.noiseless(model.m)
    return NoiseModel.homoscedastic(model.m, variance)


def observe(model: LinearModel, theta_true: ArrayLike, noise: NoiseModel, seed: Seed = None) -> Observation:
    """y = H theta_T + n with n_i ~ N(0, sigma_i^2) drawn from the seeded generator"""
    theta = as_vector(theta_true, "theta_true")
    if theta.size != model.p or noise.m != model.m:
        raise ValueError(
            f"inconsistent dimensions: H is {model.m}x{model.p}, theta has {theta.size}, noise has {noise.m}"
        )
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(model.m)
    y = model.H @ theta + np.sqrt(noise.variances) * z
    return Observation(y=y, theta_true=theta)


def convolution_rows(signal: ArrayLike, p: int) -> Iterator[Vector]:
    """
    Tapped-delay rows h_k = (x[k], x[k-1], ..., x[k-p+1]) with zero prehistory.

    Yields one row per input sample.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    x = as_vector(signal, "signal")
    padded = np.concatenate([np.zeros(p - 1), x])
    windows = sliding_window_view(padded, window_shape=p)[:, ::-1]
    for k in range(x.size):
        yield windows[k].copy()


def convolution_matrix(signal: ArrayLike, p: int) -> Matrix:
    """Stack of convolution_rows (N x p)"""
    return np.vstack(list(convolution_rows(signal, p)))


def prior_is_consistent(prior: GaussianPrior) -> bool:
    """Covariance is still positive definite and C^-1 C ~ I within 1e-8 * p"""
    residual = np.linalg.norm(prior.cov_inv @ prior.cov - np.eye(prior.p), ord="fro")
    return is_positive_definite(prior.cov) and residual <= 1e-8 * prior.p
