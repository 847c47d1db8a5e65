"""
Streaming LMS and Knowledge-Aided LMS filters.

The filter memory h_k is the tapped-delay row of the convolution matrix. The
update is the Knowledge-Aided Kaczmarz row update without cyclic re-use of
rows; the step width is the per-sample bound tapered linearly:

    mu_k = (N - k + 1) / N / (w_k ||h_k||^2 + a_k lambda_1(C^-1))
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol, Tuple

import numpy as np
from numpy.typing import ArrayLike

from .errors import NonFiniteIterate
from .kaczmarz import ErrorTrace, SolveReport, ka_kaczmarz_step, kaczmarz_step
from .model import GaussianPrior, NoiseModel
from .numerics import Vector, as_vector

logger = logging.getLogger(__name__)

DEFAULT_GEOMETRIC_RATIO = 0.999

RowStream = Iterable[Tuple[ArrayLike, float]]


class APolicy(Protocol):
    """Prior weight a_k for iteration k (1-based)"""

    def __call__(self, k: int) -> float: ...


@dataclass(frozen=True)
class UniformAPolicy:
    """a_k = 1/m for a finite stream of m samples"""
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")

    def __call__(self, k: int) -> float:
        return 1.0 / self.m


@dataclass(frozen=True)
class GeometricAPolicy:
    """a_k = (1 - r) r^(k-1), summing to 1 over an unbounded stream"""
    r: float = DEFAULT_GEOMETRIC_RATIO

    def __post_init__(self):
        if not 0.0 < self.r < 1.0:
            raise ValueError(f"ratio r must lie in (0, 1), got {self.r}")

    def __call__(self, k: int) -> float:
        return (1.0 - self.r) * self.r ** (k - 1)


def a_policy_from_name(name: str, N: int, ratio: float = DEFAULT_GEOMETRIC_RATIO) -> APolicy:
    if name == "uniform":
        return UniformAPolicy(N)
    if name == "geometric":
        return GeometricAPolicy(ratio)
    raise ValueError(f"unknown a-policy '{name}', expected 'uniform' or 'geometric'")


@dataclass(eq=False)
class LmsState:
    """Mutable filter state owned by a single stream"""
    theta_hat: Vector
    N: int
    prior: Optional[GaussianPrior] = None
    a_policy: Optional[APolicy] = None
    k: int = 0
    step_widths: list = field(default_factory=list)

    @classmethod
    def start(cls, p: int, N: int, prior: Optional[GaussianPrior] = None,
              a_policy: Optional[APolicy] = None, theta0: Optional[ArrayLike] = None) -> "LmsState":
        if N < 1:
            raise ValueError(f"N must be >= 1, got {N}")
        theta = np.zeros(p) if theta0 is None else as_vector(theta0, "theta0").copy()
        if theta.size != p:
            raise ValueError(f"theta0 has length {theta.size}, expected {p}")
        return cls(theta_hat=theta, N=N, prior=prior, a_policy=a_policy)


def tapered_step_width(h: Vector, w: float, a: float, lambda1_inv: float, k: int, N: int) -> float:
    """Per-sample bound times the linear taper (N - k + 1) / N; 0 when no bound exists"""
    denominator = w * float(h @ h) + a * lambda1_inv
    if denominator <= 0:
        return 0.0
    return (N - k + 1) / N / denominator


def ka_lms_step(state: LmsState, h_k: Vector, y_k: float, w_k: float, a_k: float, mu_k: float) -> LmsState:
    """Advance the filter by one sample; a_k = 0 gives the classical LMS step"""
    if mu_k < 0:
        raise ValueError(f"mu_k must be >= 0, got {mu_k}")
    if state.prior is not None:
        state.theta_hat = ka_kaczmarz_step(state.theta_hat, h_k, y_k, w_k, a_k, state.prior, mu_k)
    elif a_k == 0:
        state.theta_hat = kaczmarz_step(state.theta_hat, h_k, y_k, w_k, mu_k)
    else:
        raise ValueError("a_k > 0 requires a prior")
    state.k += 1
    state.step_widths.append(mu_k)
    return state


def _run_stream(row_stream: RowStream, noise: NoiseModel, prior: Optional[GaussianPrior],
                a_policy: Optional[APolicy], N: int, theta0: Optional[ArrayLike],
                theta_true: Optional[ArrayLike], record_error_vectors: bool,
                step_widths: Optional[ArrayLike]) -> SolveReport:
    if noise.m < N:
        raise ValueError(f"noise model has {noise.m} entries, N={N} required")
    rows = iter(row_stream)
    first = next(rows, None)
    if first is None:
        raise ValueError("row stream is empty")
    p = np.asarray(first[0]).size
    state = LmsState.start(p, N, prior, a_policy, theta0)
    lambda1 = prior.lambda1_inv if prior is not None else 0.0

    forced = None
    if step_widths is not None:
        forced = np.asarray(step_widths, dtype=np.float64)
        if forced.size < N:
            raise ValueError(f"step_widths has {forced.size} entries, N={N} required")

    truth = None if theta_true is None else as_vector(theta_true, "theta_true")
    squared, vectors = [], []

    def record():
        if truth is not None:
            error = state.theta_hat - truth
            squared.append(float(error @ error))
            if record_error_vectors:
                vectors.append(error)

    record()
    pending = [first]
    while state.k < N:
        item = pending.pop() if pending else next(rows, None)
        if item is None:
            logger.debug("row stream ended after %d of %d samples", state.k, N)
            break
        h = as_vector(item[0], "h_k")
        if h.size != p:
            raise ValueError(f"row {state.k + 1} has length {h.size}, expected {p}")
        k = state.k + 1
        w = float(noise.weights[k - 1])
        a = state.a_policy(k) if (state.a_policy is not None and prior is not None) else 0.0
        mu = tapered_step_width(h, w, a, lambda1, k, N) if forced is None else float(forced[k - 1])
        ka_lms_step(state, h, float(item[1]), w, a, mu)
        if not np.all(np.isfinite(state.theta_hat)):
            raise NonFiniteIterate(f"non-finite estimate at iteration {k}", k)
        record()

    trace = None
    if truth is not None:
        trace = ErrorTrace(np.asarray(squared), np.vstack(vectors) if record_error_vectors else None)
    return SolveReport(
        estimate=state.theta_hat,
        iterations_run=state.k,
        step_widths=np.asarray(state.step_widths, dtype=np.float64),
        trace=trace,
    )


def run_ka_lms(row_stream: RowStream, noise: NoiseModel, prior: GaussianPrior, N: int,
               theta0: Optional[ArrayLike] = None, a_policy: Optional[APolicy] = None,
               theta_true: Optional[ArrayLike] = None, record_error_vectors: bool = False,
               step_widths: Optional[ArrayLike] = None) -> SolveReport:
    """
    Knowledge-Aided LMS over a stream of (h_k, y_k) pairs.

    Args:
        row_stream: pull-based (h_k, y_k) pairs; at most N are consumed
        noise: noise model supplying w_k for k = 1..N
        prior: Gaussian prior on the impulse response
        N: planned horizon for the taper (the stream length in experiments)
        theta0: start estimate (zero vector by default)
        a_policy: prior weights a_k, 1/N by default
        theta_true: record the squared-error trace against it
        record_error_vectors: also keep the error vectors e_k
        step_widths: forced schedule overriding the taper (length >= N)
    """
    policy = a_policy if a_policy is not None else UniformAPolicy(N)
    return _run_stream(row_stream, noise, prior, policy, N, theta0, theta_true,
                       record_error_vectors, step_widths)


def run_lms(row_stream: RowStream, noise: NoiseModel, N: int, theta0: Optional[ArrayLike] = None,
            theta_true: Optional[ArrayLike] = None, record_error_vectors: bool = False,
            step_widths: Optional[ArrayLike] = None) -> SolveReport:
    """Classical LMS: a_k = 0 with the same bound-and-taper step policy"""
    return _run_stream(row_stream, noise, None, None, N, theta0, theta_true,
                       record_error_vectors, step_widths)
