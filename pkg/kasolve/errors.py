"""
Exception hierarchy for kasolve.

Numerical failures derive from NumericalError so the CLI can map them to
exit code 2; everything else derives from KASolveError. Errors carrying
extra attributes define __reduce__ so they survive the trip back from
worker processes.
"""

from typing import Iterable, Optional


class KASolveError(Exception):
    """Base class of all kasolve errors"""


class NumericalError(KASolveError):
    """A computation could not produce a valid numerical result"""


class NotPositiveDefinite(NumericalError):
    """Cholesky factorization hit a non-positive pivot"""


class NotSymmetric(NumericalError):
    """Matrix violates the relative symmetry tolerance"""


class RepairFailed(NumericalError):
    """C + sigma*I is still not positive definite"""


class _IterationError(NumericalError):
    def __init__(self, message: str, k: int):
        super().__init__(message)
        self.k = k

    def __reduce__(self):
        return type(self), (self.args[0], self.k)


class NoConvergence(_IterationError):
    """Eigen-solver failed or its residual check did not hold (k = 0)"""


class Diverged(_IterationError):
    """Iterate norm exceeded the divergence limit (step width too large)"""


class NonFiniteIterate(_IterationError):
    """An estimate entry became inf or nan"""


class TrialFailed(NumericalError):
    """A Monte-Carlo trial failed; the solver error is chained as __cause__"""

    def __init__(self, trial_index: int, cause: Exception):
        super().__init__(f"trial {trial_index} failed: {cause}")
        self.trial_index = trial_index
        self.cause = cause

    def __reduce__(self):
        return type(self), (self.trial_index, self.cause)


class UnknownPreset(KASolveError, KeyError):
    """Preset name not present in config.json"""

    def __init__(self, name: str, valid: Iterable[str]):
        self.name = name
        self.valid = sorted(valid)
        super().__init__(f"unknown preset '{name}', valid names: {', '.join(self.valid)}")

    def __str__(self) -> str:
        return self.args[0]

    def __reduce__(self):
        return type(self), (self.name, self.valid)


class IoFailure(KASolveError, OSError):
    """Reading or writing a result, metadata, config or problem file failed"""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message)
        self.path = path

    def __str__(self) -> str:
        return self.args[0]

    def __reduce__(self):
        return type(self), (self.args[0], self.path)
