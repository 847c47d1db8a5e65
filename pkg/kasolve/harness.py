"""
Seeded Monte-Carlo experiment drivers.

Every trial draws its own problem (H or an input signal, theta_T, noise)
from a seed derived from (master_seed, trial index), runs the iterative
solvers and the closed-form LS/MAP oracles on the same data, and returns
squared errors. Trial results are summed in trial order, so a table only
depends on the configuration, never on the number of workers.
"""

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import partial
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from tqdm import tqdm

from . import __version__
from .batch import ls_bayes_mse, ls_estimate, map_bayes_mse, map_estimate
from .errors import IoFailure, KASolveError, TrialFailed, UnknownPreset
from .kaczmarz import run_ka_kaczmarz, run_kaczmarz
from .lms import a_policy_from_name, run_ka_lms, run_lms
from .model import (
    GaussianPrior,
    LinearModel,
    calibrate_noise,
    convolution_matrix,
    generate_random_model,
    observe,
    sample_parameter,
    sample_uniform_parameter,
    trial_seed,
    uniform_weights,
)
from .numerics import Vector
from .settings import defaults, output_settings, presets

logger = logging.getLogger(__name__)

# spawn-key prefixes separating per-trial streams from the fixed-H stream
TRIAL_KEY = 0
FIXED_MODEL_KEY = 1


class ExperimentKind(str, Enum):
    KACZMARZ_ITERATIONS = "kaczmarz-iterations"
    KACZMARZ_SNR = "kaczmarz-snr"
    LMS_ITERATIONS = "lms-iterations"
    LMS_SNR = "lms-snr"

    @property
    def is_sweep(self) -> bool:
        return self in (ExperimentKind.KACZMARZ_SNR, ExperimentKind.LMS_SNR)

    @property
    def is_lms(self) -> bool:
        return self in (ExperimentKind.LMS_ITERATIONS, ExperimentKind.LMS_SNR)

    @property
    def columns(self) -> Tuple[str, ...]:
        if self.is_lms:
            return ("ls", "map", "lms", "ka_lms")
        return ("ls", "map", "kaczmarz", "ka_kaczmarz")


class ExperimentConfig(BaseModel):
    """Full description of a Monte-Carlo run; echoed into the metadata sidecar"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: ExperimentKind
    m: int = Field(50, ge=1)
    p: int = Field(5, ge=1)
    n_iters: int = Field(500, ge=1)
    trials: int = Field(1000, ge=1)
    snr_db: float = 0.0
    snr_range: Optional[Tuple[float, float, float]] = None
    noiseless: bool = False
    v_th: float = Field(1e-4, ge=0)
    prior_mean: float = 0.0
    cov_scale: float = Field(0.1, gt=0)
    cov_file: Optional[str] = None
    master_seed: int = Field(42, ge=0)
    a_policy: Literal["uniform", "geometric"] = "uniform"
    geometric_ratio: float = Field(0.999, gt=0, lt=1)
    redraw_h: bool = True
    theta_source: Literal["prior", "uniform"] = "prior"
    preset: Optional[str] = None

    @model_validator(mode="after")
    def _check_consistency(self) -> "ExperimentConfig":
        if self.kind.is_sweep:
            if self.snr_range is None:
                raise ValueError(f"{self.kind.value} requires snr_range (start, stop, step)")
            start, stop, step = self.snr_range
            if not step > 0 or stop < start:
                raise ValueError(f"snr_range needs start <= stop and step > 0, got {self.snr_range}")
            if self.noiseless:
                raise ValueError("noiseless runs have no SNR axis to sweep")
        elif not math.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite; use noiseless=true for zero noise")
        if self.kind.is_lms and self.n_iters != self.m:
            raise ValueError(f"LMS experiments run one pass: n_iters ({self.n_iters}) must equal m ({self.m})")
        if not self.kind.is_lms and self.a_policy != "uniform":
            raise ValueError("Kaczmarz experiments use the uniform a-policy")
        return self

    def snr_grid(self) -> List[float]:
        """SNR points in dB; a single point for iteration experiments"""
        if not self.kind.is_sweep:
            return [math.inf if self.noiseless else self.snr_db]
        start, stop, step = self.snr_range
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(count)]


@dataclass
class ResultTable:
    """Average squared error per estimator along an axis (iteration k or SNR in dB)"""
    axis_name: str
    axis: Vector
    columns: Dict[str, Vector]
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for name, values in self.columns.items():
            if len(values) != len(self.axis):
                raise ValueError(f"column {name} has {len(values)} entries, axis has {len(self.axis)}")

    @property
    def final(self) -> Dict[str, float]:
        return {name: float(values[-1]) for name, values in self.columns.items()}


def paper_preset(name: str, trials: Optional[int] = None, full_scale: bool = False,
                 master_seed: Optional[int] = None) -> ExperimentConfig:
    """
    Experiment configuration of a named preset (fig2a, fig2b, fig4a, fig4b).

    Args:
        name: preset name from config.json
        trials: trial-count override
        full_scale: use the full-scale trial count instead of the desk-scale default
        master_seed: seed override
    """
    table = presets()
    if name not in table:
        raise UnknownPreset(name, table.keys())
    base = defaults()
    count = trials if trials is not None else (base["full_scale_trials"] if full_scale else base["trials"])
    return ExperimentConfig(
        **table[name],
        trials=count,
        v_th=base["v_th"],
        cov_scale=base["cov_scale"],
        prior_mean=base["prior_mean"],
        a_policy=base["a_policy"],
        geometric_ratio=base["geometric_ratio"],
        master_seed=base["master_seed"] if master_seed is None else master_seed,
        preset=name,
    )


def build_prior(config: ExperimentConfig) -> GaussianPrior:
    if config.cov_file is None:
        return GaussianPrior.isotropic(config.p, config.cov_scale, config.prior_mean)
    try:
        cov = np.loadtxt(config.cov_file, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise IoFailure(f"cannot read covariance file {config.cov_file}: {exc}", config.cov_file) from exc
    return GaussianPrior.from_covariance(np.full(config.p, config.prior_mean), cov, repair=True)


def _squared_error(estimate: Vector, theta: Vector) -> float:
    error = estimate - theta
    return float(error @ error)


def _draw_problem(config: ExperimentConfig, prior: GaussianPrior,
                  trial_index: int) -> Tuple[LinearModel, Vector, np.random.SeedSequence]:
    model_seq, theta_seq, noise_seq = trial_seed(config.master_seed, TRIAL_KEY, trial_index).spawn(3)
    if not config.redraw_h:
        model_seq = trial_seed(config.master_seed, FIXED_MODEL_KEY)
    if config.kind.is_lms:
        signal = np.random.default_rng(model_seq).random(config.m)
        model = LinearModel(convolution_matrix(signal, config.p))
    else:
        model = generate_random_model(config.m, config.p, model_seq)
    if config.theta_source == "uniform":
        theta = sample_uniform_parameter(config.p, theta_seq)
    else:
        theta = sample_parameter(prior, theta_seq)
    return model, theta, noise_seq


def run_trial(config: ExperimentConfig, prior: GaussianPrior, trial_index: int) -> Dict[str, Vector]:
    """
    Squared errors of one trial.

    Returns a dict with one array per estimator column (length N+1 for
    iteration experiments, one entry per SNR point for sweeps) and the
    analytic oracle MSEs under "analytic_map" / "analytic_ls".
    """
    model, theta, noise_seq = _draw_problem(config, prior, trial_index)
    plain_name, ka_name = config.kind.columns[2:]
    snr_points = config.snr_grid()
    results: Dict[str, List] = {name: [] for name in (*config.kind.columns, "analytic_map", "analytic_ls")}

    for snr_db in snr_points:
        noise = calibrate_noise(model, prior, snr_db)
        # same noise stream at every SNR point of a sweep
        observation = observe(model, theta, noise, noise_seq)
        if config.kind.is_lms:
            N = config.m
            plain = run_lms(zip(model.H, observation.y), noise, N, theta_true=theta)
            ka = run_ka_lms(zip(model.H, observation.y), noise, prior, N,
                            a_policy=a_policy_from_name(config.a_policy, N, config.geometric_ratio),
                            theta_true=theta)
        else:
            plain = run_kaczmarz(model, observation, noise, config.n_iters, config.v_th, record_trace=True)
            ka = run_ka_kaczmarz(model, observation, noise, prior, uniform_weights(config.m),
                                 config.n_iters, config.v_th, record_trace=True)
        results[plain_name].append(plain.trace.squared_errors)
        results[ka_name].append(ka.trace.squared_errors)
        results["ls"].append(_squared_error(ls_estimate(model, observation, noise), theta))
        results["map"].append(_squared_error(map_estimate(model, observation, noise, prior), theta))
        results["analytic_map"].append(map_bayes_mse(model, noise, prior))
        results["analytic_ls"].append(ls_bayes_mse(model, noise))

    out: Dict[str, Vector] = {}
    if config.kind.is_sweep:
        for name, values in results.items():
            if name in (plain_name, ka_name):
                out[name] = np.array([trace[-1] for trace in values])
            else:
                out[name] = np.array(values, dtype=np.float64)
    else:
        length = len(results[plain_name][0])
        for name, values in results.items():
            if name in (plain_name, ka_name):
                out[name] = np.asarray(values[0], dtype=np.float64)
            elif name in ("ls", "map"):
                out[name] = np.full(length, values[0])
            else:
                out[name] = np.array(values, dtype=np.float64)
    return out


def _trial_results(config: ExperimentConfig, prior: GaussianPrior, trial_indices: List[int],
                   workers: int) -> Iterator[Dict[str, Vector]]:
    worker = partial(run_trial, config, prior)
    if workers <= 1 or len(trial_indices) <= 1:
        yield from map(worker, trial_indices)
        return
    chunksize = max(1, len(trial_indices) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as executor:
        yield from executor.map(worker, trial_indices, chunksize=chunksize)


def accumulate_trials(config: ExperimentConfig, trial_indices: Iterable[int], workers: int = 1,
                      progress: bool = False, prior: Optional[GaussianPrior] = None) -> Dict[str, Vector]:
    """
    Sum per-trial results over the given trial indices, in the given order.

    Raises:
        TrialFailed: wrapping the solver error of the first failing trial
    """
    indices = list(trial_indices)
    prior = prior if prior is not None else build_prior(config)
    totals: Dict[str, Vector] = {}
    results = _trial_results(config, prior, indices, workers)
    if progress:
        results = tqdm(results, total=len(indices), desc=config.preset or config.kind.value, unit="trial")
    completed = 0
    try:
        for result in results:
            for name, values in result.items():
                if name in totals:
                    totals[name] = totals[name] + values
                else:
                    totals[name] = values.copy()
            completed += 1
    except KASolveError as exc:
        raise TrialFailed(indices[completed], exc) from exc
    return totals


def run_experiment(config: ExperimentConfig, workers: int = 1, progress: bool = False) -> ResultTable:
    """Average squared errors over config.trials trials"""
    logger.info("running %s: %d trials, master seed %d, %d worker(s)",
                config.preset or config.kind.value, config.trials, config.master_seed, workers)
    prior = build_prior(config)
    totals = accumulate_trials(config, range(config.trials), workers, progress, prior)

    if config.kind.is_sweep:
        axis_name, axis = "snr_db", np.array(config.snr_grid())
    else:
        axis_name, axis = "k", np.arange(config.n_iters + 1, dtype=np.float64)
    columns = {name: totals[name] / config.trials for name in config.kind.columns}
    metadata = {
        "kasolve_version": __version__,
        "config": config.model_dump(mode="json"),
        "master_seed": config.master_seed,
        "trials": config.trials,
        "snr_definition": output_settings()["snr_definition"],
        "h_mode": "redraw per trial" if config.redraw_h else "fixed",
        "analytic": {
            "map": (totals["analytic_map"] / config.trials).tolist(),
            "ls": (totals["analytic_ls"] / config.trials).tolist(),
        },
    }
    table = ResultTable(axis_name, axis, columns, metadata)
    logger.info("finished %s: final %s", config.preset or config.kind.value,
                ", ".join(f"{k}={v:.4g}" for k, v in table.final.items()))
    return table


def metadata_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.stem + output_settings()["metadata_suffix"])


def format_number(value: float) -> str:
    """Fixed-precision, locale-independent number text"""
    return f"{value:.{output_settings()['float_digits']}g}"


def write_table(table: ResultTable, path: Union[str, Path]) -> None:
    """Write the table as CSV plus a JSON metadata sidecar next to it"""
    path = Path(path)
    names = list(table.columns)
    try:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow([table.axis_name, *names])
            for row, axis_value in enumerate(table.axis):
                writer.writerow([format_number(axis_value), *(format_number(table.columns[n][row]) for n in names)])
        with open(metadata_path(path), "w", encoding="utf-8") as handle:
            json.dump({**table.metadata, "axis": table.axis_name, "columns": names},
                      handle, indent=2, sort_keys=True)
            handle.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write results to {path}: {exc}", str(path)) from exc
    logger.info("wrote %s (%d rows)", path, len(table.axis))


def read_table(path: Union[str, Path]) -> ResultTable:
    """Parse a CSV written by write_table (and its sidecar when present)"""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
        sidecar = metadata_path(path)
        metadata = json.loads(sidecar.read_text(encoding="utf-8")) if sidecar.exists() else {}
    except (OSError, json.JSONDecodeError) as exc:
        raise IoFailure(f"cannot read results from {path}: {exc}", str(path)) from exc
    if not rows:
        raise IoFailure(f"results file {path} is empty", str(path))
    header, body = rows[0], rows[1:]
    values = np.array([[float(cell) for cell in row] for row in body], dtype=np.float64).reshape(len(body), len(header))
    columns = {name: values[:, j + 1].copy() for j, name in enumerate(header[1:])}
    return ResultTable(header[0], values[:, 0].copy(), columns, metadata)


def config_from_metadata(path: Union[str, Path]) -> ExperimentConfig:
    """Configuration stored in a metadata sidecar, for replaying a run"""
    try:
        stored = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IoFailure(f"cannot read metadata {path}: {exc}", str(path)) from exc
    return ExperimentConfig.model_validate(stored["config"])
