"""
Command-line front end.

    python -m kasolve preset --name fig2a --trials 1000 --seed 42 --out fig2a.csv
    python -m kasolve experiment --kind kaczmarz-snr --snr-range -10 10 2 --out sweep.csv
    python -m kasolve solve-kaczmarz --problem problem.csv --cov-scale 0.1
    python -m kasolve solve-lms --stream stream.csv --taps 5
    python -m kasolve replay --meta fig2a.meta.json --out fig2a_again.csv

Exit codes: 0 success, 1 usage or I/O error, 2 numerical error.
"""

import argparse
import logging
import sys
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from .batch import ls_estimate, map_estimate
from .errors import IoFailure, KASolveError, NumericalError, UnknownPreset
from .harness import (
    ExperimentConfig,
    ExperimentKind,
    config_from_metadata,
    format_number,
    paper_preset,
    run_experiment,
    write_table,
)
from .kaczmarz import run_ka_kaczmarz, run_kaczmarz
from .lms import a_policy_from_name, run_ka_lms, run_lms
from .model import GaussianPrior, LinearModel, NoiseModel, Observation, convolution_rows, uniform_weights
from .settings import configure_logging, default_workers, defaults, presets

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2

DEFAULT_SWEEP = (-10.0, 10.0, 2.0)


class UsageError(Exception):
    """Invalid command line"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _add_run_flags(parser: argparse.ArgumentParser, base: dict) -> None:
    parser.add_argument("--trials", type=int, default=None,
                        help=f"number of Monte-Carlo trials (default: {base['trials']})")
    parser.add_argument("--seed", type=int, default=base["master_seed"],
                        help="master seed (default: %(default)s)")
    parser.add_argument("--out", default=None, help="output CSV path; metadata goes next to it (required)")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: $KA_SOLVE_WORKERS or CPU count)")
    parser.add_argument("--progress", action="store_true", help="show a progress bar over trials")


def _add_prior_flags(parser: argparse.ArgumentParser, base: dict) -> None:
    parser.add_argument("--prior-mean", type=float, default=base["prior_mean"],
                        help="prior mean, filled into every component (default: %(default)s)")
    parser.add_argument("--cov-scale", type=float, default=base["cov_scale"],
                        help="prior covariance C = scale * I (default: %(default)s)")
    parser.add_argument("--cov-file", default=None,
                        help="CSV with a p x p prior covariance, overrides --cov-scale (default: none)")


def build_parser() -> argparse.ArgumentParser:
    base = defaults()
    parser = _Parser(prog="kasolve", description="Knowledge-Aided Kaczmarz and LMS estimators")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("--quiet", action="store_true", help="warnings only")
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    preset = commands.add_parser("preset", help="run a named experiment preset",
                                 description=f"Run a named experiment preset ({', '.join(presets())}).")
    preset.add_argument("--name", required=True, help="preset name")
    preset.add_argument("--full-scale", action="store_true",
                        help=f"use {base['full_scale_trials']} trials unless --trials is given")
    _add_run_flags(preset, base)

    experiment = commands.add_parser("experiment", help="run an explicit Monte-Carlo experiment")
    experiment.add_argument("--kind", default=ExperimentKind.KACZMARZ_ITERATIONS.value,
                            choices=[kind.value for kind in ExperimentKind],
                            help="experiment kind (default: %(default)s)")
    experiment.add_argument("--m", type=int, default=50, help="rows / samples (default: %(default)s)")
    experiment.add_argument("--p", type=int, default=5, help="parameters / taps (default: %(default)s)")
    experiment.add_argument("--n-iters", type=int, default=None,
                            help="iterations N (default: 500 for Kaczmarz, m for LMS)")
    experiment.add_argument("--snr", type=float, default=0.0, help="SNR in dB (default: %(default)s)")
    experiment.add_argument("--snr-range", type=float, nargs=3, metavar=("START", "STOP", "STEP"),
                            default=None, help="SNR sweep in dB (default for sweeps: -10 10 2)")
    experiment.add_argument("--noiseless", action="store_true", help="run without measurement noise")
    experiment.add_argument("--vth", type=float, default=base["v_th"],
                            help="residual trigger threshold v_th (default: %(default)s)")
    _add_prior_flags(experiment, base)
    experiment.add_argument("--a-policy", choices=["uniform", "geometric"], default=base["a_policy"],
                            help="prior weights a_k (default: %(default)s)")
    experiment.add_argument("--geometric-ratio", type=float, default=base["geometric_ratio"],
                            help="ratio r of the geometric a-policy (default: %(default)s)")
    experiment.add_argument("--fixed-h", action="store_true",
                            help="one H (or input signal) for all trials instead of redrawing")
    experiment.add_argument("--theta-source", choices=["prior", "uniform"], default="prior",
                            help="draw theta_T from the prior or uniform on [0,1) (default: %(default)s)")
    _add_run_flags(experiment, base)

    solve_k = commands.add_parser("solve-kaczmarz", help="solve a problem file with (KA-)Kaczmarz")
    solve_k.add_argument("--problem", required=True, help="CSV, one line per row: h_1,...,h_p,y")
    solve_k.add_argument("--n-iters", type=int, default=500, help="iterations N (default: %(default)s)")
    solve_k.add_argument("--vth", type=float, default=base["v_th"],
                         help="residual trigger threshold v_th (default: %(default)s)")
    solve_k.add_argument("--noise-var", type=float, default=1.0,
                         help="noise variance sigma^2 of every row (default: %(default)s)")
    _add_prior_flags(solve_k, base)
    solve_k.add_argument("--no-prior", action="store_true", help="classical Kaczmarz")
    solve_k.add_argument("--oracle", action="store_true", help="also print the MAP and LS closed forms")

    solve_l = commands.add_parser("solve-lms", help="identify an impulse response from an x/y stream")
    solve_l.add_argument("--stream", required=True, help="CSV, one line per sample: x,y")
    solve_l.add_argument("--taps", type=int, default=5, help="filter length p (default: %(default)s)")
    solve_l.add_argument("--noise-var", type=float, default=1.0,
                         help="noise variance sigma^2 of every sample (default: %(default)s)")
    _add_prior_flags(solve_l, base)
    solve_l.add_argument("--a-policy", choices=["uniform", "geometric"], default=base["a_policy"],
                         help="prior weights a_k (default: %(default)s)")
    solve_l.add_argument("--geometric-ratio", type=float, default=base["geometric_ratio"],
                         help="ratio r of the geometric a-policy (default: %(default)s)")
    solve_l.add_argument("--no-prior", action="store_true", help="classical LMS")

    replay = commands.add_parser("replay", help="re-run the configuration stored in a metadata sidecar")
    replay.add_argument("--meta", required=True, help="metadata file written next to a result CSV")
    replay.add_argument("--out", required=True, help="output CSV path")
    replay.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: $KA_SOLVE_WORKERS or CPU count)")
    replay.add_argument("--progress", action="store_true", help="show a progress bar over trials")
    return parser


def _workers(args: argparse.Namespace) -> int:
    if args.workers is None:
        return default_workers()
    if args.workers < 1:
        raise UsageError(f"--workers must be >= 1, got {args.workers}")
    return args.workers


def _prior_from_args(args: argparse.Namespace, p: int) -> GaussianPrior:
    if args.cov_file is None:
        return GaussianPrior.isotropic(p, args.cov_scale, args.prior_mean)
    cov = _load_csv(args.cov_file, "covariance")
    return GaussianPrior.from_covariance(np.full(p, args.prior_mean), cov, repair=True)


def _load_csv(path: str, what: str) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise IoFailure(f"cannot read {what} file {path}: {exc}", path) from exc


def _print_vector(label: str, values: np.ndarray) -> None:
    print(f"{label}: " + ",".join(format_number(v) for v in values))


def _run_and_write(config: ExperimentConfig, args: argparse.Namespace) -> int:
    if args.out is None:
        raise UsageError("--out is required")
    table = run_experiment(config, workers=_workers(args), progress=args.progress)
    write_table(table, args.out)
    print(f"{config.preset or config.kind.value}: {len(table.axis)} rows written to {args.out}")
    for name, value in table.final.items():
        print(f"  final {name}: {value:.6g}")
    return EXIT_OK


def _cmd_preset(args: argparse.Namespace) -> int:
    config = paper_preset(args.name, trials=args.trials, full_scale=args.full_scale, master_seed=args.seed)
    return _run_and_write(config, args)


def _cmd_experiment(args: argparse.Namespace) -> int:
    kind = ExperimentKind(args.kind)
    n_iters = args.n_iters if args.n_iters is not None else (args.m if kind.is_lms else 500)
    snr_range = args.snr_range
    if kind.is_sweep and snr_range is None:
        snr_range = DEFAULT_SWEEP
    config = ExperimentConfig(
        kind=kind,
        m=args.m,
        p=args.p,
        n_iters=n_iters,
        trials=args.trials if args.trials is not None else defaults()["trials"],
        snr_db=args.snr,
        snr_range=tuple(snr_range) if snr_range is not None else None,
        noiseless=args.noiseless,
        v_th=args.vth,
        prior_mean=args.prior_mean,
        cov_scale=args.cov_scale,
        cov_file=args.cov_file,
        master_seed=args.seed,
        a_policy=args.a_policy,
        geometric_ratio=args.geometric_ratio,
        redraw_h=not args.fixed_h,
        theta_source=args.theta_source,
    )
    return _run_and_write(config, args)


def _cmd_replay(args: argparse.Namespace) -> int:
    return _run_and_write(config_from_metadata(args.meta), args)


def _cmd_solve_kaczmarz(args: argparse.Namespace) -> int:
    data = _load_csv(args.problem, "problem")
    if data.shape[1] < 2:
        raise UsageError(f"problem file needs at least two columns (h and y), got {data.shape[1]}")
    model = LinearModel(data[:, :-1])
    observation = Observation(data[:, -1])
    noise = NoiseModel.homoscedastic(model.m, args.noise_var)

    if args.no_prior:
        report = run_kaczmarz(model, observation, noise, args.n_iters, args.vth)
        _print_vector("kaczmarz", report.estimate)
    else:
        prior = _prior_from_args(args, model.p)
        report = run_ka_kaczmarz(model, observation, noise, prior, uniform_weights(model.m),
                                 args.n_iters, args.vth)
        _print_vector("ka_kaczmarz", report.estimate)
        if args.oracle:
            _print_vector("map", map_estimate(model, observation, noise, prior))
    if args.oracle:
        _print_vector("ls", ls_estimate(model, observation, noise))
    logger.info("%d iterations, decay started at %s", report.iterations_run, report.decay_started_at)
    return EXIT_OK


def _cmd_solve_lms(args: argparse.Namespace) -> int:
    data = _load_csv(args.stream, "stream")
    if data.shape[1] != 2:
        raise UsageError(f"stream file needs exactly two columns (x, y), got {data.shape[1]}")
    N = data.shape[0]
    noise = NoiseModel.homoscedastic(N, args.noise_var)
    stream = zip(convolution_rows(data[:, 0], args.taps), data[:, 1])

    if args.no_prior:
        report = run_lms(stream, noise, N)
        _print_vector("lms", report.estimate)
    else:
        prior = _prior_from_args(args, args.taps)
        policy = a_policy_from_name(args.a_policy, N, args.geometric_ratio)
        report = run_ka_lms(stream, noise, prior, N, a_policy=policy)
        _print_vector("ka_lms", report.estimate)
    return EXIT_OK


COMMANDS = {
    "preset": _cmd_preset,
    "experiment": _cmd_experiment,
    "replay": _cmd_replay,
    "solve-kaczmarz": _cmd_solve_kaczmarz,
    "solve-lms": _cmd_solve_lms,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # --help
        return EXIT_OK if not exc.code else EXIT_USAGE

    try:
        configure_logging("DEBUG" if args.verbose else "WARNING" if args.quiet else None)
        return COMMANDS[args.command](args)
    except (UsageError, UnknownPreset, IoFailure, ValidationError, ValueError) as exc:
        print(f"kasolve: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"kasolve: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except KASolveError as exc:
        print(f"kasolve: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
