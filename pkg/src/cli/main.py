"""Command-line entry point: ``belm-lab <command> [flags]``.

Exit codes: 0 on success, 2 on a configuration or usage error, 3 on a
numerical failure (singular system, non-finite state), 1 on anything else.
"""

import argparse
import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..analysis.reports import (
    coefficient_frame,
    stability_frame,
    write_report,
    write_sidecar,
)
from ..analysis.studies import (
    convergence_study,
    lte_study,
    perturbation_study,
    roundtrip_study,
)
from ..belm.coeffs import stability_check
from ..belm.config import SolverConfig
from ..belm.exceptions import ConfigurationError, NumericalFailureError
from ..belm.predictor import (
    AnalyticProblem,
    GaussianProblem,
    NoisePredictor,
    PolynomialProblem,
    SyntheticPredictor,
    ZeroPredictor,
)
from ..belm.samplers import InversionSeed, invert, sample
from ..belm.schedule import (
    NoiseSchedule,
    grid_of,
    load_schedule,
    sub_schedule,
    vp_linear_schedule,
)
from .run_config import COMMANDS, PROBLEMS, RunConfig, resolve_run_config


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

DEFAULT_LTE_STEPS: Tuple[float, ...] = (0.04, 0.02, 0.01, 0.005)

Outcome = Tuple[pd.DataFrame, str]


def _int_list(text: str) -> List[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def _float_list(text: str) -> List[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    """Parser with one subcommand per study; every flag defaults to None."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config overriding all flags")
    common.add_argument("--method", help="ddim, edict, bdia, obelm2 or obelm3")
    common.add_argument("--gamma", type=float, help="BDIA gamma in [0, 1]")
    common.add_argument("--p", type=float, help="EDICT mixing weight in (0, 1)")
    common.add_argument("--schedule-file", help="JSON schedule with alphas, sigmas")
    common.add_argument("--train-steps", type=int, help="training table length")
    common.add_argument("--beta-start", type=float)
    common.add_argument("--beta-end", type=float)
    common.add_argument("--steps", type=int, help="sampling steps N")
    common.add_argument("--ns", type=_int_list, help="comma-separated step counts")
    common.add_argument("--hs", type=_float_list, help="comma-separated step sizes")
    common.add_argument("--k", type=int, help="steps of the multistep rule")
    common.add_argument("--problem", choices=PROBLEMS)
    common.add_argument("--s", type=float, help="Gaussian data std")
    common.add_argument("--poly", type=_float_list, help="ascending coefficients")
    common.add_argument("--predictor-seed", type=int)
    common.add_argument("--dim", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--delta", type=float, help="perturbation size")
    common.add_argument("--threads", type=int)
    common.add_argument("--output", help="report path")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--log-level")

    parser = argparse.ArgumentParser(
        prog="belm-lab",
        description="Bidirectional explicit linear multistep samplers",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        subparsers.add_parser(command, parents=[common])
    return parser


def build_training_schedule(config: RunConfig) -> NoiseSchedule:
    if config.schedule_file:
        return load_schedule(config.schedule_file)
    return vp_linear_schedule(config.train_steps, config.beta_start, config.beta_end)


def build_predictor(config: RunConfig, schedule: NoiseSchedule) -> NoisePredictor:
    if config.problem == "gaussian":
        return GaussianProblem(s=config.s, schedule=schedule, d=config.dim)
    if config.problem == "polynomial":
        return PolynomialProblem(coeffs=config.poly, schedule=schedule, d=config.dim)
    if config.problem == "synthetic":
        return SyntheticPredictor(
            seed=config.predictor_seed, schedule=schedule, d=config.dim
        )
    return ZeroPredictor(dim=config.dim)


def _analytic(predictor: NoisePredictor, command: str) -> AnalyticProblem:
    if not isinstance(predictor, AnalyticProblem):
        raise ConfigurationError(
            f"{command} needs a problem with an exact solution (gaussian or polynomial)"
        )
    return predictor


def _draw(config: RunConfig, predictor: NoisePredictor, index: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(config.seed))
    if isinstance(predictor, GaussianProblem):
        return predictor.sample_marginal(rng, index)
    return rng.standard_normal(config.dim)


class Runner:
    """Dispatches a resolved run to the matching study."""

    def __init__(self, config: RunConfig, solver_config: SolverConfig) -> None:
        self.config = config
        self.solver_config = solver_config
        self.training = build_training_schedule(config)
        if config.steps > self.training.N:
            raise ConfigurationError(
                f"steps={config.steps} exceeds the {self.training.N}-step table"
            )
        self.schedule = sub_schedule(self.training, config.steps)
        self.predictor = build_predictor(config, self.schedule)
        self.commands: Dict[str, Callable[[], Outcome]] = {
            "coeffs": self.coeffs,
            "sample": self.sample,
            "invert": self.invert,
            "roundtrip": self.roundtrip,
            "convergence": self.convergence,
            "lte": self.lte,
            "stability": self.stability,
            "perturbation": self.perturbation,
        }

    def run(self) -> Outcome:
        return self.commands[self.config.command]()

    def coeffs(self) -> Outcome:
        hs = self.config.hs or tuple(float(h) for h in grid_of(self.schedule).h)
        frame = coefficient_frame(hs, self.config.k, self.solver_config)
        worst = float(frame["residual"].max())
        return frame, (
            f"coeffs: k={self.config.k} rows={len(frame)} residual={worst:.3e}"
        )

    def sample(self) -> Outcome:
        method = self.config.methods()[0]
        x_top = _draw(self.config, self.predictor, self.schedule.N)
        trajectory = sample(
            method, self.predictor, self.schedule, x_top, config=self.solver_config
        )
        x0_norm = float(np.max(np.abs(trajectory.x0)))
        return trajectory.to_frame(), (
            f"sample: {method.label} N={self.schedule.N} max|x0|={x0_norm:.6g}"
        )

    def invert(self) -> Outcome:
        method = self.config.methods()[0]
        x0 = _draw(self.config, self.predictor, 0)
        trajectory = invert(
            method,
            self.predictor,
            self.schedule,
            InversionSeed(x0=x0),
            config=self.solver_config,
        )
        return trajectory.to_frame(), (
            f"invert: {method.label} N={self.schedule.N} "
            f"approximate={trajectory.approximate}"
        )

    def roundtrip(self) -> Outcome:
        report = roundtrip_study(
            self.config.methods(),
            self.predictor,
            self.schedule,
            trials=self.config.trials,
            seed=self.config.seed,
            dim=self.config.dim,
            config=self.config.study_config(),
            solver_config=self.solver_config,
        )
        worst = max(report.max_rel_error_by_method().values(), default=float("nan"))
        return report.to_frame(), (
            f"roundtrip: rows={len(report.rows)} max_rel_error={worst:.3e}"
        )

    def convergence(self) -> Outcome:
        method = self.config.methods()[0]
        report = convergence_study(
            method,
            _analytic(self.predictor, "convergence"),
            self.config.ns,
            config=self.config.study_config(),
            solver_config=self.solver_config,
        )
        return report.to_frame(), (
            f"convergence: {report.method} fitted_order={report.fitted_order}"
        )

    def lte(self) -> Outcome:
        method = self.config.methods()[0]
        report = lte_study(
            method,
            _analytic(self.predictor, "lte"),
            self.config.hs or DEFAULT_LTE_STEPS,
            config=self.config.study_config(),
            solver_config=self.solver_config,
        )
        return report.to_frame(), (
            f"lte: {report.method} fitted_order={report.fitted_order}"
        )

    def stability(self) -> Outcome:
        if self.config.k not in (2, 3):
            raise ConfigurationError(
                f"stability supports k = 2 or 3, got {self.config.k}"
            )
        grid = grid_of(self.schedule)
        report = stability_check(grid, k=self.config.k, config=self.solver_config)
        return stability_frame(report, grid), (
            f"stability: k={report.k} eta={report.eta:.6g} passed={report.passed}"
        )

    def perturbation(self) -> Outcome:
        method = self.config.methods()[0]
        report = perturbation_study(
            method,
            self.predictor,
            self.schedule,
            delta=self.config.delta,
            trials=self.config.trials,
            seed=self.config.seed,
            dim=self.config.dim,
            config=self.config.study_config(),
            solver_config=self.solver_config,
        )
        return report.to_frame(), (
            f"perturbation: {report.method} N={report.N} K_hat={report.k_hat:.6g}"
        )


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run one command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code not in (0, None) else EXIT_OK

    flags = {k: v for k, v in vars(args).items() if k != "config"}
    try:
        config = resolve_run_config(flags, args.config)
        logging.basicConfig(
            level=config.log_level,
            format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        )
        logger.info(f"Running {config.command} with method {config.method}")

        frame, summary = Runner(config, SolverConfig()).run()
        output = write_report(frame, config.output_path(), config.format)
        write_sidecar(output, config.to_dict())
        print(summary)
        return EXIT_OK

    except NumericalFailureError as e:
        logger.error(f"Numerical failure: {e}")
        print(f"Numerical failure: {e}")
        return EXIT_NUMERICAL

    except ValueError as e:
        logger.error(f"Configuration error: {e}")
        print(f"Configuration error: {e}")
        return EXIT_CONFIG

    except Exception as e:
        logger.exception(f"Unexpected error during {args.command}: {e}")
        return EXIT_UNEXPECTED


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
