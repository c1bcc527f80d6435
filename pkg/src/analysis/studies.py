"""Numerical studies: global convergence, local error, roundtrip and perturbation.

Every study draws its random inputs up front from a counter-based generator
seeded by the caller, so reports are bit-identical for a given seed no matter
how many worker threads run the grid points.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np
import pandas as pd

from ..belm.coeffs import belm_step_xbar, edict_interleaved_grid, edict_phase_coeffs
from ..belm.config import DEFAULT_SOLVER_CONFIG, SolverConfig
from ..belm.exceptions import (
    ConfigurationError,
    InsufficientDataError,
    NumericalFailureError,
)
from ..belm.predictor import AnalyticProblem, NoisePredictor
from ..belm.samplers import (
    BDIA,
    DDIM,
    EDICT,
    OBELM2,
    OBELM3,
    InversionSeed,
    Method,
    bdia_step,
    ddim_invert_step,
    ddim_step,
    invert,
    obelm2_step,
    obelm3_step,
    sample,
)
from ..belm.schedule import NoiseSchedule, vp_from_sbar
from .config import StudyConfig
from .reports import log_summary


logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def _ordered_map(
    fn: Callable[[T], R], items: Sequence[T], config: StudyConfig
) -> List[R]:
    """Map over items on up to THREADS workers; results keep input order."""
    if config.THREADS == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(config.THREADS, len(items))) as pool:
        return list(pool.map(fn, items))


def _last_row_only(length: int, value: Optional[float]) -> List[float]:
    column = [np.nan] * length
    if length and value is not None:
        column[-1] = value
    return column


def _format_order(order: Optional[float]) -> str:
    return "skipped" if order is None else f"{order:.4f}"


def _relative_error(actual: np.ndarray, expected: np.ndarray) -> float:
    scale = float(np.max(np.abs(expected)))
    diff = float(np.max(np.abs(actual - expected)))
    return diff / scale if scale > 0 else diff


def _state_dim(predictor: NoisePredictor, dim: Optional[int]) -> int:
    resolved = predictor.dim if predictor.dim is not None else dim
    if resolved is None or resolved < 1:
        raise ConfigurationError(
            "state dimension unknown: pass dim for predictors without one"
        )
    return int(resolved)


def fit_order(
    pairs: Sequence[Tuple[float, float]], config: SolverConfig = DEFAULT_SOLVER_CONFIG
) -> float:
    """Least-squares slope of log(error) against log(h).

    Errors below ROUNDING_FLOOR_FACTOR * machine epsilon are excluded.

    Raises:
        ConfigurationError: If a step size is not positive
        NumericalFailureError: If an error is not finite
        InsufficientDataError: If fewer than 3 pairs survive the rounding floor
    """
    floor = config.ROUNDING_FLOOR_FACTOR * float(np.finfo(np.float64).eps)
    usable: List[Tuple[float, float]] = []
    for h, error in pairs:
        if not (np.isfinite(h) and h > 0):
            raise ConfigurationError(
                f"step size must be positive and finite, got {h!r}"
            )
        if not np.isfinite(error):
            raise NumericalFailureError(f"error at h={h:g} is not finite")
        if error >= floor:
            usable.append((float(h), float(error)))
    if len(usable) < 3:
        raise InsufficientDataError(
            f"order fit needs 3 errors above the rounding floor {floor:.3g}, "
            f"got {len(usable)} of {len(pairs)}"
        )
    logs = np.log(np.asarray(usable))
    slope, _ = np.polyfit(logs[:, 0], logs[:, 1], 1)
    return float(slope)


def _try_fit(
    label: str, pairs: Sequence[Tuple[float, float]], config: SolverConfig
) -> Optional[float]:
    try:
        return fit_order(pairs, config)
    except InsufficientDataError as e:
        logger.info(f"Order fit skipped for {label}: {e}")
        return None


# Global convergence


@dataclass(frozen=True)
class ConvergenceRow:
    N: int
    h_max: float
    global_error: float
    max_grid_error: float


@dataclass(frozen=True)
class ConvergenceReport:
    """Error at x_0 against the exact flow for a sequence of step counts."""

    method: str
    problem: str
    rows: Tuple[ConvergenceRow, ...]
    fitted_order: Optional[float]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "method": self.method,
                "problem": self.problem,
                "N": [r.N for r in self.rows],
                "h_max": [r.h_max for r in self.rows],
                "global_error": [r.global_error for r in self.rows],
                "max_grid_error": [r.max_grid_error for r in self.rows],
                "fitted_order": _last_row_only(len(self.rows), self.fitted_order),
            }
        )


def smooth_schedule(n: int, sbar_max: float) -> NoiseSchedule:
    """VP schedule with sbar_i = sbar_max * (i / n)^2; steps grow toward noise."""
    sbar = sbar_max * (np.arange(n + 1, dtype=np.float64) / n) ** 2
    return vp_from_sbar(sbar)


def _exact_states(problem: AnalyticProblem, schedule: NoiseSchedule) -> np.ndarray:
    return np.array(
        [
            schedule.alpha(i) * problem.exact_xbar(float(schedule.sbar[i]))
            for i in range(schedule.N + 1)
        ]
    )


def _convergence_point(
    method: Method,
    problem: AnalyticProblem,
    n: int,
    config: StudyConfig,
    solver_config: SolverConfig,
) -> ConvergenceRow:
    schedule = smooth_schedule(n, config.CONVERGENCE_SBAR_MAX)
    bound = problem.with_schedule(schedule)
    exact = _exact_states(bound, schedule)
    try:
        trajectory = sample(method, bound, schedule, exact[n], config=solver_config)
    except NumericalFailureError as e:
        raise NumericalFailureError(f"{method.label} failed at N={n}: {e}") from e

    errors = np.max(np.abs(trajectory.states - exact), axis=1)
    if not np.all(np.isfinite(errors)):
        raise NumericalFailureError(f"{method.label} error is not finite at N={n}")
    return ConvergenceRow(
        N=n,
        h_max=float(np.max(np.diff(schedule.sbar))),
        global_error=float(errors[0]),
        max_grid_error=float(np.max(errors)),
    )


def convergence_study(
    method: Method,
    problem: AnalyticProblem,
    Ns: Sequence[int],
    config: Optional[StudyConfig] = None,
    solver_config: SolverConfig = DEFAULT_SOLVER_CONFIG,
) -> ConvergenceReport:
    """Measure the global error at x_0 over a sequence of refined grids.

    Each N uses ``smooth_schedule(N, CONVERGENCE_SBAR_MAX)``. Sampling starts
    from the exact state at the noise end and x_0 is compared with the exact
    solution of the flow.

    Args:
        method: Sampler variant
        problem: Problem with a known exact solution
        Ns: Strictly increasing step counts, each at least MIN_CONVERGENCE_STEPS
        config: Study settings
        solver_config: Solver tolerances and caps

    Returns:
        ConvergenceReport; ``fitted_order`` is None when every error sits at
        rounding level

    Raises:
        ConfigurationError: If Ns is too short, unsorted or too coarse
        NumericalFailureError: If a run diverges, naming the method and N
    """
    config = config or StudyConfig()
    ns = [int(n) for n in Ns]
    if len(ns) < 3:
        raise ConfigurationError(
            f"convergence study needs at least 3 step counts, got {ns}"
        )
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ConfigurationError(f"step counts must be strictly increasing, got {ns}")
    if ns[0] < config.MIN_CONVERGENCE_STEPS:
        raise ConfigurationError(
            f"step counts must be at least {config.MIN_CONVERGENCE_STEPS}, got {ns[0]}"
        )

    rows = _ordered_map(
        lambda n: _convergence_point(method, problem, n, config, solver_config),
        ns,
        config,
    )
    order = _try_fit(
        method.label, [(r.h_max, r.global_error) for r in rows], solver_config
    )
    report = ConvergenceReport(
        method=method.label,
        problem=problem.problem_id,
        rows=tuple(rows),
        fitted_order=order,
    )
    log_summary(
        "Convergence Summary",
        [
            f"Method: {report.method}",
            f"Problem: {report.problem}",
            f"Step counts: {', '.join(str(n) for n in ns)}",
            f"Finest error: {rows[-1].global_error:.6g}",
            f"Fitted order: {_format_order(order)}",
        ],
    )
    return report


# Local truncation error


@dataclass(frozen=True)
class LteRow:
    h: float
    error: float


@dataclass(frozen=True)
class LteReport:
    """One-step error from exact history states, per step size."""

    method: str
    problem: str
    rows: Tuple[LteRow, ...]
    fitted_order: Optional[float]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "method": self.method,
                "problem": self.problem,
                "h": [r.h for r in self.rows],
                "error": [r.error for r in self.rows],
                "fitted_order": _last_row_only(len(self.rows), self.fitted_order),
            }
        )


def local_schedule(h: float, steps: int, config: StudyConfig) -> NoiseSchedule:
    """VP schedule over sbar_0 = LTE_SBAR_START with steps h, r h, r^2 h, ..."""
    offsets = [0.0]
    step = float(h)
    for _ in range(steps):
        offsets.append(offsets[-1] + step)
        step *= config.LTE_STEP_RATIO
    return vp_from_sbar(config.LTE_SBAR_START + np.asarray(offsets))


def _edict_local_error(
    method: EDICT, problem: AnalyticProblem, h: float, config: StudyConfig
) -> float:
    """Worst phase error over one EDICT step on the interleaved grid."""
    schedule = local_schedule(h, 2, config)
    bound = problem.with_schedule(schedule)
    grid = edict_interleaved_grid(schedule)
    worst = 0.0
    # positions 3..6 are the four updates of step 2
    for j in range(3, 7):
        history = [
            bound.exact_xbar(float(grid.sbar[j + 1])),
            bound.exact_xbar(float(grid.sbar[j + 2])),
        ]
        eps = bound.eval(grid.alphas[j + 1] * history[0], int(grid.step_index[j + 1]))
        coeffs = edict_phase_coeffs(method.p, schedule, j).as_k()
        xbar = belm_step_xbar(coeffs, history, [eps], [grid.step(j)])
        miss = grid.alphas[j] * (xbar - bound.exact_xbar(float(grid.sbar[j])))
        worst = max(worst, float(np.max(np.abs(miss))))
    return worst


def _local_error(
    method: Method, problem: AnalyticProblem, h: float, config: StudyConfig
) -> float:
    if isinstance(method, EDICT):
        return _edict_local_error(method, problem, h, config)

    schedule = local_schedule(h, method.steps, config)
    bound = problem.with_schedule(schedule)
    exact = _exact_states(bound, schedule)
    if isinstance(method, DDIM):
        new = ddim_step(exact[1], 1, bound, schedule)
    elif isinstance(method, BDIA):
        new = bdia_step(exact[2], exact[1], 1, method.gamma, bound, schedule)
    elif isinstance(method, OBELM2):
        new = obelm2_step(exact[2], exact[1], 1, bound, schedule)
    elif isinstance(method, OBELM3):
        new = obelm3_step(exact[3], exact[2], exact[1], 1, bound, schedule)
    else:
        raise ConfigurationError(f"unsupported method {method!r}")
    return float(np.max(np.abs(new - exact[0])))


def lte_study(
    method: Method,
    problem: AnalyticProblem,
    hs: Sequence[float],
    config: Optional[StudyConfig] = None,
    solver_config: SolverConfig = DEFAULT_SOLVER_CONFIG,
) -> LteReport:
    """Measure the one-step error with exact history states.

    The local grid starts at LTE_SBAR_START with steps h, r h, r^2 h
    (r = LTE_STEP_RATIO). EDICT is measured as the worst of the four 2-step
    updates of one step on its interleaved grid.

    Raises:
        ConfigurationError: For fewer than 3 or non-positive step sizes
        NumericalFailureError: If an error is not finite
    """
    config = config or StudyConfig()
    steps = [float(h) for h in hs]
    if len(steps) < 3:
        raise ConfigurationError(f"LTE study needs at least 3 step sizes, got {steps}")
    if any(not (np.isfinite(h) and h > 0) for h in steps):
        raise ConfigurationError(f"step sizes must be positive, got {steps}")

    errors = _ordered_map(
        lambda h: _local_error(method, problem, h, config), steps, config
    )
    for h, error in zip(steps, errors):
        if not np.isfinite(error):
            raise NumericalFailureError(
                f"{method.label} local error at h={h:g} is not finite"
            )
    rows = tuple(LteRow(h=h, error=e) for h, e in zip(steps, errors))
    order = _try_fit(method.label, [(r.h, r.error) for r in rows], solver_config)
    report = LteReport(
        method=method.label, problem=problem.problem_id, rows=rows, fitted_order=order
    )
    log_summary(
        "Local Error Summary",
        [
            f"Method: {report.method}",
            f"Problem: {report.problem}",
            f"Step sizes: {len(rows)}",
            f"Fitted order: {_format_order(order)}",
        ],
    )
    return report


# Reconstruction roundtrip


@dataclass(frozen=True)
class RoundtripRow:
    method: str
    N: int
    trials: int
    max_rel_error: float
    mse: float
    reconstruction_rel_error: float


@dataclass(frozen=True)
class RoundtripReport:
    """Sample-then-invert and invert-then-sample errors per method and N.

    ``max_rel_error`` recovers x_N from a sampled trajectory; ``mse`` is the
    mean squared error of that recovery; ``reconstruction_rel_error`` rebuilds
    a random x_0 from its inverted noise-end states.
    """

    rows: Tuple[RoundtripRow, ...]
    notes: Tuple[str, ...] = ()

    def max_rel_error_by_method(self) -> Dict[str, float]:
        worst: Dict[str, float] = {}
        for row in self.rows:
            worst[row.method] = max(worst.get(row.method, 0.0), row.max_rel_error)
        return worst

    def to_frame(self) -> pd.DataFrame:
        columns = [
            "method",
            "N",
            "trials",
            "max_rel_error",
            "mse",
            "reconstruction_rel_error",
        ]
        return pd.DataFrame(
            [[getattr(row, c) for c in columns] for row in self.rows], columns=columns
        )


def _data_end_seed(
    method: Method, predictor: NoisePredictor, schedule: NoiseSchedule, x0: np.ndarray
) -> InversionSeed:
    """Seed whose extra starting values come from DDIM inversion steps."""
    states = [x0]
    for i in range(1, min(method.steps - 1, schedule.N) + 1):
        states.append(ddim_invert_step(states[-1], i, predictor, schedule))
    return InversionSeed(
        x0=x0,
        x1=states[1] if len(states) > 1 else None,
        x2=states[2] if len(states) > 2 else None,
    )


def _roundtrip_point(
    method: Method,
    predictor: NoisePredictor,
    schedule: NoiseSchedule,
    draws: np.ndarray,
    solver_config: SolverConfig,
) -> RoundtripRow:
    bound = predictor.with_schedule(schedule)
    n = schedule.N
    max_rel = 0.0
    rebuilt_rel = 0.0
    squared: List[float] = []
    for x_top, x_bottom in draws:
        forward = sample(method, bound, schedule, x_top, config=solver_config)
        recovered = invert(
            method, bound, schedule, forward.inversion_seed(), config=solver_config
        )
        max_rel = max(max_rel, _relative_error(recovered.xN, x_top))
        squared.append(float(np.mean((recovered.xN - x_top) ** 2)))

        inverted = invert(
            method,
            bound,
            schedule,
            _data_end_seed(method, bound, schedule, x_bottom),
            config=solver_config,
        )
        slots = min(method.steps - 1, n)
        starts = [inverted.states[n - j] for j in range(1, slots + 1)]
        rebuilt = sample(
            method,
            bound,
            schedule,
            inverted.xN,
            starts=starts,
            y_N=None if inverted.aux is None else inverted.aux[n],
            config=solver_config,
        )
        rebuilt_rel = max(rebuilt_rel, _relative_error(rebuilt.x0, x_bottom))

    logger.debug(f"Roundtrip {method.label} N={n}: max_rel_error={max_rel:.3e}")
    return RoundtripRow(
        method=method.label,
        N=n,
        trials=len(draws),
        max_rel_error=max_rel,
        mse=float(np.mean(squared)),
        reconstruction_rel_error=rebuilt_rel,
    )


def roundtrip_study(
    methods: Sequence[Method],
    predictor: NoisePredictor,
    schedules: Union[NoiseSchedule, Sequence[NoiseSchedule]],
    trials: int,
    seed: Optional[int] = None,
    dim: Optional[int] = None,
    config: Optional[StudyConfig] = None,
    solver_config: SolverConfig = DEFAULT_SOLVER_CONFIG,
) -> RoundtripReport:
    """Measure how exactly each method's inversion undoes its sampling.

    Random noise-end and data-end states are drawn from Philox(seed); every
    (method, schedule) pair sees the same draws. BDIA with gamma = 0 has no
    inverse and is skipped with a note.

    Args:
        methods: Sampler variants
        predictor: Noise predictor, rebound to each schedule
        schedules: One schedule or several (one row per method and N)
        trials: Random starting states per row, at least MIN_TRIALS
        seed: Generator seed (defaults to StudyConfig.SEED)
        dim: State dimension for predictors that do not declare one
        config: Study settings
        solver_config: Solver tolerances and caps

    Raises:
        ConfigurationError: If trials is too small or the dimension is unknown
    """
    config = config or StudyConfig()
    if trials < config.MIN_TRIALS:
        raise ConfigurationError(
            f"roundtrip study needs at least {config.MIN_TRIALS} trials, got {trials}"
        )
    grid = [schedules] if isinstance(schedules, NoiseSchedule) else list(schedules)
    if not grid:
        raise ConfigurationError("roundtrip study needs at least one schedule")
    d = _state_dim(predictor, dim)
    rng = np.random.Generator(np.random.Philox(config.SEED if seed is None else seed))
    draws = rng.standard_normal((trials, 2, d))

    notes: List[str] = []
    active: List[Method] = []
    for method in methods:
        if isinstance(method, BDIA) and method.gamma == 0.0:
            note = f"{method.label} skipped: no inverse for gamma = 0"
            logger.warning(note)
            notes.append(note)
        else:
            active.append(method)

    tasks = [(method, schedule) for method in active for schedule in grid]
    rows = _ordered_map(
        lambda task: _roundtrip_point(
            task[0], predictor, task[1], draws, solver_config
        ),
        tasks,
        config,
    )
    report = RoundtripReport(rows=tuple(rows), notes=tuple(notes))
    log_summary(
        "Roundtrip Summary",
        [f"Trials per row: {trials}", f"Skipped: {len(notes)}"]
        + [
            f"{label}: max_rel_error={error:.3e}"
            for label, error in report.max_rel_error_by_method().items()
        ],
    )
    return report


# Zero-stability


@dataclass(frozen=True)
class PerturbationReport:
    """Worst amplification of a perturbation of every starting slot."""

    method: str
    N: int
    delta: float
    trials: int
    k_hat: float
    per_trial: Tuple[float, ...]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [[self.method, self.N, self.delta, self.trials, self.k_hat]],
            columns=["method", "N", "delta", "trials", "K_hat"],
        )


def _amplification(
    method: Method,
    predictor: NoisePredictor,
    schedule: NoiseSchedule,
    x_top: np.ndarray,
    directions: np.ndarray,
    delta: float,
    solver_config: SolverConfig,
) -> float:
    n = schedule.N
    base = sample(method, predictor, schedule, x_top, config=solver_config)
    slots = min(method.steps - 1, n)
    starts = [base.states[n - j] for j in range(1, slots + 1)]
    shifted_top = x_top + delta * directions[0]
    shifted_starts = [s + delta * directions[j] for j, s in enumerate(starts, start=1)]
    shifted_y = None
    initial = [shifted_top - x_top] + [z - s for z, s in zip(shifted_starts, starts)]
    if base.aux is not None:
        shifted_y = base.aux[n] + delta * directions[-1]
        initial.append(shifted_y - base.aux[n])

    perturbed = sample(
        method,
        predictor,
        schedule,
        shifted_top,
        starts=shifted_starts,
        y_N=shifted_y,
        config=solver_config,
    )
    start_gap = max(float(np.max(np.abs(diff))) for diff in initial)
    if start_gap == 0.0:
        return 0.0
    gap = float(np.max(np.abs(perturbed.states - base.states)))
    if base.aux is not None and perturbed.aux is not None:
        gap = max(gap, float(np.max(np.abs(perturbed.aux - base.aux))))
    if not np.isfinite(gap):
        raise NumericalFailureError(f"{method.label} perturbation gap is not finite")
    return gap / start_gap


def perturbation_study(
    method: Method,
    predictor: NoisePredictor,
    schedule: NoiseSchedule,
    delta: float,
    trials: int,
    seed: Optional[int] = None,
    dim: Optional[int] = None,
    config: Optional[StudyConfig] = None,
    solver_config: SolverConfig = DEFAULT_SOLVER_CONFIG,
) -> PerturbationReport:
    """Estimate the zero-stability constant from paired trajectories.

    Each trial samples from a random x_N, then resamples with x_N and every
    explicit starting value (and EDICT's y_N) shifted by delta along random
    directions in [-1, 1]^d. K_hat is the largest state gap over the grid
    divided by the largest starting gap.

    Raises:
        ConfigurationError: If delta is negative or trials is not positive
        NumericalFailureError: If a trajectory diverges
    """
    config = config or StudyConfig()
    if not (np.isfinite(delta) and delta >= 0):
        raise ConfigurationError(
            f"perturbation delta must be non-negative, got {delta}"
        )
    if trials < 1:
        raise ConfigurationError(f"trials must be positive, got {trials}")
    d = _state_dim(predictor, dim)
    bound = predictor.with_schedule(schedule)
    slots = method.steps + (1 if isinstance(method, EDICT) else 0)
    rng = np.random.Generator(np.random.Philox(config.SEED if seed is None else seed))
    tops = rng.standard_normal((trials, d))
    directions = rng.uniform(-1.0, 1.0, (trials, slots, d))

    per_trial = _ordered_map(
        lambda t: _amplification(
            method, bound, schedule, tops[t], directions[t], delta, solver_config
        ),
        list(range(trials)),
        config,
    )
    report = PerturbationReport(
        method=method.label,
        N=schedule.N,
        delta=float(delta),
        trials=trials,
        k_hat=max(per_trial),
        per_trial=tuple(per_trial),
    )
    log_summary(
        "Perturbation Summary",
        [
            f"Method: {report.method}",
            f"N: {report.N}",
            f"Delta: {report.delta:g}",
            f"K_hat: {report.k_hat:.6g}",
        ],
    )
    return report
