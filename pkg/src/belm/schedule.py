"""Discrete noise schedules and the scaled-sigma grid derived from them.

Index 0 is the data end and index N the noise end. The scaled sigma
sbar_i = sigma_i / alpha_i must be strictly increasing in i, so every step
h_i = sbar_i - sbar_{i-1} (i = 1..N) is positive.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Sequence, Union

import jsonschema
import numpy as np

from .config import DEFAULT_SOLVER_CONFIG
from .exceptions import ConfigurationError, ScheduleError


logger = logging.getLogger(__name__)


SCHEDULE_FILE_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "properties": {
        "alphas": {"type": "array", "items": {"type": "number"}, "minItems": 2},
        "sigmas": {"type": "array", "items": {"type": "number"}, "minItems": 2},
    },
    "required": ["alphas", "sigmas"],
}


def _frozen(values: Any) -> np.ndarray:
    array = np.array(values, dtype=np.float64)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Validated (alpha_i, sigma_i) tables for i = 0..N.

    Instances are immutable; build them through :func:`from_tables`,
    :func:`vp_linear_schedule` or :func:`sub_schedule`.
    """

    alphas: np.ndarray
    sigmas: np.ndarray
    variance_preserving: bool = False

    @property
    def N(self) -> int:
        """Number of steps (tables hold N + 1 entries)."""
        return len(self.alphas) - 1

    @property
    def sbar(self) -> np.ndarray:
        """Scaled sigmas sigma_i / alpha_i."""
        return self.sigmas / self.alphas

    def alpha(self, i: int) -> float:
        return float(self.alphas[i])

    def sigma(self, i: int) -> float:
        return float(self.sigmas[i])

    def __repr__(self) -> str:
        return (
            f"NoiseSchedule(N={self.N}, alpha_N={self.alphas[-1]:.6g}, "
            f"sigma_N={self.sigmas[-1]:.6g}, vp={self.variance_preserving})"
        )


@dataclass(frozen=True, eq=False)
class Grid:
    """Scaled-sigma grid: sbar_0..sbar_N and steps h_1..h_N (stored at h[i - 1])."""

    sbar: np.ndarray
    h: np.ndarray

    @property
    def N(self) -> int:
        return len(self.h)

    def step(self, i: int) -> float:
        """Return h_i for 1 <= i <= N."""
        if not 1 <= i <= self.N:
            raise IndexError(f"step index {i} outside 1..{self.N}")
        return float(self.h[i - 1])

    def reconstruct(self) -> np.ndarray:
        """Rebuild sbar from sbar_0 and the cumulative steps."""
        return np.concatenate(([self.sbar[0]], self.sbar[0] + np.cumsum(self.h)))


@dataclass(frozen=True)
class ConcavityReport:
    """Second differences sbar_{i+1} - 2 sbar_i + sbar_{i-1} for i = 1..N-1."""

    second_differences: np.ndarray
    satisfied: bool


def from_tables(
    alphas: Sequence[float],
    sigmas: Sequence[float],
    variance_preserving: bool = False,
) -> NoiseSchedule:
    """Validate raw tables and wrap them in a :class:`NoiseSchedule`.

    Two entries (N = 1) are accepted: a single step is a valid DDIM run,
    and the multistep samplers fall back to DDIM for every step that
    lacks enough history, so no method needs a longer grid to run.

    Args:
        alphas: Signal scales alpha_0..alpha_N
        sigmas: Noise scales sigma_0..sigma_N
        variance_preserving: Additionally require alpha^2 + sigma^2 = 1

    Returns:
        Validated, immutable schedule

    Raises:
        ScheduleError: If any schedule invariant is violated
    """
    a = np.asarray(alphas, dtype=np.float64)
    s = np.asarray(sigmas, dtype=np.float64)

    if a.ndim != 1 or s.ndim != 1:
        raise ScheduleError("alphas and sigmas must be one-dimensional")
    if len(a) != len(s):
        raise ScheduleError(
            f"alphas and sigmas must have equal lengths, got {len(a)} and {len(s)}"
        )
    if len(a) < 2:
        raise ScheduleError(f"schedule needs at least 2 entries, got {len(a)}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(s))):
        raise ScheduleError("schedule tables contain non-finite values")
    if np.any(a <= 0):
        bad = int(np.argmax(a <= 0))
        raise ScheduleError(f"alpha must be positive: alpha_{bad} = {a[bad]!r}")
    if s[0] < 0:
        raise ScheduleError(f"sigma_0 must be non-negative, got {s[0]!r}")
    if np.any(s[1:] <= 0):
        bad = int(np.argmax(s[1:] <= 0)) + 1
        raise ScheduleError(
            f"sigma must be positive for i >= 1: sigma_{bad} = {s[bad]!r}"
        )

    sbar = s / a
    steps = np.diff(sbar)
    if np.any(steps <= 0):
        bad = int(np.argmax(steps <= 0)) + 1
        raise ScheduleError(
            "scaled sigma must be strictly increasing: "
            f"sbar_{bad - 1} = {sbar[bad - 1]!r}, "
            f"sbar_{bad} = {sbar[bad]!r}"
        )

    if variance_preserving:
        drift = np.max(np.abs(a**2 + s**2 - 1.0))
        if drift > DEFAULT_SOLVER_CONFIG.VP_TOL:
            raise ScheduleError(
                "variance-preserving schedule violates alpha^2 + sigma^2 = 1 "
                f"by {drift:.3g}"
            )

    return NoiseSchedule(
        alphas=_frozen(a), sigmas=_frozen(s), variance_preserving=variance_preserving
    )


def vp_linear_schedule(N: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Discrete variance-preserving schedule over a linear beta ramp.

    alpha_i is the square root of prod_{j <= i} (1 - beta_j) with
    beta_1..beta_N spaced linearly from beta_start to beta_end; alpha_0 = 1.

    Args:
        N: Number of steps (>= 2)
        beta_start: First beta of the ramp
        beta_end: Last beta of the ramp

    Returns:
        Variance-preserving schedule with N + 1 entries

    Raises:
        ConfigurationError: If the beta range or N is invalid
    """
    if N < 2:
        raise ConfigurationError(f"vp-linear schedule needs N >= 2, got {N}")
    if not (0 < beta_start <= beta_end < 1):
        raise ConfigurationError(
            f"beta range must satisfy 0 < beta_start <= beta_end < 1, "
            f"got ({beta_start}, {beta_end})"
        )

    betas = np.linspace(beta_start, beta_end, N, dtype=np.float64)
    alphas = np.sqrt(np.concatenate(([1.0], np.cumprod(1.0 - betas))))
    sigmas = np.sqrt(np.clip(1.0 - alphas**2, 0.0, None))

    schedule = from_tables(alphas, sigmas, variance_preserving=True)
    logger.debug(f"Built vp-linear schedule: {schedule!r}")
    return schedule


def vp_from_sbar(sbar: Sequence[float]) -> NoiseSchedule:
    """Variance-preserving tables whose scaled sigmas equal ``sbar``."""
    sbar_arr = np.asarray(sbar, dtype=np.float64)
    alphas = 1.0 / np.sqrt(1.0 + sbar_arr**2)
    return from_tables(alphas, sbar_arr * alphas, variance_preserving=True)


def sub_schedule(schedule: NoiseSchedule, num_steps: int) -> NoiseSchedule:
    """Pick ``num_steps + 1`` evenly spaced entries of a fine schedule.

    Index 0 and the last index are always kept.
    """
    if not 1 <= num_steps <= schedule.N:
        raise ConfigurationError(
            f"num_steps must lie in 1..{schedule.N}, got {num_steps}"
        )
    indices = np.round(np.linspace(0, schedule.N, num_steps + 1)).astype(int)
    return from_tables(
        schedule.alphas[indices],
        schedule.sigmas[indices],
        variance_preserving=schedule.variance_preserving,
    )


def grid_of(schedule: NoiseSchedule) -> Grid:
    """Scaled sigmas and positive steps of a validated schedule."""
    sbar = schedule.sbar
    return Grid(sbar=_frozen(sbar), h=_frozen(np.diff(sbar)))


def is_variance_preserving(schedule: NoiseSchedule) -> bool:
    drift = np.max(np.abs(schedule.alphas**2 + schedule.sigmas**2 - 1.0))
    return bool(drift <= DEFAULT_SOLVER_CONFIG.VP_TOL)


def check_concavity(schedule: Union[NoiseSchedule, Sequence[float]]) -> ConcavityReport:
    """Check strict concavity of sbar in the index.

    Accepts a schedule or a raw sbar sequence so that the property can be
    checked on arbitrary test sequences.
    """
    if isinstance(schedule, NoiseSchedule):
        sbar = schedule.sbar
    else:
        sbar = np.asarray(schedule, dtype=np.float64)
    second = sbar[2:] - 2.0 * sbar[1:-1] + sbar[:-2]
    satisfied = bool(len(second) > 0 and np.all(second < 0))
    if not satisfied:
        logger.debug("Scaled sigma grid is not strictly concave")
    return ConcavityReport(second_differences=second, satisfied=satisfied)


def load_schedule(path: Union[str, Path]) -> NoiseSchedule:
    """Load a JSON schedule file ``{"alphas": [...], "sigmas": [...]}``.

    Raises:
        ScheduleError: If the document is malformed or the tables are invalid
    """
    path = Path(path)
    logger.info(f"Loading schedule from {path}")
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
        jsonschema.validate(document, SCHEDULE_FILE_SCHEMA)
    except json.JSONDecodeError as e:
        raise ScheduleError(f"schedule file {path} is not valid JSON: {e}") from e
    except jsonschema.ValidationError as e:
        raise ScheduleError(f"schedule file {path} is malformed: {e.message}") from e
    except OSError as e:
        raise ScheduleError(f"cannot read schedule file {path}: {e}") from e
    return from_tables(document["alphas"], document["sigmas"])


def dump_schedule(schedule: NoiseSchedule, path: Union[str, Path]) -> None:
    """Write a schedule in the JSON file format read by :func:`load_schedule`."""
    document = {
        "alphas": [float(v) for v in schedule.alphas],
        "sigmas": [float(v) for v in schedule.sigmas],
    }
    Path(path).write_text(json.dumps(document) + "\n", encoding="utf-8")
