"""Step rules and trajectory drivers for sampling and exact inversion.

Sampling walks the schedule from the noise end (index N) to the data end
(index 0); inversion walks the other way. Multistep arithmetic for the O-BELM
rules runs in scaled coordinates xbar = x / alpha and is rescaled at the
boundary.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .coeffs import (
    belm2_optimal,
    belm3_optimal,
    belm_invert_xbar,
    belm_step_xbar,
)
from .config import DEFAULT_SOLVER_CONFIG, SolverConfig
from .exceptions import ConfigurationError, NotInvertibleError, NumericalFailureError
from .predictor import NoisePredictor
from .schedule import NoiseSchedule


logger = logging.getLogger(__name__)

_BDIA_NOT_INVERTIBLE = "BDIA with gamma = 0 has no inverse (division by gamma)"


@dataclass(frozen=True)
class Method:
    """Base of the sampler variants; ``steps`` is the number of stored states."""

    @property
    def name(self) -> str:
        raise NotImplementedError

    @property
    def steps(self) -> int:
        return 1

    @property
    def label(self) -> str:
        return self.name


@dataclass(frozen=True)
class DDIM(Method):
    @property
    def name(self) -> str:
        return "ddim"


@dataclass(frozen=True)
class EDICT(Method):
    p: float = 0.93

    def __post_init__(self) -> None:
        if not 0.0 < self.p < 1.0:
            raise ConfigurationError(f"EDICT mixing p must lie in (0, 1), got {self.p}")

    @property
    def name(self) -> str:
        return "edict"

    @property
    def label(self) -> str:
        return f"edict(p={self.p:g})"


@dataclass(frozen=True)
class BDIA(Method):
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"BDIA gamma must lie in [0, 1], got {self.gamma}")

    @property
    def name(self) -> str:
        return "bdia"

    @property
    def steps(self) -> int:
        return 2

    @property
    def label(self) -> str:
        return f"bdia(gamma={self.gamma:g})"


@dataclass(frozen=True)
class OBELM2(Method):
    @property
    def name(self) -> str:
        return "obelm2"

    @property
    def steps(self) -> int:
        return 2


@dataclass(frozen=True)
class OBELM3(Method):
    @property
    def name(self) -> str:
        return "obelm3"

    @property
    def steps(self) -> int:
        return 3


def method_from_name(name: str, gamma: float = 1.0, p: float = 0.93) -> Method:
    """Build a method from its CLI name.

    Raises:
        ConfigurationError: For an unknown name or out-of-range parameter
    """
    key = name.strip().lower()
    if key == "ddim":
        return DDIM()
    if key == "edict":
        return EDICT(p=p)
    if key == "bdia":
        return BDIA(gamma=gamma)
    if key == "obelm2":
        return OBELM2()
    if key == "obelm3":
        return OBELM3()
    raise ConfigurationError(
        f"unknown method {name!r}; expected ddim, edict, bdia, obelm2 or obelm3"
    )


@dataclass(frozen=True)
class InversionSeed:
    """Data-end states an inversion starts from.

    ``x1`` and ``x2`` are the extra starting values the 2- and 3-step methods
    need; ``y0`` is EDICT's auxiliary state.
    """

    x0: np.ndarray
    x1: Optional[np.ndarray] = None
    y0: Optional[np.ndarray] = None
    x2: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States x_0..x_N in x-space, plus EDICT's y-sequence as ``aux``.

    ``approximate`` marks an inversion that is not the exact inverse of a
    sampling run (DDIM, or a synthesized bootstrap state).
    """

    method: str
    states: np.ndarray
    schedule: NoiseSchedule
    aux: Optional[np.ndarray] = None
    approximate: bool = False

    @property
    def x0(self) -> np.ndarray:
        return self.states[0]

    @property
    def xN(self) -> np.ndarray:
        return self.states[-1]

    def inversion_seed(self) -> InversionSeed:
        """Data-end states that let ``invert`` reproduce this trajectory."""
        n = len(self.states) - 1
        return InversionSeed(
            x0=self.states[0].copy(),
            x1=self.states[1].copy() if n >= 1 else None,
            x2=self.states[2].copy() if n >= 2 else None,
            y0=None if self.aux is None else self.aux[0].copy(),
        )

    def to_frame(self) -> pd.DataFrame:
        """One row per state: step_index, sbar, x_0..x_{d-1} (then y_* for EDICT)."""
        d = self.states.shape[1]
        frame = pd.DataFrame(self.states, columns=[f"x_{c}" for c in range(d)])
        if self.aux is not None:
            for c in range(d):
                frame[f"y_{c}"] = self.aux[:, c]
        frame.insert(0, "sbar", self.schedule.sbar)
        frame.insert(0, "step_index", np.arange(len(self.states)))
        return frame


def _check_finite(state: np.ndarray, method: str, index: int) -> np.ndarray:
    if not np.all(np.isfinite(state)):
        raise NumericalFailureError(
            f"{method} produced a non-finite state at index {index}"
        )
    return state


def _check_growth(
    state: np.ndarray, scale: float, limit: float, method: str, index: int
) -> np.ndarray:
    size = float(np.max(np.abs(state)))
    if size > limit * scale:
        raise NumericalFailureError(
            f"{method} state grew to {size:.3e} at index {index}, more than "
            f"{limit:.0e} times the starting scale {scale:.3e}; the 3-step rule "
            "is not zero-stable on this grid"
        )
    return state


def ddim_step(
    x_i: np.ndarray, i: int, predictor: NoisePredictor, schedule: NoiseSchedule
) -> np.ndarray:
    """Explicit Euler step x_i -> x_{i-1}."""
    ratio = schedule.alpha(i - 1) / schedule.alpha(i)
    coef = schedule.sigma(i - 1) - ratio * schedule.sigma(i)
    return ratio * x_i + coef * predictor.eval(x_i, i)


def ddim_invert_step(
    x_prev: np.ndarray, i: int, predictor: NoisePredictor, schedule: NoiseSchedule
) -> np.ndarray:
    """Reverse Euler step x_{i-1} -> x_i, evaluating the predictor at x_{i-1}."""
    ratio = schedule.alpha(i) / schedule.alpha(i - 1)
    coef = schedule.sigma(i) - ratio * schedule.sigma(i - 1)
    return ratio * x_prev + coef * predictor.eval(x_prev, i - 1)


def _edict_weights(i: int, schedule: NoiseSchedule) -> Tuple[float, float]:
    a = schedule.alpha(i - 1) / schedule.alpha(i)
    return a, schedule.sigma(i - 1) - a * schedule.sigma(i)


def edict_step(
    x_i: np.ndarray,
    y_i: np.ndarray,
    i: int,
    p: float,
    predictor: NoisePredictor,
    schedule: NoiseSchedule,
) -> Tuple[np.ndarray, np.ndarray]:
    """Coupled step (x_i, y_i) -> (x_{i-1}, y_{i-1}).

    Two affine coupling updates followed by two mixing layers.
    """
    a, b = _edict_weights(i, schedule)
    x_inter = a * x_i + b * predictor.eval(y_i, i)
    y_inter = a * y_i + b * predictor.eval(x_inter, i)
    x_prev = p * x_inter + (1.0 - p) * y_inter
    y_prev = p * y_inter + (1.0 - p) * x_prev
    return x_prev, y_prev


def edict_invert_step(
    x_prev: np.ndarray,
    y_prev: np.ndarray,
    i: int,
    p: float,
    predictor: NoisePredictor,
    schedule: NoiseSchedule,
) -> Tuple[np.ndarray, np.ndarray]:
    a, b = _edict_weights(i, schedule)
    y_inter = (y_prev - (1.0 - p) * x_prev) / p
    x_inter = (x_prev - (1.0 - p) * y_inter) / p
    y_i = (y_inter - b * predictor.eval(x_inter, i)) / a
    x_i = (x_inter - b * predictor.eval(y_i, i)) / a
    return x_i, y_i


def _bdia_weights(
    i: int, gamma: float, schedule: NoiseSchedule
) -> Tuple[float, float]:
    a_prev, a_i, a_next = (schedule.alpha(j) for j in (i - 1, i, i + 1))
    s_prev, s_i, s_next = (schedule.sigma(j) for j in (i - 1, i, i + 1))
    state_weight = a_prev / a_i - gamma * a_next / a_i
    eps_weight = (s_prev - (a_prev / a_i) * s_i) - gamma * (
        s_next - (a_next / a_i) * s_i
    )
    return state_weight, eps_weight


def bdia_step(
    x_next: np.ndarray,
    x_i: np.ndarray,
    i: int,
    gamma: float,
    predictor: NoisePredictor,
    schedule: NoiseSchedule,
) -> np.ndarray:
    """Symmetric two-state step (x_{i+1}, x_i) -> x_{i-1}."""
    state_weight, eps_weight = _bdia_weights(i, gamma, schedule)
    return gamma * x_next + state_weight * x_i + eps_weight * predictor.eval(x_i, i)


def bdia_invert_step(
    x_prev: np.ndarray,
    x_i: np.ndarray,
    i: int,
    gamma: float,
    predictor: NoisePredictor,
    schedule: NoiseSchedule,
) -> np.ndarray:
    """(x_{i-1}, x_i) -> x_{i+1}.

    Raises:
        NotInvertibleError: If gamma is zero
    """
    if gamma == 0.0:
        raise NotInvertibleError(_BDIA_NOT_INVERTIBLE)
    state_weight, eps_weight = _bdia_weights(i, gamma, schedule)
    return (x_prev - state_weight * x_i - eps_weight * predictor.eval(x_i, i)) / gamma


def _steps(schedule: NoiseSchedule, first: int, count: int) -> List[float]:
    sbar = schedule.sbar
    return [float(sbar[first + j] - sbar[first + j - 1]) for j in range(count)]


def obelm2_step(
    x_next: np.ndarray,
    x_i: np.ndarray,
    i: int,
    predictor: NoisePredictor,
    schedule: NoiseSchedule,
) -> np.ndarray:
    """O-BELM step (x_{i+1}, x_i) -> x_{i-1}."""
    h_i, h_next = _steps(schedule, i, 2)
    coeffs = belm2_optimal(h_i, h_next).as_k()
    history = [x_i / schedule.alpha(i), x_next / schedule.alpha(i + 1)]
    xbar_prev = belm_step_xbar(coeffs, history, [predictor.eval(x_i, i)], [h_i])
    return schedule.alpha(i - 1) * xbar_prev


def obelm2_invert_step(
    x_prev: np.ndarray,
    x_i: np.ndarray,
    i: int,
    predictor: NoisePredictor,
    schedule: NoiseSchedule,
) -> np.ndarray:
    """O-BELM inversion (x_{i-1}, x_i) -> x_{i+1}."""
    h_i, h_next = _steps(schedule, i, 2)
    coeffs = belm2_optimal(h_i, h_next).as_k()
    xbar_next = belm_invert_xbar(
        coeffs,
        x_prev / schedule.alpha(i - 1),
        [x_i / schedule.alpha(i)],
        [predictor.eval(x_i, i)],
        [h_i],
    )
    return schedule.alpha(i + 1) * xbar_next


def obelm3_step(
    x_next2: np.ndarray,
    x_next: np.ndarray,
    x_i: np.ndarray,
    i: int,
    predictor: NoisePredictor,
    schedule: NoiseSchedule,
) -> np.ndarray:
    """3-step O-BELM (x_{i+2}, x_{i+1}, x_i) -> x_{i-1}."""
    hs = _steps(schedule, i, 3)
    coeffs = belm3_optimal(*hs)
    history = [
        x_i / schedule.alpha(i),
        x_next / schedule.alpha(i + 1),
        x_next2 / schedule.alpha(i + 2),
    ]
    eps = [predictor.eval(x_i, i), predictor.eval(x_next, i + 1)]
    return schedule.alpha(i - 1) * belm_step_xbar(coeffs, history, eps, hs[:2])


def obelm3_invert_step(
    x_prev: np.ndarray,
    x_i: np.ndarray,
    x_next: np.ndarray,
    i: int,
    predictor: NoisePredictor,
    schedule: NoiseSchedule,
) -> np.ndarray:
    """3-step O-BELM inversion (x_{i-1}, x_i, x_{i+1}) -> x_{i+2}."""
    hs = _steps(schedule, i, 3)
    coeffs = belm3_optimal(*hs)
    history = [x_i / schedule.alpha(i), x_next / schedule.alpha(i + 1)]
    eps = [predictor.eval(x_i, i), predictor.eval(x_next, i + 1)]
    xbar_prev = x_prev / schedule.alpha(i - 1)
    xbar = belm_invert_xbar(coeffs, xbar_prev, history, eps, hs[:2])
    return schedule.alpha(i + 2) * xbar


def _as_state(x: np.ndarray, predictor: NoisePredictor, what: str) -> np.ndarray:
    state = np.array(x, dtype=np.float64)
    if state.ndim != 1 or state.size == 0:
        raise ConfigurationError(
            f"{what} must be a non-empty vector, got shape {state.shape}"
        )
    if predictor.dim is not None and state.size != predictor.dim:
        raise ConfigurationError(
            f"{what} has dimension {state.size}, predictor expects {predictor.dim}"
        )
    if not np.all(np.isfinite(state)):
        raise ConfigurationError(f"{what} contains non-finite values")
    return state


def _check_obelm3_cap(
    method: Method, schedule: NoiseSchedule, config: SolverConfig
) -> None:
    if isinstance(method, OBELM3) and schedule.N > config.OBELM3_MAX_STEPS:
        raise ConfigurationError(
            f"obelm3 is capped at N <= {config.OBELM3_MAX_STEPS}, got N = {schedule.N}"
        )


def sample(
    method: Method,
    predictor: NoisePredictor,
    schedule: NoiseSchedule,
    x_N: np.ndarray,
    starts: Sequence[np.ndarray] = (),
    y_N: Optional[np.ndarray] = None,
    config: SolverConfig = DEFAULT_SOLVER_CONFIG,
) -> Trajectory:
    """Run a sampler from the noise end to the data end.

    Multistep methods bootstrap their missing starting values with DDIM
    steps unless ``starts`` supplies x_{N-1}, x_{N-2}, ... explicitly.

    Args:
        method: Sampler variant
        predictor: Noise predictor bound to ``schedule``
        schedule: Noise schedule
        x_N: Starting state at the noise end
        starts: Explicit x_{N-1}, x_{N-2}, ... (at most ``method.steps - 1``)
        y_N: EDICT auxiliary starting state (defaults to x_N)
        config: Solver tolerances and caps

    Returns:
        Trajectory over indices 0..N

    Raises:
        ConfigurationError: On dimension mismatch or invalid starts
        NumericalFailureError: If a non-finite state appears, or an
            obelm3 state outgrows OBELM3_GROWTH_LIMIT times max(|x_N|, 1)
    """
    _check_obelm3_cap(method, schedule, config)
    n = schedule.N
    x_top = _as_state(x_N, predictor, "x_N")
    if len(starts) > min(method.steps - 1, n):
        raise ConfigurationError(
            f"{method.name} accepts at most {min(method.steps - 1, n)} explicit "
            f"starting values, got {len(starts)}"
        )

    states = np.empty((n + 1, x_top.size))
    states[n] = x_top
    for offset, start in enumerate(starts, start=1):
        states[n - offset] = _as_state(start, predictor, f"x_{n - offset}")

    aux: Optional[np.ndarray] = None
    name = method.label

    if isinstance(method, EDICT):
        aux = np.empty_like(states)
        aux[n] = x_top if y_N is None else _as_state(y_N, predictor, "y_N")
        for i in range(n, 0, -1):
            states[i - 1], aux[i - 1] = edict_step(
                states[i], aux[i], i, method.p, predictor, schedule
            )
            _check_finite(states[i - 1], name, i - 1)
            _check_finite(aux[i - 1], name, i - 1)
        return Trajectory(method=name, states=states, schedule=schedule, aux=aux)

    scale = max(float(np.max(np.abs(x_top))), 1.0)
    bootstrap_until = n - min(method.steps - 1, n)
    for i in range(n - len(starts), bootstrap_until, -1):
        states[i - 1] = _check_finite(
            ddim_step(states[i], i, predictor, schedule), name, i - 1
        )

    for i in range(bootstrap_until, 0, -1):
        if isinstance(method, DDIM):
            new = ddim_step(states[i], i, predictor, schedule)
        elif isinstance(method, BDIA):
            new = bdia_step(
                states[i + 1], states[i], i, method.gamma, predictor, schedule
            )
        elif isinstance(method, OBELM2):
            new = obelm2_step(states[i + 1], states[i], i, predictor, schedule)
        elif isinstance(method, OBELM3):
            new = obelm3_step(
                states[i + 2], states[i + 1], states[i], i, predictor, schedule
            )
            _check_growth(new, scale, config.OBELM3_GROWTH_LIMIT, name, i - 1)
        else:
            raise ConfigurationError(f"unsupported method {method!r}")
        states[i - 1] = _check_finite(new, name, i - 1)

    logger.debug(f"Sampled {name} over N={n}")
    return Trajectory(method=name, states=states, schedule=schedule)


def invert(
    method: Method,
    predictor: NoisePredictor,
    schedule: NoiseSchedule,
    seed: InversionSeed,
    config: SolverConfig = DEFAULT_SOLVER_CONFIG,
) -> Trajectory:
    """Run a sampler backwards from the data end to the noise end.

    Missing x1 / x2 starting values are synthesized with DDIM inversion steps
    and the result is flagged approximate.

    Raises:
        NotInvertibleError: For BDIA with gamma = 0
        NumericalFailureError: If a non-finite state appears, or an
            obelm3 state outgrows OBELM3_GROWTH_LIMIT times max(|x0|, 1)
    """
    if isinstance(method, BDIA) and method.gamma == 0.0:
        raise NotInvertibleError(_BDIA_NOT_INVERTIBLE)
    _check_obelm3_cap(method, schedule, config)

    n = schedule.N
    name = method.label
    x_bottom = _as_state(seed.x0, predictor, "x0")
    states = np.empty((n + 1, x_bottom.size))
    states[0] = x_bottom

    if isinstance(method, EDICT):
        aux = np.empty_like(states)
        aux[0] = x_bottom if seed.y0 is None else _as_state(seed.y0, predictor, "y0")
        for i in range(1, n + 1):
            states[i], aux[i] = edict_invert_step(
                states[i - 1], aux[i - 1], i, method.p, predictor, schedule
            )
            _check_finite(states[i], name, i)
            _check_finite(aux[i], name, i)
        return Trajectory(method=name, states=states, schedule=schedule, aux=aux)

    approximate = isinstance(method, DDIM)
    provided = [seed.x1, seed.x2][: min(method.steps - 1, n)]
    filled = 0
    for offset, start in enumerate(provided, start=1):
        if start is None:
            break
        states[offset] = _as_state(start, predictor, f"x{offset}")
        filled = offset
    for i in range(filled + 1, len(provided) + 1):
        approximate = True
        states[i] = _check_finite(
            ddim_invert_step(states[i - 1], i, predictor, schedule), name, i
        )
    if approximate and not isinstance(method, DDIM):
        logger.warning(
            f"{name} inversion bootstrapped with DDIM; result is approximate"
        )

    scale = max(float(np.max(np.abs(x_bottom))), 1.0)
    first = min(method.steps - 1, n) + 1
    for target in range(first, n + 1):
        if isinstance(method, DDIM):
            new = ddim_invert_step(states[target - 1], target, predictor, schedule)
        elif isinstance(method, BDIA):
            i = target - 1
            new = bdia_invert_step(
                states[i - 1], states[i], i, method.gamma, predictor, schedule
            )
        elif isinstance(method, OBELM2):
            i = target - 1
            new = obelm2_invert_step(states[i - 1], states[i], i, predictor, schedule)
        elif isinstance(method, OBELM3):
            i = target - 2
            new = obelm3_invert_step(
                states[i - 1], states[i], states[i + 1], i, predictor, schedule
            )
            _check_growth(new, scale, config.OBELM3_GROWTH_LIMIT, name, target)
        else:
            raise ConfigurationError(f"unsupported method {method!r}")
        states[target] = _check_finite(new, name, target)

    logger.debug(f"Inverted {name} over N={n} (approximate={approximate})")
    return Trajectory(
        method=name, states=states, schedule=schedule, approximate=approximate
    )
