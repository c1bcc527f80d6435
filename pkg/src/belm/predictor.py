"""Noise-predictor interface and analytic toy predictors.

Every predictor maps ``(state, step_index)`` to a predicted noise vector of the
same shape. The toy problems below have closed-form probability-flow
solutions, so sampler accuracy and inversion can be checked without a trained
network.
"""

import dataclasses
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from .exceptions import ConfigurationError
from .schedule import NoiseSchedule


logger = logging.getLogger(__name__)


class NoisePredictor(ABC):
    """Deterministic, re-entrant map (state, step index) -> predicted noise."""

    dim: Optional[int] = None

    @abstractmethod
    def eval(self, state: np.ndarray, step_index: int) -> np.ndarray:
        """Predict the noise contained in ``state`` at ``step_index``."""

    def with_schedule(self, schedule: NoiseSchedule) -> "NoisePredictor":
        """Rebind the predictor to another schedule (no-op by default)."""
        return self

    def __call__(self, state: np.ndarray, step_index: int) -> np.ndarray:
        return self.eval(state, step_index)


class AnalyticProblem(NoisePredictor):
    """Predictor whose probability-flow ODE has a known solution in scaled space."""

    problem_id: str = "analytic"

    @abstractmethod
    def exact_xbar(self, sbar: float) -> np.ndarray:
        """Reference exact solution xbar(sbar) of the scaled flow."""


@dataclass(frozen=True)
class ConstantPredictor(NoisePredictor):
    """Predictor returning the same value everywhere."""

    value: float = 0.0
    dim: Optional[int] = None

    def eval(self, state: np.ndarray, step_index: int) -> np.ndarray:
        return np.full_like(np.asarray(state, dtype=np.float64), self.value)


@dataclass(frozen=True)
class ZeroPredictor(ConstantPredictor):
    """Predictor that is identically zero."""

    value: float = field(default=0.0, init=False)


@dataclass(frozen=True)
class GaussianProblem(AnalyticProblem):
    """Data distribution Normal(0, s^2 I); the marginal score is analytic.

    Attributes:
        s: Data standard deviation
        schedule: Schedule the step indices refer to
        d: State dimension
    """

    s: float
    schedule: NoiseSchedule
    d: int = 4
    problem_id: str = "gaussian"

    def __post_init__(self) -> None:
        if not self.s > 0:
            raise ConfigurationError(
                f"Gaussian data std s must be positive, got {self.s}"
            )
        if self.d < 1:
            raise ConfigurationError(f"dimension must be positive, got {self.d}")

    @property
    def dim(self) -> int:  # type: ignore[override]
        return self.d

    def with_schedule(self, schedule: NoiseSchedule) -> "GaussianProblem":
        return dataclasses.replace(self, schedule=schedule)

    def marginal_std(self, i: int) -> float:
        """sqrt(alpha_i^2 s^2 + sigma_i^2)."""
        alpha = self.schedule.alpha(i)
        sigma = self.schedule.sigma(i)
        return float(np.sqrt(alpha**2 * self.s**2 + sigma**2))

    def eval(self, state: np.ndarray, step_index: int) -> np.ndarray:
        alpha = self.schedule.alpha(step_index)
        sigma = self.schedule.sigma(step_index)
        x = np.asarray(state, dtype=np.float64)
        return sigma * x / (alpha**2 * self.s**2 + sigma**2)

    def exact_flow(self, x_from: np.ndarray, i_from: int, i_to: int) -> np.ndarray:
        """Transport a state along the probability-flow ODE from i_from to i_to."""
        scale = self.marginal_std(i_to) / self.marginal_std(i_from)
        return np.asarray(x_from, dtype=np.float64) * scale

    def solution_xbar(
        self, sbar_to: float, xbar_from: np.ndarray, sbar_from: float
    ) -> np.ndarray:
        """Scaled-space flow: xbar grows like sqrt(s^2 + sbar^2)."""
        ratio = np.sqrt((self.s**2 + sbar_to**2) / (self.s**2 + sbar_from**2))
        return np.asarray(xbar_from, dtype=np.float64) * ratio

    def exact_xbar(self, sbar: float) -> np.ndarray:
        return self.solution_xbar(sbar, np.ones(self.d), 0.0)

    def sample_marginal(self, rng: np.random.Generator, i: int) -> np.ndarray:
        """Draw a state from the marginal at index i."""
        return self.marginal_std(i) * rng.standard_normal(self.d)


@dataclass(frozen=True)
class PolynomialProblem(AnalyticProblem):
    """Manufactured solution xbar(sbar) = P(sbar) * (1, ..., 1).

    ``coeffs`` are c_0..c_m in ascending order. The predicted noise is
    P'(sbar_i) and ignores the state.
    """

    coeffs: Tuple[float, ...]
    schedule: NoiseSchedule
    d: int = 4
    problem_id: str = "polynomial"
    _poly: Polynomial = field(init=False, repr=False, compare=False)
    _deriv: Polynomial = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.coeffs) < 1:
            raise ConfigurationError("polynomial needs at least one coefficient")
        if self.d < 1:
            raise ConfigurationError(f"dimension must be positive, got {self.d}")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        poly = Polynomial(np.asarray(self.coeffs, dtype=np.float64))
        object.__setattr__(self, "_poly", poly)
        object.__setattr__(self, "_deriv", poly.deriv())

    @property
    def dim(self) -> int:  # type: ignore[override]
        return self.d

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def with_schedule(self, schedule: NoiseSchedule) -> "PolynomialProblem":
        return dataclasses.replace(self, schedule=schedule)

    def eval(self, state: np.ndarray, step_index: int) -> np.ndarray:
        slope = float(self._deriv(self.schedule.sbar[step_index]))
        return np.full_like(np.asarray(state, dtype=np.float64), slope)

    def solution(self, sbar: float) -> np.ndarray:
        return np.full(self.d, float(self._poly(sbar)))

    def exact_xbar(self, sbar: float) -> np.ndarray:
        return self.solution(sbar)

    def exact_state(self, i: int) -> np.ndarray:
        """Exact x-space state alpha_i * P(sbar_i) at grid index i."""
        return self.schedule.alpha(i) * self.solution(float(self.schedule.sbar[i]))


@dataclass(frozen=True)
class SyntheticPredictor(NoisePredictor):
    """Smooth nonlinear field for roundtrip tests.

    eps(x, i) = Q sin(Q^T x + phase + omega * sbar_i) with Q a seed-derived
    orthogonal matrix, so the field is bounded by sqrt(d) and 1-Lipschitz in
    the Euclidean norm.
    """

    seed: int
    schedule: NoiseSchedule
    d: int = 4
    _rotation: np.ndarray = field(init=False, repr=False, compare=False)
    _phase: np.ndarray = field(init=False, repr=False, compare=False)
    _omega: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ConfigurationError(f"dimension must be positive, got {self.d}")
        rng = np.random.Generator(np.random.Philox(self.seed))
        q, r = np.linalg.qr(rng.standard_normal((self.d, self.d)))
        q = q * np.sign(np.diag(r))
        for name, value in (
            ("_rotation", q),
            ("_phase", rng.uniform(0.0, 2.0 * np.pi, self.d)),
            ("_omega", rng.uniform(0.5, 1.5, self.d)),
        ):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def dim(self) -> int:  # type: ignore[override]
        return self.d

    def with_schedule(self, schedule: NoiseSchedule) -> "SyntheticPredictor":
        return dataclasses.replace(self, schedule=schedule)

    def eval(self, state: np.ndarray, step_index: int) -> np.ndarray:
        sbar = float(self.schedule.sbar[step_index])
        inner = self._rotation.T @ np.asarray(state, dtype=np.float64)
        return self._rotation @ np.sin(inner + self._phase + self._omega * sbar)


def gaussian_eps(x: np.ndarray, i: int, problem: GaussianProblem) -> np.ndarray:
    return problem.eval(x, i)


def gaussian_exact_flow(
    x_from: np.ndarray, i_from: int, i_to: int, problem: GaussianProblem
) -> np.ndarray:
    return problem.exact_flow(x_from, i_from, i_to)


def polynomial_eps(x: np.ndarray, i: int, problem: PolynomialProblem) -> np.ndarray:
    return problem.eval(x, i)


def synthetic_eps(
    x: np.ndarray, i: int, seed: int, schedule: NoiseSchedule
) -> np.ndarray:
    return SyntheticPredictor(seed=seed, schedule=schedule, d=len(x)).eval(x, i)


def estimate_lipschitz(
    predictor: NoisePredictor,
    dim: int,
    step_index: int,
    pairs: int = 1000,
    seed: int = 0,
    radius: float = 10.0,
    spread: Sequence[float] = (1e-3, 1e-1, 1.0),
) -> float:
    """Finite-difference estimate of the Lipschitz constant in the state.

    Draws ``pairs`` base points uniformly in the box ``|x|_inf <= radius`` and
    perturbs each along a random direction at several distances.

    Returns:
        Largest observed ratio |eps(x) - eps(y)|_2 / |x - y|_2
    """
    rng = np.random.Generator(np.random.Philox(seed))
    worst = 0.0
    for _ in range(pairs):
        x = rng.uniform(-radius, radius, dim)
        direction = rng.standard_normal(dim)
        direction /= np.linalg.norm(direction)
        fx = predictor.eval(x, step_index)
        for distance in spread:
            y = np.clip(x + distance * direction, -radius, radius)
            gap = float(np.linalg.norm(x - y))
            if gap == 0.0:
                continue
            ratio = float(np.linalg.norm(fx - predictor.eval(y, step_index))) / gap
            worst = max(worst, ratio)

    logger.debug(f"Lipschitz estimate at step {step_index}: {worst:.6g}")
    return worst
