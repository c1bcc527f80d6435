"""Multistep coefficients for bidirectional explicit linear multistep samplers.

A k-step method in scaled coordinates reads

    xbar_{i-1} = sum_j a_j xbar_{i+j-1} + sum_j b_j h_{i+j-1} eps_{i+j-1}

with no predictor evaluation at either end state, so both the forward and the
reversed recurrence are explicit. The optimal coefficients zero the leading
local-truncation-error terms for the local step sizes.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import DEFAULT_SOLVER_CONFIG, SolverConfig
from .exceptions import (
    ConfigurationError,
    NotInvertibleError,
    SingularStepError,
    SingularSystemError,
)
from .schedule import Grid, NoiseSchedule, grid_of


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Belm2Coeffs:
    """Weights of the 2-step rule on xbar_i, xbar_{i+1} and h_i * eps_i.

    Consistency (a1 + a2 = 1) is exposed as a property rather than enforced:
    the interleaved EDICT phases and BDIA with gamma = 0 are legitimate
    coefficient triples that violate it or have a2 = 0.
    """

    a1: float
    a2: float
    b1: float

    @property
    def is_consistent(self) -> bool:
        return abs(self.a1 + self.a2 - 1.0) <= DEFAULT_SOLVER_CONFIG.GRID_TOL

    @property
    def is_invertible(self) -> bool:
        return self.a2 != 0.0

    def as_k(self) -> "BelmKCoeffs":
        return BelmKCoeffs(
            k=2, a=np.array([self.a1, self.a2]), b=np.array([self.b1])
        )


@dataclass(frozen=True, eq=False)
class BelmKCoeffs:
    """General k-step weights a_1..a_k and b_1..b_{k-1}."""

    k: int
    a: np.ndarray
    b: np.ndarray
    residual: float = 0.0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConfigurationError(f"step count k must be positive, got {self.k}")
        if len(self.a) != self.k or len(self.b) != max(self.k - 1, 0):
            raise ConfigurationError(
                f"k={self.k} needs {self.k} a-weights and {self.k - 1} b-weights, "
                f"got {len(self.a)} and {len(self.b)}"
            )

    @property
    def is_consistent(self) -> bool:
        return abs(float(np.sum(self.a)) - 1.0) <= DEFAULT_SOLVER_CONFIG.RESIDUAL_TOL

    @property
    def is_invertible(self) -> bool:
        return float(self.a[-1]) != 0.0

    def vector(self) -> np.ndarray:
        """Unknown vector (a_1..a_k, b_1..b_{k-1}) in system order."""
        return np.concatenate((self.a, self.b))


@dataclass(frozen=True, eq=False)
class RootMatrix:
    """Companion matrix: first row a_1..a_k, ones on the subdiagonal."""

    matrix: np.ndarray

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.matrix))))


@dataclass(frozen=True, eq=False)
class StabilityReport:
    """Outcome of the zero-stability check over a grid.

    ``passed`` is None for k >= 3, where only spectral radii are reported.
    """

    k: int
    eta: float
    norms: np.ndarray
    spectral_radii: np.ndarray
    passed: Optional[bool]
    reason: Optional[str] = None


def belm2_optimal(h_i: float, h_ip1: float) -> Belm2Coeffs:
    """Closed-form LTE-optimal 2-step coefficients.

    Args:
        h_i: Step h_i = sbar_i - sbar_{i-1}
        h_ip1: Step h_{i+1}

    Returns:
        Coefficients accurate to third order in the step sizes

    Raises:
        SingularStepError: If either step is not a positive finite number
    """
    for h in (h_i, h_ip1):
        if not (np.isfinite(h) and h > 0):
            raise SingularStepError(
                f"2-step coefficients need positive steps, got {h!r}"
            )
    ratio_sq = (h_i * h_i) / (h_ip1 * h_ip1)
    return Belm2Coeffs(
        a1=1.0 - ratio_sq,
        a2=ratio_sq,
        b1=-(h_i + h_ip1) / h_ip1,
    )


def belm3_optimal(h_i: float, h_ip1: float, h_ip2: float) -> BelmKCoeffs:
    """Closed-form LTE-optimal 3-step coefficients (fifth-order local error)."""
    for h in (h_i, h_ip1, h_ip2):
        if not (np.isfinite(h) and h > 0):
            raise SingularStepError(
                f"3-step coefficients need positive steps, got {h!r}"
            )

    h0, h1, h2 = h_i, h_ip1, h_ip2
    s01 = h0 + h1
    s12 = h1 + h2
    s012 = h0 + h1 + h2

    a1 = -(
        s01**2
        * (
            3 * h0**2 * h1
            + 2 * h0**2 * h2
            + 2 * h0 * h1**2
            + 4 * h0 * h1 * h2
            + 2 * h0 * h2**2
            - h1**3
            - 2 * h1**2 * h2
            - h1 * h2**2
        )
    ) / (h1**3 * s12**2)
    a2 = (
        h0**2
        * (
            -(h0**2) * h1
            + 2 * h0**2 * h2
            - 2 * h0 * h1**2
            + 4 * h0 * h1 * h2
            + 2 * h0 * h2**2
            - h1**3
            + 2 * h1**2 * h2
            + 3 * h1 * h2**2
        )
    ) / (h1**3 * h2**2)
    a3 = h0**2 * s01**2 / (h2**2 * s12**2)
    b1 = -(s01**2) * s012 / (h1**2 * s12)
    b2 = -(h0**2) * s01 * s012 / (h1**3 * h2)

    return BelmKCoeffs(k=3, a=np.array([a1, a2, a3]), b=np.array([b1, b2]))


def belmk_system(hs: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Order conditions of the k-step method for local steps h_i..h_{i+k-1}.

    Row 0 is the consistency condition sum(a) = 1. Row l expands every term
    about sbar_{i-1}: a_j contributes H_j^l / l! and b_j contributes
    h_{i+j-1} H_j^(l-1) / (l-1)!, where H_j = h_i + ... + h_{i+j-1}.

    Returns:
        (matrix, rhs) of size 2k - 1
    """
    steps = np.asarray(hs, dtype=np.float64)
    k = len(steps)
    if k < 2:
        raise ConfigurationError(f"k-step system needs k >= 2 steps, got {k}")
    if np.any(~np.isfinite(steps)) or np.any(steps <= 0):
        raise SingularStepError(
            f"k-step system needs positive steps, got {steps.tolist()}"
        )

    size = 2 * k - 1
    cumulative = np.cumsum(steps)
    matrix = np.zeros((size, size))
    matrix[0, :k] = 1.0
    for row in range(1, size):
        matrix[row, :k] = cumulative**row / math.factorial(row)
        matrix[row, k:] = (
            steps[: k - 1] * cumulative[: k - 1] ** (row - 1) / math.factorial(row - 1)
        )
    rhs = np.zeros(size)
    rhs[0] = 1.0
    return matrix, rhs


def residual_limit(
    rhs: np.ndarray, config: SolverConfig = DEFAULT_SOLVER_CONFIG
) -> float:
    """Largest accepted residual, RESIDUAL_TOL scaled by ||rhs||_inf.

    A zero right-hand side falls back to the unscaled tolerance.
    """
    scale = float(np.max(np.abs(np.asarray(rhs, dtype=np.float64))))
    return config.RESIDUAL_TOL * (scale if scale > 0.0 else 1.0)


def solve_dense(
    matrix: np.ndarray,
    rhs: np.ndarray,
    config: SolverConfig = DEFAULT_SOLVER_CONFIG,
) -> np.ndarray:
    """Gaussian elimination with partial pivoting on a row-equilibrated copy.

    Raises:
        ConfigurationError: If the system is not square or exceeds the size cap
        SingularSystemError: If a pivot falls below the pivot tolerance or the
            residual check fails
    """
    a = np.array(matrix, dtype=np.float64)
    b = np.array(rhs, dtype=np.float64)
    n = a.shape[0]
    if a.ndim != 2 or a.shape != (n, n) or b.shape != (n,):
        raise ConfigurationError(
            f"solve_dense needs a square system, got {a.shape} and {b.shape}"
        )
    if n > config.MAX_SYSTEM_SIZE:
        raise ConfigurationError(
            f"system size {n} exceeds the cap of {config.MAX_SYSTEM_SIZE}"
        )

    scale = np.max(np.abs(a), axis=1)
    if np.any(scale == 0.0):
        raise SingularSystemError(f"row {int(np.argmin(scale))} of the system is zero")
    a /= scale[:, None]
    b /= scale

    for col in range(n):
        pivot_row = col + int(np.argmax(np.abs(a[col:, col])))
        pivot = a[pivot_row, col]
        if abs(pivot) < config.PIVOT_TOL:
            raise SingularSystemError(
                f"pivot {pivot:.3e} in column {col} is below {config.PIVOT_TOL:g}"
            )
        if pivot_row != col:
            a[[col, pivot_row]] = a[[pivot_row, col]]
            b[[col, pivot_row]] = b[[pivot_row, col]]
        factors = a[col + 1 :, col] / a[col, col]
        a[col + 1 :, col:] -= np.outer(factors, a[col, col:])
        b[col + 1 :] -= factors * b[col]

    x = np.zeros(n)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1 :] @ x[row + 1 :]) / a[row, row]

    residual = float(np.max(np.abs(np.asarray(matrix) @ x - np.asarray(rhs))))
    limit = residual_limit(rhs, config)
    if not residual <= limit:
        raise SingularSystemError(f"residual {residual:.3e} exceeds {limit:.3e}")
    return x


def belmk_optimal(
    hs: Sequence[float], config: SolverConfig = DEFAULT_SOLVER_CONFIG
) -> BelmKCoeffs:
    """LTE-optimal k-step coefficients by solving the order conditions numerically."""
    matrix, rhs = belmk_system(hs)
    solution = solve_dense(matrix, rhs, config)
    k = len(hs)
    residual = float(np.max(np.abs(matrix @ solution - rhs)))
    coeffs = BelmKCoeffs(k=k, a=solution[:k], b=solution[k:], residual=residual)
    if not coeffs.is_invertible:
        raise SingularSystemError(f"solved a_{k} is zero; the method is not invertible")
    return coeffs


def lte_conditions(coeffs: BelmKCoeffs, hs: Sequence[float]) -> np.ndarray:
    """Residual of every order condition; all zero for the optimal coefficients."""
    matrix, rhs = belmk_system(hs)
    return matrix @ coeffs.vector() - rhs


def belm_step_xbar(
    coeffs: BelmKCoeffs,
    history: Sequence[np.ndarray],
    eps: Sequence[np.ndarray],
    hs: Sequence[float],
) -> np.ndarray:
    """Forward step in scaled coordinates.

    Args:
        coeffs: k-step weights
        history: xbar_i, xbar_{i+1}, ..., xbar_{i+k-1}
        eps: eps_i, ..., eps_{i+k-2}
        hs: h_i, ..., h_{i+k-2}

    Returns:
        xbar_{i-1}
    """
    out = coeffs.a[0] * history[0]
    for j in range(1, coeffs.k):
        out = out + coeffs.a[j] * history[j]
    for j in range(coeffs.k - 1):
        out = out + (coeffs.b[j] * hs[j]) * eps[j]
    return out


def belm_invert_xbar(
    coeffs: BelmKCoeffs,
    xbar_prev: np.ndarray,
    history: Sequence[np.ndarray],
    eps: Sequence[np.ndarray],
    hs: Sequence[float],
) -> np.ndarray:
    """Reversed step: recover xbar_{i+k-1} from xbar_{i-1} and xbar_i..xbar_{i+k-2}.

    Raises:
        NotInvertibleError: If a_k is zero
    """
    if not coeffs.is_invertible:
        raise NotInvertibleError(f"a_{coeffs.k} is zero; the step cannot be reversed")
    rest = xbar_prev
    for j in range(coeffs.k - 1):
        rest = rest - coeffs.a[j] * history[j]
    for j in range(coeffs.k - 1):
        rest = rest - (coeffs.b[j] * hs[j]) * eps[j]
    return rest / coeffs.a[-1]


def bdia_as_belm(gamma: float, schedule: NoiseSchedule, i: int) -> Belm2Coeffs:
    """BDIA update at index i written as a 2-step BELM rule in scaled coordinates."""
    if not 1 <= i <= schedule.N - 1:
        raise ConfigurationError(
            f"BDIA step index must lie in 1..{schedule.N - 1}, got {i}"
        )
    grid = grid_of(schedule)
    ratio = gamma * schedule.alpha(i + 1) / schedule.alpha(i - 1)
    return Belm2Coeffs(
        a1=1.0 - ratio,
        a2=ratio,
        b1=-1.0 - ratio * grid.step(i + 1) / grid.step(i),
    )


@dataclass(frozen=True, eq=False)
class InterleavedGrid:
    """EDICT states laid out on one index axis.

    Position j = 4l holds x_l, 4l - 1 holds y_l, 4l - 2 the first intermediate
    and 4l - 3 the second intermediate of step l. ``step_index`` is the
    predictor index used when the state at that position feeds a step.
    """

    alphas: np.ndarray
    sbar: np.ndarray
    step_index: np.ndarray

    @property
    def size(self) -> int:
        return len(self.alphas)

    def step(self, j: int) -> float:
        """Scaled-sigma distance from position j to j + 1."""
        return float(self.sbar[j + 1] - self.sbar[j])


def edict_interleaved_grid(schedule: NoiseSchedule) -> InterleavedGrid:
    """Interleave the EDICT x, y and intermediate states over positions 0..4N."""
    n = schedule.N
    alphas = np.empty(4 * n + 1)
    sbar = np.empty(4 * n + 1)
    step_index = np.empty(4 * n + 1, dtype=int)
    s = schedule.sbar

    alphas[0], sbar[0], step_index[0] = schedule.alpha(0), s[0], 0
    for m in range(1, n + 1):
        top, bottom = schedule.alpha(m), schedule.alpha(m - 1)
        base = 4 * m
        alphas[base - 3 : base + 1] = (bottom, math.sqrt(top * bottom), top, top)
        sbar[base - 3 : base + 1] = (s[m - 1], 0.5 * (s[m] + s[m - 1]), s[m], s[m])
        step_index[base - 3 : base + 1] = m
    return InterleavedGrid(alphas=alphas, sbar=sbar, step_index=step_index)


def edict_phase_coeffs(p: float, schedule: NoiseSchedule, j: int) -> Belm2Coeffs:
    """2-step weights producing interleaved position j from positions j+1, j+2.

    Raises:
        ConfigurationError: If p is outside (0, 1) or j is outside 0..4N-2
    """
    if not 0.0 < p < 1.0:
        raise ConfigurationError(f"EDICT mixing p must lie in (0, 1), got {p}")
    if not 0 <= j <= 4 * schedule.N - 2:
        raise ConfigurationError(
            f"phase index must lie in 0..{4 * schedule.N - 2}, got {j}"
        )

    phase = j % 4
    if phase == 0:
        m = j // 4
        return Belm2Coeffs(
            a1=1.0 - p,
            a2=p * math.sqrt(schedule.alpha(m + 1) / schedule.alpha(m)),
            b1=0.0,
        )
    if phase == 3:
        return Belm2Coeffs(a1=1.0 - p, a2=p, b1=0.0)
    if phase == 2:
        m = (j + 2) // 4
        shrink = math.sqrt(schedule.alpha(m - 1) / schedule.alpha(m))
        return Belm2Coeffs(a1=0.0, a2=shrink, b1=-2.0 * shrink)
    return Belm2Coeffs(a1=0.0, a2=1.0, b1=-2.0)


def root_matrix(coeffs: BelmKCoeffs) -> RootMatrix:
    k = coeffs.k
    matrix = np.zeros((k, k))
    matrix[0, :] = coeffs.a
    if k > 1:
        matrix[np.arange(1, k), np.arange(k - 1)] = 1.0
    return RootMatrix(matrix=matrix)


def stability_check(
    grid: Grid, k: int = 2, config: SolverConfig = DEFAULT_SOLVER_CONFIG
) -> StabilityReport:
    """Zero-stability check of the O-BELM root matrices along a grid.

    For k = 2 the similarity H = [[1, c], [0, c]] with c = 2 / (1 - eta)
    bounds every ||H^-1 R_i H||_1; this needs eta = max h_i^2 / h_{i+1}^2 < 1.
    For k = 3 only the spectral radii of R_i are reported.

    Raises:
        ConfigurationError: If the grid has fewer steps than the method needs
    """
    if k not in (2, 3):
        raise ConfigurationError(f"stability check supports k = 2 or 3, got {k}")
    if grid.N < k:
        raise ConfigurationError(f"stability check for k={k} needs at least {k} steps")

    h = np.asarray(grid.h)
    eta = float(np.max(h[:-1] ** 2 / h[1:] ** 2))

    matrices: List[RootMatrix] = []
    if k == 2:
        for i in range(1, grid.N):
            coeffs2 = belm2_optimal(grid.step(i), grid.step(i + 1))
            matrices.append(root_matrix(coeffs2.as_k()))
    else:
        for i in range(1, grid.N - 1):
            coeffs3 = belm3_optimal(grid.step(i), grid.step(i + 1), grid.step(i + 2))
            matrices.append(root_matrix(coeffs3))
    radii = np.array([m.spectral_radius for m in matrices])

    if k == 3:
        return StabilityReport(
            k=3, eta=eta, norms=np.array([]), spectral_radii=radii, passed=None,
            reason="k >= 3 is reported without a pass/fail verdict",
        )

    if eta >= 1.0:
        logger.warning(f"Stability check indeterminate: eta = {eta:.6g} >= 1")
        return StabilityReport(
            k=2, eta=eta, norms=np.array([]), spectral_radii=radii, passed=False,
            reason="eta >= 1",
        )

    c = 2.0 / (1.0 - eta)
    similarity = np.array([[1.0, c], [0.0, c]])
    inverse = np.linalg.inv(similarity)
    norms = np.array(
        [np.linalg.norm(inverse @ m.matrix @ similarity, 1) for m in matrices]
    )
    passed = bool(np.all(norms <= 1.0 + config.STABILITY_SLACK))
    logger.debug(f"Stability check: eta={eta:.6g}, max norm={np.max(norms):.6g}")
    return StabilityReport(
        k=2, eta=eta, norms=norms, spectral_radii=radii, passed=passed
    )
