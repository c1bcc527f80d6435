"""Numerical tolerances for coefficient construction and sampling."""

import os
from dataclasses import dataclass, field

from .exceptions import ConfigurationError


def _env_float(name: str, default: str) -> float:
    return float(os.getenv(name, default))


def _env_int(name: str, default: str) -> int:
    return int(os.getenv(name, default))


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances shared by the coefficient solvers and trajectory drivers."""

    # Dense solver
    PIVOT_TOL: float = field(
        default_factory=lambda: _env_float("BELM_PIVOT_TOL", "1e-14")
    )
    RESIDUAL_TOL: float = field(
        default_factory=lambda: _env_float("BELM_RESIDUAL_TOL", "1e-10")
    )
    MAX_SYSTEM_SIZE: int = 21  # k <= 11

    # Schedules
    VP_TOL: float = 1e-12
    GRID_TOL: float = 1e-12

    # Drivers
    OBELM3_MAX_STEPS: int = field(
        default_factory=lambda: _env_int("BELM_OBELM3_MAX_STEPS", "10000")
    )
    # The 3-step rule fails once |x| exceeds this multiple of its starting scale
    OBELM3_GROWTH_LIMIT: float = field(
        default_factory=lambda: _env_float("BELM_OBELM3_GROWTH_LIMIT", "1e6")
    )

    # Stability report
    STABILITY_SLACK: float = 1e-12

    # Order fits ignore errors below ROUNDING_FLOOR_FACTOR * machine epsilon
    ROUNDING_FLOOR_FACTOR: float = 100.0

    def __post_init__(self) -> None:
        """Validate configuration after initialization."""
        if not 0 < self.PIVOT_TOL < 1:
            raise ConfigurationError(
                f"PIVOT_TOL must lie in (0, 1), got {self.PIVOT_TOL}"
            )
        if not 0 < self.RESIDUAL_TOL < 1:
            raise ConfigurationError(
                f"RESIDUAL_TOL must lie in (0, 1), got {self.RESIDUAL_TOL}"
            )
        if self.OBELM3_MAX_STEPS < 3:
            raise ConfigurationError(
                f"OBELM3_MAX_STEPS must be at least 3, got {self.OBELM3_MAX_STEPS}"
            )
        if not self.OBELM3_GROWTH_LIMIT > 1:
            raise ConfigurationError(
                "OBELM3_GROWTH_LIMIT must exceed 1, "
                f"got {self.OBELM3_GROWTH_LIMIT}"
            )


DEFAULT_SOLVER_CONFIG = SolverConfig()
