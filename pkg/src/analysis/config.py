"""Configuration for the analysis harness."""

import os
from dataclasses import dataclass, field
from typing import Tuple

from ..belm.exceptions import ConfigurationError


FORMATS: Tuple[str, ...] = ("csv", "json")


@dataclass(frozen=True)
class StudyConfig:
    """Parallelism, seeding and output settings shared by every study."""

    # Execution
    THREADS: int = field(
        default_factory=lambda: int(os.getenv("BELM_LAB_THREADS", "1"))
    )
    SEED: int = field(default_factory=lambda: int(os.getenv("BELM_LAB_SEED", "0")))

    # Output
    FORMAT: str = field(
        default_factory=lambda: os.getenv("BELM_LAB_FORMAT", "csv").lower()
    )

    # Study parameters
    MIN_TRIALS: int = 10
    MIN_CONVERGENCE_STEPS: int = 4
    CONVERGENCE_SBAR_MAX: float = 4.0
    LTE_SBAR_START: float = 1.0
    LTE_STEP_RATIO: float = 1.5

    # Logging
    LOG_LEVEL: str = field(default_factory=lambda: os.getenv("LOG_LEVEL", "INFO"))

    def __post_init__(self) -> None:
        """Validate configuration after initialization."""
        if self.THREADS < 1:
            raise ConfigurationError(
                f"BELM_LAB_THREADS must be at least 1, got {self.THREADS}"
            )
        if self.SEED < 0:
            raise ConfigurationError(f"seed must be non-negative, got {self.SEED}")
        if self.FORMAT not in FORMATS:
            raise ConfigurationError(
                f"output format must be one of {', '.join(FORMATS)}, "
                f"got {self.FORMAT!r}"
            )
        if self.CONVERGENCE_SBAR_MAX <= 0:
            raise ConfigurationError("CONVERGENCE_SBAR_MAX must be positive")
        if self.LTE_STEP_RATIO <= 0:
            raise ConfigurationError("LTE_STEP_RATIO must be positive")
