"""Resolved configuration of one command-line run.

Values are layered as ``--config`` JSON > command-line flags > environment >
defaults. A ``.env`` file in the working directory is loaded before the
environment is read.
"""

import dataclasses
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import jsonschema
from dotenv import load_dotenv

from ..analysis.config import FORMATS, StudyConfig
from ..belm.exceptions import ConfigurationError
from ..belm.samplers import Method, method_from_name


logger = logging.getLogger(__name__)

COMMANDS: Tuple[str, ...] = (
    "coeffs",
    "sample",
    "invert",
    "roundtrip",
    "convergence",
    "lte",
    "stability",
    "perturbation",
)
PROBLEMS: Tuple[str, ...] = ("gaussian", "polynomial", "synthetic", "zero")
LOG_LEVELS: Tuple[str, ...] = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

_NUMBER_LIST = {"type": "array", "items": {"type": "number"}, "minItems": 1}

RUN_CONFIG_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "method": {"type": "string"},
        "gamma": {"type": "number"},
        "p": {"type": "number"},
        "schedule_file": {"type": ["string", "null"]},
        "train_steps": {"type": "integer"},
        "beta_start": {"type": "number"},
        "beta_end": {"type": "number"},
        "steps": {"type": "integer"},
        "ns": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "hs": {"oneOf": [_NUMBER_LIST, {"type": "null"}]},
        "k": {"type": "integer"},
        "problem": {"enum": list(PROBLEMS)},
        "s": {"type": "number"},
        "poly": _NUMBER_LIST,
        "predictor_seed": {"type": "integer"},
        "dim": {"type": "integer"},
        "trials": {"type": "integer"},
        "seed": {"type": "integer"},
        "delta": {"type": "number"},
        "output": {"type": ["string", "null"]},
        "format": {"enum": list(FORMATS)},
        "threads": {"type": "integer"},
        "log_level": {"type": "string"},
    },
    "additionalProperties": False,
}


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI run needs, after all sources are merged.

    ``method`` may list several comma-separated methods for the roundtrip
    command; other commands use the first.
    """

    command: str
    method: str = "obelm2"
    gamma: float = 1.0
    p: float = 0.93

    # Schedule
    schedule_file: Optional[str] = None
    train_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    steps: int = 50
    ns: Tuple[int, ...] = (8, 16, 32, 64)
    hs: Optional[Tuple[float, ...]] = None
    k: int = 2

    # Problem
    problem: str = "gaussian"
    s: float = 1.0
    poly: Tuple[float, ...] = (0.0, 0.0, 0.0, 1.0)
    predictor_seed: int = 0
    dim: int = 4

    # Studies
    trials: int = 10
    seed: int = 0
    delta: float = 1e-6

    # Output
    output: Optional[str] = None
    format: str = "csv"
    threads: int = 1
    log_level: str = "INFO"

    def __post_init__(self) -> None:
        """Validate configuration after initialization."""
        object.__setattr__(self, "ns", tuple(int(n) for n in self.ns))
        object.__setattr__(self, "poly", tuple(float(c) for c in self.poly))
        if self.hs is not None:
            object.__setattr__(self, "hs", tuple(float(h) for h in self.hs))
        object.__setattr__(self, "log_level", self.log_level.upper())

        if self.command not in COMMANDS:
            raise ConfigurationError(
                f"unknown command {self.command!r}; "
                f"expected one of {', '.join(COMMANDS)}"
            )
        if self.problem not in PROBLEMS:
            raise ConfigurationError(
                f"unknown problem {self.problem!r}; "
                f"expected one of {', '.join(PROBLEMS)}"
            )
        if self.format not in FORMATS:
            raise ConfigurationError(
                f"output format must be one of {', '.join(FORMATS)}, "
                f"got {self.format!r}"
            )
        if self.log_level not in LOG_LEVELS:
            raise ConfigurationError(f"unknown log level {self.log_level!r}")
        for name in ("steps", "dim", "trials", "threads", "train_steps"):
            if getattr(self, name) < 1:
                raise ConfigurationError(
                    f"{name} must be positive, got {getattr(self, name)}"
                )
        if self.seed < 0 or self.predictor_seed < 0:
            raise ConfigurationError("seeds must be non-negative")
        if not 2 <= self.k <= 11:
            raise ConfigurationError(f"k must lie in 2..11, got {self.k}")
        if self.schedule_file is not None and not Path(self.schedule_file).is_file():
            raise ConfigurationError(f"schedule file not found: {self.schedule_file}")
        # parses every method name and parameter
        self.methods()

    def methods(self) -> List[Method]:
        names = [name for name in self.method.split(",") if name.strip()]
        if not names:
            raise ConfigurationError("at least one method is required")
        return [method_from_name(name, gamma=self.gamma, p=self.p) for name in names]

    def output_path(self) -> Path:
        if self.output:
            return Path(self.output)
        return Path(f"belm_{self.command}.{self.format}")

    def study_config(self) -> StudyConfig:
        return StudyConfig(
            THREADS=self.threads,
            SEED=self.seed,
            FORMAT=self.format,
            LOG_LEVEL=self.log_level,
        )

    def to_dict(self) -> Dict[str, Any]:
        """JSON-ready view of the resolved values."""
        values = dataclasses.asdict(self)
        for key, value in values.items():
            if isinstance(value, tuple):
                values[key] = list(value)
        return values


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Read and validate a ``--config`` JSON document.

    Raises:
        ConfigurationError: If the file is missing, not JSON or malformed
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
        jsonschema.validate(document, RUN_CONFIG_SCHEMA)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config file {path} is not valid JSON: {e}") from e
    except jsonschema.ValidationError as e:
        raise ConfigurationError(f"config file {path} is malformed: {e.message}") from e
    except OSError as e:
        raise ConfigurationError(f"cannot read config file {path}: {e}") from e
    logger.info(f"Loaded run config from {path}")
    return document


def _environment_defaults() -> Dict[str, Any]:
    study = StudyConfig()
    return {
        "seed": study.SEED,
        "format": study.FORMAT,
        "threads": study.THREADS,
        "log_level": study.LOG_LEVEL,
    }


def resolve_run_config(
    flags: Mapping[str, Any], config_file: Optional[Union[str, Path]] = None
) -> RunConfig:
    """Merge defaults, environment, flags and an optional config file.

    A BELM_LAB_THREADS value in the environment is also an upper bound:
    flags and config files may lower the thread count but not raise it.

    Args:
        flags: Parsed command-line values; None means the flag was not given
        config_file: Optional JSON document overriding everything else

    Returns:
        Validated RunConfig
    """
    load_dotenv()
    values: Dict[str, Any] = _environment_defaults()
    values.update({key: value for key, value in flags.items() if value is not None})
    if config_file is not None:
        values.update(load_config_file(config_file))
    if "command" not in values:
        raise ConfigurationError("no command given")

    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigurationError(f"unknown run settings: {', '.join(unknown)}")

    if os.getenv("BELM_LAB_THREADS") is not None:
        cap = StudyConfig().THREADS
        if isinstance(values["threads"], int) and values["threads"] > cap:
            logger.info(
                f"Capping threads at {cap} from BELM_LAB_THREADS "
                f"(requested {values['threads']})"
            )
            values["threads"] = cap
    return RunConfig(**values)
