"""Command-line surface of the sampler lab."""

from .main import build_parser, main, run
from .run_config import RunConfig, resolve_run_config

__all__ = ["RunConfig", "build_parser", "main", "resolve_run_config", "run"]
