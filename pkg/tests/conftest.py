"""Shared pytest fixtures and configuration."""

import pytest


@pytest.fixture(autouse=True)
def setup_test_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    """Pin the environment so configuration defaults are reproducible."""
    for name in (
        "BELM_LAB_THREADS",
        "BELM_LAB_SEED",
        "BELM_LAB_FORMAT",
        "BELM_PIVOT_TOL",
        "BELM_RESIDUAL_TOL",
        "BELM_OBELM3_MAX_STEPS",
        "BELM_OBELM3_GROWTH_LIMIT",
    ):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.setenv("LOG_LEVEL", "INFO")
