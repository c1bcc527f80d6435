"""Numerical studies of the BELM samplers and their report output."""

from .config import StudyConfig
from .reports import coefficient_frame, stability_frame, write_report, write_sidecar
from .studies import (
    ConvergenceReport,
    LteReport,
    PerturbationReport,
    RoundtripReport,
    convergence_study,
    fit_order,
    lte_study,
    perturbation_study,
    roundtrip_study,
)

__all__ = [
    "ConvergenceReport",
    "LteReport",
    "PerturbationReport",
    "RoundtripReport",
    "StudyConfig",
    "coefficient_frame",
    "convergence_study",
    "fit_order",
    "lte_study",
    "perturbation_study",
    "roundtrip_study",
    "stability_frame",
    "write_report",
    "write_sidecar",
]
