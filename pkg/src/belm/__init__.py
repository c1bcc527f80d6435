"""BELM samplers: schedules, predictors, multistep coefficients and drivers."""

from .coeffs import (
    Belm2Coeffs,
    BelmKCoeffs,
    RootMatrix,
    StabilityReport,
    bdia_as_belm,
    belm2_optimal,
    belm3_optimal,
    belmk_optimal,
    belmk_system,
    edict_interleaved_grid,
    edict_phase_coeffs,
    root_matrix,
    solve_dense,
    stability_check,
)
from .config import SolverConfig
from .exceptions import (
    BelmError,
    ConfigurationError,
    NotInvertibleError,
    NumericalFailureError,
)
from .predictor import (
    GaussianProblem,
    NoisePredictor,
    PolynomialProblem,
    SyntheticPredictor,
    ZeroPredictor,
)
from .samplers import (
    BDIA,
    DDIM,
    EDICT,
    OBELM2,
    OBELM3,
    InversionSeed,
    Method,
    Trajectory,
    invert,
    method_from_name,
    sample,
)
from .schedule import Grid, NoiseSchedule, from_tables, grid_of, vp_linear_schedule

__all__ = [
    "BDIA",
    "DDIM",
    "EDICT",
    "OBELM2",
    "OBELM3",
    "Belm2Coeffs",
    "BelmError",
    "BelmKCoeffs",
    "ConfigurationError",
    "GaussianProblem",
    "Grid",
    "InversionSeed",
    "Method",
    "NoisePredictor",
    "NoiseSchedule",
    "NotInvertibleError",
    "NumericalFailureError",
    "PolynomialProblem",
    "RootMatrix",
    "SolverConfig",
    "StabilityReport",
    "SyntheticPredictor",
    "Trajectory",
    "ZeroPredictor",
    "bdia_as_belm",
    "belm2_optimal",
    "belm3_optimal",
    "belmk_optimal",
    "belmk_system",
    "edict_interleaved_grid",
    "edict_phase_coeffs",
    "from_tables",
    "grid_of",
    "invert",
    "method_from_name",
    "root_matrix",
    "sample",
    "solve_dense",
    "stability_check",
    "vp_linear_schedule",
]
