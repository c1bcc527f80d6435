"""Report tables, file output and summary logging."""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np
import pandas as pd

from ..belm.coeffs import (
    BelmKCoeffs,
    StabilityReport,
    belm2_optimal,
    belm3_optimal,
    belmk_optimal,
    lte_conditions,
)
from ..belm.config import DEFAULT_SOLVER_CONFIG, SolverConfig
from ..belm.exceptions import ConfigurationError
from ..belm.schedule import Grid
from .config import FORMATS


logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def log_summary(title: str, lines: Sequence[str]) -> None:
    """Log a framed block of summary lines."""
    logger.info(f"\n{'=' * 60}")
    logger.info(f"{title}:")
    for line in lines:
        logger.info(line)
    logger.info(f"{'=' * 60}\n")


def _step_column(offset: int) -> str:
    return "h_i" if offset == 0 else f"h_ip{offset}"


def coefficient_frame(
    hs: Sequence[float], k: int = 2, config: SolverConfig = DEFAULT_SOLVER_CONFIG
) -> pd.DataFrame:
    """Optimal k-step coefficients for every window of consecutive steps.

    Args:
        hs: Step sizes h_1, h_2, ...
        k: Number of steps of the rule
        config: Solver tolerances for k >= 4

    Returns:
        One row per window: i, h_i, h_ip1, ..., a1..ak, b1..b_{k-1}, residual

    Raises:
        ConfigurationError: If fewer than k step sizes are given
    """
    if k < 2:
        raise ConfigurationError(f"coefficient table needs k >= 2, got {k}")
    if len(hs) < k:
        raise ConfigurationError(f"k={k} needs at least {k} step sizes, got {len(hs)}")

    rows: List[Dict[str, float]] = []
    for start in range(len(hs) - k + 1):
        window = [float(h) for h in hs[start : start + k]]
        coeffs: BelmKCoeffs
        if k == 2:
            coeffs = belm2_optimal(*window).as_k()
        elif k == 3:
            coeffs = belm3_optimal(*window)
        else:
            coeffs = belmk_optimal(window, config)
        row: Dict[str, float] = {"i": start + 1}
        row.update({_step_column(j): h for j, h in enumerate(window)})
        row.update({f"a{j + 1}": float(a) for j, a in enumerate(coeffs.a)})
        row.update({f"b{j + 1}": float(b) for j, b in enumerate(coeffs.b)})
        row["residual"] = float(np.max(np.abs(lte_conditions(coeffs, window))))
        rows.append(row)
    return pd.DataFrame(rows)


def stability_frame(report: StabilityReport, grid: Grid) -> pd.DataFrame:
    """Per-index root-matrix diagnostics of a stability check."""
    count = len(report.spectral_radii)
    indices = np.arange(1, count + 1)
    frame = pd.DataFrame(
        {
            "i": indices,
            "h_i": grid.h[:count],
            "h_ip1": grid.h[1 : count + 1],
            "spectral_radius": report.spectral_radii,
        }
    )
    frame["norm"] = report.norms if len(report.norms) == count else np.nan
    frame["eta"] = report.eta
    frame["passed"] = report.passed
    return frame


def frame_to_records(frame: pd.DataFrame) -> List[Dict[str, Any]]:
    """Rows as plain dicts with NaN mapped to None."""
    cleaned = frame.astype(object).where(frame.notna(), None)
    return cleaned.to_dict(orient="records")


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def render_report(frame: pd.DataFrame, fmt: str) -> str:
    """Serialize a report table as CSV or JSON text."""
    if fmt == "csv":
        return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    if fmt == "json":
        records = frame_to_records(frame)
        return json.dumps(records, indent=2, default=_json_default) + "\n"
    raise ConfigurationError(
        f"output format must be one of {', '.join(FORMATS)}, got {fmt!r}"
    )


def write_report(frame: pd.DataFrame, path: Union[str, Path], fmt: str) -> Path:
    """Write a report table as UTF-8 with LF line endings.

    Returns:
        Path of the written file
    """
    target = Path(path)
    text = render_report(frame, fmt)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    logger.info(f"Wrote {len(frame)} rows to {target}")
    return target


def file_sha256(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_sidecar(output: Union[str, Path], resolved: Dict[str, Any]) -> Path:
    """Record the resolved run configuration and output hash next to ``output``."""
    output = Path(output)
    sidecar = output.with_name(output.name + ".meta.json")
    meta = {
        "config": resolved,
        "output": output.name,
        "sha256": file_sha256(output),
    }
    with open(sidecar, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(meta, indent=2, sort_keys=True, default=_json_default))
        f.write("\n")
    logger.debug(f"Wrote sidecar {sidecar}")
    return sidecar
