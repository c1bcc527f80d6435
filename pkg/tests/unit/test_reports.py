"""Unit tests for report tables and file output."""

import hashlib
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.analysis.reports import (
    coefficient_frame,
    frame_to_records,
    log_summary,
    render_report,
    stability_frame,
    write_report,
    write_sidecar,
)
from src.belm.coeffs import stability_check
from src.belm.exceptions import ConfigurationError
from src.belm.schedule import from_tables, grid_of


@pytest.fixture
def frame() -> pd.DataFrame:
    return pd.DataFrame(
        {"method": ["ddim", "obelm2"], "N": [10, 20], "error": [0.1, np.nan]}
    )


class TestCoefficientFrame:
    """Test cases for coefficient tables."""

    def test_two_step_row(self) -> None:
        """Test h = (1, 2) gives a1 = 0.75, a2 = 0.25, b1 = -1.5."""
        table = coefficient_frame([1.0, 2.0], k=2)

        assert list(table.columns) == [
            "i", "h_i", "h_ip1", "a1", "a2", "b1", "residual"
        ]
        row = table.iloc[0]
        assert row["a1"] == pytest.approx(0.75, abs=1e-15)
        assert row["a2"] == pytest.approx(0.25, abs=1e-15)
        assert row["b1"] == pytest.approx(-1.5, abs=1e-15)
        assert row["residual"] <= 1e-12

    def test_one_row_per_window(self) -> None:
        """Test consecutive windows of steps each get a row."""
        table = coefficient_frame([1.0, 2.0, 4.0, 8.0], k=2)

        assert list(table["i"]) == [1, 2, 3]
        assert list(table["h_ip1"]) == [2.0, 4.0, 8.0]

    def test_three_step_equal_steps(self) -> None:
        """Test equal steps give (-9, 9, 1, -6, -6)."""
        table = coefficient_frame([1.0, 1.0, 1.0], k=3)
        row = table.iloc[0]

        values = [row[c] for c in ("a1", "a2", "a3", "b1", "b2")]
        np.testing.assert_allclose(values, [-9, 9, 1, -6, -6], atol=1e-10)
        assert "h_ip2" in table.columns

    def test_four_step_numeric_solve(self) -> None:
        """Test k = 4 windows are solved numerically with a small residual."""
        table = coefficient_frame(list(np.linspace(1.0, 1.5, 4)), k=4)

        assert len(table) == 1
        assert table.iloc[0]["residual"] <= 1e-10

    def test_too_few_steps_rejected(self) -> None:
        """Test k steps need at least k step sizes."""
        with pytest.raises(ConfigurationError, match="at least 3"):
            coefficient_frame([1.0, 2.0], k=3)


class TestStabilityFrame:
    """Test cases for stability tables."""

    def test_geometric_grid(self) -> None:
        """Test one row per root matrix with the shared eta and verdict."""
        schedule = from_tables([1.0] * 6, [0.0, 1.0, 3.0, 7.0, 15.0, 31.0])
        grid = grid_of(schedule)

        table = stability_frame(stability_check(grid), grid)

        assert len(table) == 4
        np.testing.assert_allclose(table["eta"], 0.25, rtol=1e-12)
        assert (table["norm"] <= 1.0).all()
        assert table["passed"].all()

    def test_indeterminate_grid_has_no_norms(self) -> None:
        """Test equal steps leave the norm column empty."""
        grid = grid_of(from_tables([1.0] * 4, [0.0, 1.0, 2.0, 3.0]))

        table = stability_frame(stability_check(grid), grid)

        assert table["norm"].isna().all()
        assert not table["passed"].any()


class TestRenderReport:
    """Test cases for CSV and JSON serialization."""

    def test_csv_full_precision(self) -> None:
        """Test floats are written with 17 significant digits."""
        text = render_report(pd.DataFrame({"x": [0.1]}), "csv")

        assert text == "x\n0.10000000000000001\n"

    def test_csv_line_endings(self, frame: pd.DataFrame) -> None:
        """Test CSV output uses LF line endings only."""
        text = render_report(frame, "csv")

        assert "\r" not in text
        assert text.splitlines()[0] == "method,N,error"

    def test_json_maps_nan_to_null(self, frame: pd.DataFrame) -> None:
        """Test missing values become JSON nulls."""
        records = json.loads(render_report(frame, "json"))

        assert records[0] == {"method": "ddim", "N": 10, "error": 0.1}
        assert records[1]["error"] is None

    def test_records_are_plain_values(self, frame: pd.DataFrame) -> None:
        """Test records hold None in place of NaN."""
        records = frame_to_records(frame)

        assert records[1]["error"] is None
        assert records[0]["method"] == "ddim"

    def test_unknown_format_rejected(self, frame: pd.DataFrame) -> None:
        """Test only csv and json are accepted."""
        with pytest.raises(ConfigurationError, match="csv, json"):
            render_report(frame, "parquet")


class TestWriteReport:
    """Test cases for report files and sidecars."""

    def test_write_creates_parent_directories(
        self, frame: pd.DataFrame, tmp_path: Path
    ) -> None:
        """Test nested output paths are created."""
        target = tmp_path / "nested" / "report.csv"

        written = write_report(frame, target, "csv")

        assert written == target
        assert target.read_bytes().startswith(b"method,N,error\n")

    def test_rewrite_is_byte_identical(
        self, frame: pd.DataFrame, tmp_path: Path
    ) -> None:
        """Test writing the same table twice gives identical bytes."""
        first = write_report(frame, tmp_path / "a.json", "json").read_bytes()
        second = write_report(frame, tmp_path / "b.json", "json").read_bytes()

        assert first == second

    def test_sidecar_records_hash(self, frame: pd.DataFrame, tmp_path: Path) -> None:
        """Test the sidecar holds the config and the SHA-256 of the output."""
        target = write_report(frame, tmp_path / "report.csv", "csv")

        sidecar = write_sidecar(target, {"command": "roundtrip", "seed": 0})

        assert sidecar.name == "report.csv.meta.json"
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
        assert meta["sha256"] == hashlib.sha256(target.read_bytes()).hexdigest()
        assert meta["config"] == {"command": "roundtrip", "seed": 0}
        assert meta["output"] == "report.csv"


class TestLogSummary:
    """Test cases for the framed summary block."""

    def test_framed_block(self, caplog: pytest.LogCaptureFixture) -> None:
        """Test the title and lines are logged between rules."""
        with caplog.at_level(logging.INFO, logger="src.analysis.reports"):
            log_summary("Roundtrip Summary", ["Trials per row: 10"])

        messages = [record.getMessage() for record in caplog.records]
        assert messages[0] == f"\n{'=' * 60}"
        assert messages[1] == "Roundtrip Summary:"
        assert messages[2] == "Trials per row: 10"
        assert messages[3] == f"{'=' * 60}\n"
