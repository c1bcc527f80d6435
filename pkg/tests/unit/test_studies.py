"""Unit tests for the convergence, local-error, roundtrip and perturbation studies."""

import logging

import numpy as np
import pandas as pd
import pytest

from src.analysis.config import StudyConfig
from src.analysis.studies import (
    fit_order,
    local_schedule,
    convergence_study,
    lte_study,
    perturbation_study,
    roundtrip_study,
    smooth_schedule,
)
from src.belm.coeffs import stability_check
from src.belm.exceptions import (
    ConfigurationError,
    InsufficientDataError,
    NumericalFailureError,
)
from src.belm.predictor import (
    GaussianProblem,
    PolynomialProblem,
    SyntheticPredictor,
    ZeroPredictor,
)
from src.belm.samplers import BDIA, DDIM, EDICT, OBELM2, OBELM3
from src.belm.schedule import (
    NoiseSchedule,
    from_tables,
    grid_of,
    sub_schedule,
    vp_linear_schedule,
)


LTE_STEPS = (0.04, 0.02, 0.01, 0.005)


def _training_schedule(n: int) -> NoiseSchedule:
    return sub_schedule(vp_linear_schedule(1000, 1e-4, 0.02), n)


@pytest.fixture
def config() -> StudyConfig:
    return StudyConfig(THREADS=1, SEED=0, FORMAT="csv")


@pytest.fixture
def gaussian() -> GaussianProblem:
    """Gaussian data with s = 0.5, bound to a placeholder schedule."""
    return GaussianProblem(s=0.5, schedule=_training_schedule(10), d=2)


@pytest.fixture
def cubic() -> PolynomialProblem:
    return PolynomialProblem(
        coeffs=(0.5, -1.0, 0.25, 1.0), schedule=_training_schedule(10), d=2
    )


class TestFitOrder:
    """Test cases for the log-log order fit."""

    def test_exact_power_law(self) -> None:
        """Test errors c h^2 give slope 2."""
        hs = [0.1, 0.05, 0.025, 0.0125]

        slope = fit_order([(h, 3.0 * h**2) for h in hs])

        assert slope == pytest.approx(2.0, abs=1e-9)

    def test_constant_errors(self) -> None:
        """Test constant errors give slope 0."""
        slope = fit_order([(h, 1e-3) for h in (0.1, 0.2, 0.4, 0.8)])

        assert abs(slope) <= 1e-9

    def test_mixed_power_law_follows_dominant_term(self) -> None:
        """Test h^2 + h^3 on [1e-3, 1e-2] fits close to 2."""
        hs = np.geomspace(1e-3, 1e-2, 6)

        slope = fit_order([(h, h**2 + h**3) for h in hs])

        assert 1.9 <= slope <= 2.1

    def test_rounding_floor_excludes_errors(self) -> None:
        """Test errors at rounding level leave too few points."""
        pairs = [(0.1, 1e-3), (0.05, 1e-4), (0.025, 1e-16), (0.0125, 0.0)]

        with pytest.raises(InsufficientDataError, match="rounding floor"):
            fit_order(pairs)

    def test_non_positive_step_rejected(self) -> None:
        """Test step sizes must be positive."""
        with pytest.raises(ConfigurationError, match="positive"):
            fit_order([(0.0, 1.0), (0.1, 1.0), (0.2, 1.0)])

    def test_non_finite_error_rejected(self) -> None:
        """Test a non-finite error is a numerical failure."""
        with pytest.raises(NumericalFailureError, match="not finite"):
            fit_order([(0.1, np.inf), (0.2, 1.0), (0.4, 1.0)])


class TestConvergenceStudy:
    """Test cases for global convergence orders."""

    NS = (16, 32, 64, 128)

    def test_ddim_is_first_order(
        self, gaussian: GaussianProblem, config: StudyConfig
    ) -> None:
        """Test DDIM's fitted global order lies in [0.7, 1.3]."""
        report = convergence_study(DDIM(), gaussian, self.NS, config)

        assert report.fitted_order is not None
        assert 0.7 <= report.fitted_order <= 1.3

    def test_obelm2_is_second_order(
        self, gaussian: GaussianProblem, config: StudyConfig
    ) -> None:
        """Test O-BELM's fitted global order lies in [1.7, 2.3]."""
        report = convergence_study(OBELM2(), gaussian, self.NS, config)

        assert report.fitted_order is not None
        assert 1.7 <= report.fitted_order <= 2.3

    def test_errors_shrink_with_refinement(
        self, gaussian: GaussianProblem, config: StudyConfig
    ) -> None:
        """Test the x_0 error decreases as N grows."""
        report = convergence_study(OBELM2(), gaussian, self.NS, config)
        errors = [row.global_error for row in report.rows]

        assert all(b < a for a, b in zip(errors, errors[1:]))
        assert all(row.max_grid_error >= row.global_error for row in report.rows)

    def test_zero_field_skips_fit(self, config: StudyConfig) -> None:
        """Test a constant solution gives rounding-level errors and no fit."""
        problem = PolynomialProblem(
            coeffs=(1.0,), schedule=_training_schedule(10), d=2
        )

        report = convergence_study(DDIM(), problem, (8, 16, 32), config)

        assert report.fitted_order is None
        assert max(row.global_error for row in report.rows) <= 1e-13

    @pytest.mark.parametrize("ns", [(8, 16), (16, 8, 32), (2, 4, 8), (8, 8, 16)])
    def test_invalid_step_counts_rejected(
        self, ns: tuple, gaussian: GaussianProblem, config: StudyConfig
    ) -> None:
        """Test short, unsorted or too-coarse step counts are rejected."""
        with pytest.raises(ConfigurationError):
            convergence_study(DDIM(), gaussian, ns, config)

    def test_frame_reports_order_on_last_row(
        self, gaussian: GaussianProblem, config: StudyConfig
    ) -> None:
        """Test the fitted order only appears on the last row."""
        frame = convergence_study(DDIM(), gaussian, (8, 16, 32), config).to_frame()

        assert list(frame.columns) == [
            "method",
            "problem",
            "N",
            "h_max",
            "global_error",
            "max_grid_error",
            "fitted_order",
        ]
        assert frame["fitted_order"].iloc[:-1].isna().all()
        assert not np.isnan(frame["fitted_order"].iloc[-1])
        assert (frame["problem"] == "gaussian").all()

    def test_threads_do_not_change_results(self, gaussian: GaussianProblem) -> None:
        """Test a parallel run reproduces the serial report exactly."""
        serial = convergence_study(
            OBELM2(), gaussian, (8, 16, 32), StudyConfig(THREADS=1)
        )
        parallel = convergence_study(
            OBELM2(), gaussian, (8, 16, 32), StudyConfig(THREADS=3)
        )

        pd.testing.assert_frame_equal(serial.to_frame(), parallel.to_frame())

    def test_smooth_schedule_grows_steps(self) -> None:
        """Test the convergence grid has increasing steps from sbar = 0."""
        grid = grid_of(smooth_schedule(12, 4.0))

        assert grid.sbar[0] == 0.0
        assert grid.sbar[-1] == pytest.approx(4.0, rel=1e-12)
        assert np.all(np.diff(grid.h) > 0)


class TestLteStudy:
    """Test cases for one-step errors with exact history."""

    def test_local_schedule_steps(self, config: StudyConfig) -> None:
        """Test the local grid uses steps h, r h, r^2 h from sbar = 1."""
        grid = grid_of(local_schedule(0.1, 3, config))

        np.testing.assert_allclose(grid.sbar[0], 1.0, rtol=1e-12)
        np.testing.assert_allclose(grid.h, [0.1, 0.15, 0.225], rtol=1e-9)

    def test_obelm2_cubic_is_third_order(
        self, cubic: PolynomialProblem, config: StudyConfig
    ) -> None:
        """Test O-BELM's local slope on a cubic lies in [2.7, 3.3]."""
        report = lte_study(OBELM2(), cubic, LTE_STEPS, config)

        assert report.fitted_order is not None
        assert 2.7 <= report.fitted_order <= 3.3

    def test_ddim_cubic_is_second_order(
        self, cubic: PolynomialProblem, config: StudyConfig
    ) -> None:
        """Test DDIM's local slope on a cubic lies in [1.7, 2.3]."""
        report = lte_study(DDIM(), cubic, LTE_STEPS, config)

        assert report.fitted_order is not None
        assert 1.7 <= report.fitted_order <= 2.3

    def test_obelm2_quadratic_skips_fit(self, config: StudyConfig) -> None:
        """Test quadratic solutions are reproduced to rounding level."""
        problem = PolynomialProblem(
            coeffs=(1.0, -0.5, 2.0), schedule=_training_schedule(10), d=2
        )

        report = lte_study(OBELM2(), problem, LTE_STEPS, config)

        assert report.fitted_order is None
        assert max(row.error for row in report.rows) <= 1e-12

    def test_order_hierarchy_on_gaussian(
        self, gaussian: GaussianProblem, config: StudyConfig
    ) -> None:
        """Test the measured local orders of every method on one problem."""
        orders = {
            label: lte_study(method, gaussian, LTE_STEPS, config).fitted_order
            for label, method in [
                ("ddim", DDIM()),
                ("bdia", BDIA(gamma=1.0)),
                ("obelm2", OBELM2()),
                ("obelm3", OBELM3()),
                ("edict", EDICT(p=0.93)),
            ]
        }

        assert all(order is not None for order in orders.values())
        assert 1.7 <= orders["ddim"] <= 2.3
        assert 1.7 <= orders["bdia"] <= 2.3
        assert 2.7 <= orders["obelm2"] <= 3.3
        assert 4.4 <= orders["obelm3"] <= 5.6
        assert 0.7 <= orders["edict"] <= 1.3
        assert orders["edict"] < orders["ddim"]
        assert orders["obelm2"] > max(orders["ddim"], orders["bdia"], orders["edict"])

    def test_too_few_steps_rejected(
        self, cubic: PolynomialProblem, config: StudyConfig
    ) -> None:
        """Test a fit needs at least three step sizes."""
        with pytest.raises(ConfigurationError, match="at least 3"):
            lte_study(DDIM(), cubic, (0.1, 0.05), config)

    def test_negative_step_rejected(
        self, cubic: PolynomialProblem, config: StudyConfig
    ) -> None:
        """Test step sizes must be positive."""
        with pytest.raises(ConfigurationError, match="positive"):
            lte_study(DDIM(), cubic, (0.1, -0.05, 0.01), config)

    def test_frame_columns(self, cubic: PolynomialProblem, config: StudyConfig) -> None:
        """Test the report table layout."""
        frame = lte_study(DDIM(), cubic, LTE_STEPS, config).to_frame()

        assert list(frame.columns) == [
            "method",
            "problem",
            "h",
            "error",
            "fitted_order",
        ]
        assert len(frame) == len(LTE_STEPS)


class TestRoundtripStudy:
    """Test cases for reconstruction errors."""

    def test_exact_methods_on_synthetic_predictor(self, config: StudyConfig) -> None:
        """Test O-BELM and EDICT recover x_N to 1e-10 at N = 20."""
        schedule = _training_schedule(20)
        predictor = SyntheticPredictor(seed=3, schedule=schedule, d=4)

        report = roundtrip_study(
            [OBELM2(), EDICT(p=0.93)], predictor, schedule, trials=10, seed=1,
            config=config,
        )

        worst = report.max_rel_error_by_method()
        assert worst["obelm2"] <= 1e-10
        assert worst["edict(p=0.93)"] <= 1e-10

    def test_ddim_is_inexact(self, config: StudyConfig) -> None:
        """Test DDIM's roundtrip error exceeds 1e-4 on the Gaussian problem."""
        schedule = _training_schedule(10)
        problem = GaussianProblem(s=1.0, schedule=schedule, d=4)

        report = roundtrip_study([DDIM()], problem, schedule, trials=10, config=config)

        assert report.rows[0].max_rel_error > 1e-4

    def test_exact_methods_beat_ddim_by_four_orders(self, config: StudyConfig) -> None:
        """Test every exact method is at least 1e4 times better than DDIM."""
        schedule = _training_schedule(10)
        problem = GaussianProblem(s=1.0, schedule=schedule, d=4)

        report = roundtrip_study(
            [DDIM(), OBELM2(), EDICT(p=0.93), BDIA(gamma=0.9)],
            problem,
            schedule,
            trials=10,
            config=config,
        )

        worst = report.max_rel_error_by_method()
        for label in ("obelm2", "edict(p=0.93)", "bdia(gamma=0.9)"):
            assert worst[label] * 1e4 <= worst["ddim"]

    def test_bdia_without_inverse_is_skipped(
        self, config: StudyConfig, caplog: pytest.LogCaptureFixture
    ) -> None:
        """Test BDIA with gamma = 0 is excluded with a note."""
        schedule = _training_schedule(10)
        predictor = SyntheticPredictor(seed=3, schedule=schedule, d=4)

        with caplog.at_level(logging.WARNING):
            report = roundtrip_study(
                [BDIA(gamma=0.0), OBELM2()], predictor, schedule, trials=10,
                config=config,
            )

        assert [row.method for row in report.rows] == ["obelm2"]
        assert len(report.notes) == 1
        assert "gamma = 0" in caplog.text

    def test_rows_follow_method_then_schedule_order(self, config: StudyConfig) -> None:
        """Test one row per method and N in configuration order."""
        schedules = [_training_schedule(10), _training_schedule(20)]
        predictor = SyntheticPredictor(seed=3, schedule=schedules[0], d=4)

        frame = roundtrip_study(
            [OBELM2(), DDIM()], predictor, schedules, trials=10, config=config
        ).to_frame()

        assert list(zip(frame["method"], frame["N"])) == [
            ("obelm2", 10),
            ("obelm2", 20),
            ("ddim", 10),
            ("ddim", 20),
        ]
        assert (frame["trials"] == 10).all()
        assert (frame["mse"] >= 0).all()

    def test_too_few_trials_rejected(self, config: StudyConfig) -> None:
        """Test at least ten trials are required."""
        schedule = _training_schedule(10)
        predictor = SyntheticPredictor(seed=3, schedule=schedule, d=4)

        with pytest.raises(ConfigurationError, match="at least 10 trials"):
            roundtrip_study([OBELM2()], predictor, schedule, trials=5, config=config)

    def test_unknown_dimension_rejected(self, config: StudyConfig) -> None:
        """Test predictors without a dimension need an explicit one."""
        with pytest.raises(ConfigurationError, match="dimension"):
            roundtrip_study(
                [OBELM2()], ZeroPredictor(), _training_schedule(10), trials=10,
                config=config,
            )

    def test_deterministic_across_thread_counts(self) -> None:
        """Test serial and parallel runs give identical tables."""
        schedules = [_training_schedule(10), _training_schedule(20)]
        predictor = SyntheticPredictor(seed=3, schedule=schedules[0], d=4)
        methods = [OBELM2(), EDICT(p=0.93)]

        serial = roundtrip_study(
            methods, predictor, schedules, trials=10, seed=4,
            config=StudyConfig(THREADS=1),
        )
        parallel = roundtrip_study(
            methods, predictor, schedules, trials=10, seed=4,
            config=StudyConfig(THREADS=4),
        )

        pd.testing.assert_frame_equal(serial.to_frame(), parallel.to_frame())


class TestPerturbationStudy:
    """Test cases for the measured zero-stability constant."""

    def test_leapfrog_shuffle_has_unit_amplification(self, config: StudyConfig) -> None:
        """Test zero noise, unit alpha and equal steps give K_hat = 1."""
        schedule = from_tables([1.0] * 11, [float(i) for i in range(11)])

        report = perturbation_study(
            OBELM2(), ZeroPredictor(), schedule, delta=1e-3, trials=5, dim=3,
            config=config,
        )

        assert report.k_hat == 1.0

    def test_zero_delta_gives_zero(self, config: StudyConfig) -> None:
        """Test identical starts give no amplification."""
        schedule = smooth_schedule(20, 2.0)
        predictor = SyntheticPredictor(seed=5, schedule=schedule, d=4)

        report = perturbation_study(
            OBELM2(), predictor, schedule, delta=0.0, trials=3, config=config
        )

        assert report.k_hat == 0.0

    def test_negative_delta_rejected(self, config: StudyConfig) -> None:
        """Test delta must be non-negative."""
        schedule = smooth_schedule(20, 2.0)
        predictor = SyntheticPredictor(seed=5, schedule=schedule, d=4)

        with pytest.raises(ConfigurationError, match="non-negative"):
            perturbation_study(
                OBELM2(), predictor, schedule, delta=-1e-6, trials=3, config=config
            )

    def test_bounded_independently_of_steps(self, config: StudyConfig) -> None:
        """Test K_hat varies less than 2x over N = 50, 100, 200 on a stable grid."""
        k_hats = []
        for n in (50, 100, 200):
            schedule = smooth_schedule(n, 2.0)
            assert stability_check(grid_of(schedule)).passed
            predictor = SyntheticPredictor(seed=5, schedule=schedule, d=4)
            report = perturbation_study(
                OBELM2(), predictor, schedule, delta=1e-6, trials=10, seed=0,
                config=config,
            )
            k_hats.append(report.k_hat)

        assert max(k_hats) / min(k_hats) < 2.0

    def test_edict_perturbs_auxiliary_state(self, config: StudyConfig) -> None:
        """Test EDICT runs with both x_N and y_N perturbed."""
        schedule = _training_schedule(10)
        predictor = SyntheticPredictor(seed=5, schedule=schedule, d=4)

        report = perturbation_study(
            EDICT(p=0.93), predictor, schedule, delta=1e-6, trials=3, config=config
        )

        assert np.isfinite(report.k_hat)
        assert report.k_hat > 0.0
        assert len(report.per_trial) == 3

    def test_frame_columns(self, config: StudyConfig) -> None:
        """Test the report table layout."""
        schedule = smooth_schedule(20, 2.0)
        predictor = SyntheticPredictor(seed=5, schedule=schedule, d=4)

        frame = perturbation_study(
            OBELM2(), predictor, schedule, delta=1e-6, trials=3, config=config
        ).to_frame()

        assert list(frame.columns) == ["method", "N", "delta", "trials", "K_hat"]
        assert len(frame) == 1
