"""Unit tests for the noise-predictor interface and toy problems."""

import math

import numpy as np
import pytest

from src.belm.exceptions import ConfigurationError
from src.belm.predictor import (
    ConstantPredictor,
    GaussianProblem,
    PolynomialProblem,
    SyntheticPredictor,
    ZeroPredictor,
    estimate_lipschitz,
    gaussian_eps,
    gaussian_exact_flow,
    polynomial_eps,
    synthetic_eps,
)
from src.belm.schedule import (
    NoiseSchedule,
    from_tables,
    vp_from_sbar,
    vp_linear_schedule,
)


@pytest.fixture
def half_schedule() -> NoiseSchedule:
    """Two-point schedule from clean data to alpha = sigma = 1/sqrt(2)."""
    return from_tables([1.0, 1 / math.sqrt(2)], [0.0, 1 / math.sqrt(2)])


@pytest.fixture
def unit_alpha_schedule() -> NoiseSchedule:
    return from_tables([1.0, 1.0, 1.0], [0.0, 1.0, 2.0])


class TestGaussianEps:
    """Test cases for the analytic Gaussian noise predictor."""

    def test_zero_state(self, half_schedule: NoiseSchedule) -> None:
        """Test the zero state predicts zero noise."""
        problem = GaussianProblem(s=3.0, schedule=half_schedule, d=2)

        for i in range(2):
            np.testing.assert_array_equal(gaussian_eps(np.zeros(2), i, problem), 0.0)

    def test_hand_substitution(self, half_schedule: NoiseSchedule) -> None:
        """Test sigma x / (alpha^2 s^2 + sigma^2) at alpha = sigma = 1/sqrt(2)."""
        problem = GaussianProblem(s=1.0, schedule=half_schedule, d=1)

        eps = gaussian_eps(np.array([1.0]), 1, problem)

        assert eps[0] == pytest.approx(1 / math.sqrt(2), rel=1e-15)

    def test_zero_noise_level(self, half_schedule: NoiseSchedule) -> None:
        """Test sigma = 0 predicts zero noise."""
        problem = GaussianProblem(s=2.0, schedule=half_schedule, d=1)

        assert gaussian_eps(np.array([5.0]), 0, problem)[0] == 0.0

    def test_linear_in_state(self) -> None:
        """Test eps(a x + b y) = a eps(x) + b eps(y)."""
        schedule = vp_linear_schedule(100, 1e-4, 0.02)
        problem = GaussianProblem(s=0.7, schedule=schedule, d=4)
        rng = np.random.Generator(np.random.Philox(3))
        x, y = rng.standard_normal(4), rng.standard_normal(4)

        combined = problem.eval(2.0 * x - 3.0 * y, 40)
        separate = 2.0 * problem.eval(x, 40) - 3.0 * problem.eval(y, 40)

        np.testing.assert_allclose(combined, separate, rtol=1e-14, atol=1e-15)

    def test_non_positive_std_rejected(self, half_schedule: NoiseSchedule) -> None:
        """Test s must be positive."""
        with pytest.raises(ConfigurationError, match="must be positive"):
            GaussianProblem(s=0.0, schedule=half_schedule)


class TestGaussianExactFlow:
    """Test cases for the closed-form Gaussian probability flow."""

    def test_same_index_is_identity(self) -> None:
        """Test flowing to the same index returns the state."""
        problem = GaussianProblem(s=0.5, schedule=vp_linear_schedule(10, 0.1, 0.1))
        x = np.array([1.0, -2.0, 0.5, 3.0])

        np.testing.assert_array_equal(gaussian_exact_flow(x, 4, 4, problem), x)

    def test_unit_std_vp_is_identity(self, half_schedule: NoiseSchedule) -> None:
        """Test s = 1 on a VP schedule keeps the marginal std at 1."""
        problem = GaussianProblem(s=1.0, schedule=half_schedule, d=1)

        flowed = gaussian_exact_flow(np.array([2.0]), 0, 1, problem)

        assert flowed[0] == pytest.approx(2.0, rel=1e-15)

    def test_flow_composes(self) -> None:
        """Test flow(i -> j) then flow(j -> k) equals flow(i -> k)."""
        problem = GaussianProblem(s=0.3, schedule=vp_linear_schedule(50, 1e-4, 0.02))
        x = np.array([1.0, 2.0, -1.0, 0.25])

        two_legs = problem.exact_flow(problem.exact_flow(x, 50, 20), 20, 3)

        np.testing.assert_allclose(two_legs, problem.exact_flow(x, 50, 3), rtol=1e-12)

    def test_matches_fine_euler_integration(self) -> None:
        """Test the closed form against 10,000 explicit Euler substeps."""
        schedule = vp_from_sbar(np.linspace(0.5, 0.6, 10_001))
        problem = GaussianProblem(s=1.5, schedule=schedule, d=3)
        alphas, sbar = schedule.alphas, schedule.sbar
        x_top = np.array([1.0, -0.5, 2.0])

        xbar = x_top / alphas[-1]
        for j in range(schedule.N, 0, -1):
            eps = gaussian_eps(alphas[j] * xbar, j, problem)
            xbar = xbar - (sbar[j] - sbar[j - 1]) * eps

        exact = gaussian_exact_flow(x_top, schedule.N, 0, problem)
        np.testing.assert_allclose(alphas[0] * xbar, exact, rtol=1e-6)

    def test_scaled_solution_matches_flow(self) -> None:
        """Test the scaled-space solution agrees with the x-space flow."""
        schedule = vp_linear_schedule(20, 1e-3, 0.05)
        problem = GaussianProblem(s=0.8, schedule=schedule, d=2)
        x = np.array([0.4, -1.2])

        xbar = problem.solution_xbar(
            schedule.sbar[2], x / schedule.alphas[15], schedule.sbar[15]
        )

        np.testing.assert_allclose(
            schedule.alphas[2] * xbar, problem.exact_flow(x, 15, 2), rtol=1e-12
        )


class TestPolynomialEps:
    """Test cases for the manufactured polynomial solution."""

    def test_quadratic_derivative(self, unit_alpha_schedule: NoiseSchedule) -> None:
        """Test P = sbar^2 predicts 2 sbar."""
        problem = PolynomialProblem(
            coeffs=(0.0, 0.0, 1.0), schedule=unit_alpha_schedule, d=3
        )

        eps = polynomial_eps(np.zeros(3), 2, problem)
        np.testing.assert_array_equal(eps, [4.0] * 3)

    def test_constant_polynomial(self, unit_alpha_schedule: NoiseSchedule) -> None:
        """Test a constant solution predicts zero noise."""
        problem = PolynomialProblem(coeffs=(5.0,), schedule=unit_alpha_schedule, d=2)

        for i in range(3):
            np.testing.assert_array_equal(polynomial_eps(np.ones(2), i, problem), 0.0)

    def test_cubic_derivative(self, unit_alpha_schedule: NoiseSchedule) -> None:
        """Test P = sbar^3 predicts 3 sbar^2."""
        problem = PolynomialProblem(
            coeffs=(0.0, 0.0, 0.0, 1.0), schedule=unit_alpha_schedule, d=1
        )

        assert polynomial_eps(np.array([7.0]), 1, problem)[0] == 3.0

    def test_solution_difference_integrates_derivative(self) -> None:
        """Test P(sbar_j) - P(sbar_i) equals the integral of P'."""
        schedule = vp_linear_schedule(30, 1e-3, 0.05)
        problem = PolynomialProblem(
            coeffs=(1.0, -2.0, 0.5, 0.25), schedule=schedule, d=1
        )
        antiderivative = np.polynomial.Polynomial(problem.coeffs).deriv().integ()
        lo, hi = schedule.sbar[4], schedule.sbar[25]

        difference = problem.solution(hi)[0] - problem.solution(lo)[0]

        expected = antiderivative(hi) - antiderivative(lo)
        assert difference == pytest.approx(expected, rel=1e-12)

    def test_exact_state_scales_by_alpha(self) -> None:
        """Test the x-space state is alpha times the scaled solution."""
        schedule = vp_linear_schedule(10, 0.1, 0.1)
        problem = PolynomialProblem(coeffs=(1.0, 1.0), schedule=schedule, d=2)

        expected = schedule.alphas[6] * (1.0 + schedule.sbar[6])
        np.testing.assert_allclose(problem.exact_state(6), [expected] * 2, rtol=1e-15)


class TestSyntheticPredictor:
    """Test cases for the seeded nonlinear predictor."""

    @pytest.fixture
    def schedule(self) -> NoiseSchedule:
        return vp_linear_schedule(20, 1e-4, 0.02)

    def test_deterministic(self, schedule: NoiseSchedule) -> None:
        """Test identical inputs give bit-identical outputs."""
        x = np.array([0.3, -1.0, 2.0, 0.1])

        first = synthetic_eps(x, 7, 11, schedule)
        second = synthetic_eps(x, 7, 11, schedule)

        np.testing.assert_array_equal(first, second)

    def test_lipschitz_bound(self, schedule: NoiseSchedule) -> None:
        """Test the finite-difference Lipschitz estimate stays below 4."""
        predictor = SyntheticPredictor(seed=1, schedule=schedule, d=4)

        for step_index in (0, 10, 20):
            assert estimate_lipschitz(predictor, 4, step_index, pairs=1000) <= 4.0

    def test_seeds_differ(self, schedule: NoiseSchedule) -> None:
        """Test different seeds give different fields."""
        x = np.random.Generator(np.random.Philox(99)).standard_normal(4)

        assert not np.array_equal(
            synthetic_eps(x, 5, 1, schedule), synthetic_eps(x, 5, 2, schedule)
        )

    def test_bounded_output(self, schedule: NoiseSchedule) -> None:
        """Test outputs are bounded by sqrt(d) in the Euclidean norm."""
        predictor = SyntheticPredictor(seed=4, schedule=schedule, d=4)
        rng = np.random.Generator(np.random.Philox(5))

        for _ in range(100):
            eps = predictor.eval(rng.uniform(-10, 10, 4), 3)
            assert np.linalg.norm(eps) <= 2.0 + 1e-12

    def test_rebinding_keeps_field(self, schedule: NoiseSchedule) -> None:
        """Test a rebound predictor keeps its seed-derived parameters."""
        predictor = SyntheticPredictor(seed=4, schedule=schedule, d=4)
        rebound = predictor.with_schedule(schedule)
        x = np.ones(4)

        np.testing.assert_array_equal(predictor.eval(x, 2), rebound.eval(x, 2))


class TestConstantPredictors:
    """Test cases for the trivial predictors."""

    def test_zero_predictor(self) -> None:
        """Test the zero predictor returns zeros of the state shape."""
        eps = ZeroPredictor(dim=3).eval(np.array([1.0, 2.0, 3.0]), 0)

        np.testing.assert_array_equal(eps, np.zeros(3))

    def test_constant_predictor(self) -> None:
        """Test the constant predictor ignores state and index."""
        predictor = ConstantPredictor(value=0.5)

        np.testing.assert_array_equal(predictor(np.zeros(2), 9), [0.5, 0.5])
