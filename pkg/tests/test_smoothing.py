"""
Tests for the smoothing operators: quadrature, closed forms, Monte Carlo
estimators, the convolution kernel, and composition of smoothings.

Monte Carlo checks use fixed seeds and 4-standard-error bands.
"""

import numpy as np
import pytest
from scipy.integrate import trapezoid

from ags.exceptions import DimMismatch, DimTooLarge
from ags.objectives import Objective, QuadraticForm, make_benchmark, make_cosine, make_linear
from ags.smoothing import (
    FORWARD,
    McConfig,
    analytic_smooth_quadratic,
    compose_smoothing,
    draw_directions,
    smooth_abs_derivative,
    smooth_cosine_closed_form,
    smooth_grad_mc,
    smooth_grad_quadrature,
    smooth_value_mc,
    smooth_value_quadrature,
    smoothing_kernel,
)
from ags.spd_linalg import SpdMatrix, random_spd


def constant(value, dim):
    return Objective(dim, lambda points: np.full(points.shape[:-1], value))


class TestQuadrature:
    """Test Gauss-Hermite smoothing."""

    def test_constant(self, coupled):
        """A constant is unchanged by any Σ."""
        assert smooth_value_quadrature(constant(3.5, 2), coupled, [0.2, 0.1]) == pytest.approx(3.5)

    def test_second_moment(self):
        """x² at 0 with Σ=[1] → 1/2."""
        f = Objective.from_scalar(lambda x: float(x[0] ** 2), 1)
        assert smooth_value_quadrature(f, SpdMatrix.isotropic(1.0, 1), [0.0]) == pytest.approx(0.5)

    def test_cosine_damping(self):
        """cos(2x) at 0 with Σ=[1] → e⁻¹."""
        f = make_cosine([2.0])
        assert smooth_value_quadrature(f, SpdMatrix.isotropic(1.0, 1), [0.0]) == pytest.approx(np.exp(-1.0))

    def test_matches_cosine_closed_form(self, rng):
        """Quadrature agrees with cos(aᵀx)·exp(−‖Σa‖²/4)."""
        a = np.array([0.7, -1.1, 0.4])
        S = random_spd(3, rng, 0.2, 1.0)
        x = rng.uniform(-1.0, 1.0, 3)
        expected = smooth_cosine_closed_form(a, S, x)
        assert smooth_value_quadrature(make_cosine(a), S, x) == pytest.approx(expected, abs=1e-10)

    def test_gradient_matches_analytic(self, rng):
        """Quadrature gradient of a quadratic equals 2Ax + b."""
        q = QuadraticForm.create([[1.0, 0.3], [0.3, 2.0]], [0.5, -1.0])
        S = random_spd(2, rng, 0.2, 1.5)
        x = np.array([0.4, -0.3])
        assert np.allclose(smooth_grad_quadrature(q.to_objective(), S, x), q.gradient(x), atol=1e-10)

    def test_not_counted(self, sphere2, identity2):
        """Quadrature evaluations do not advance eval_count."""
        smooth_value_quadrature(sphere2, identity2, [0.0, 0.0])
        assert sphere2.eval_count == 0

    def test_dimension_limit(self):
        """dim > 3 raises DimTooLarge."""
        f = make_benchmark("sphere", 4)
        with pytest.raises(DimTooLarge):
            smooth_value_quadrature(f, SpdMatrix.isotropic(1.0, 4), np.zeros(4))

    def test_minimum_order(self, sphere2, identity2):
        """Orders below 4 are rejected."""
        with pytest.raises(ValueError):
            smooth_value_quadrature(sphere2, identity2, [0.0, 0.0], order=3)

    def test_dimension_mismatch(self, sphere2):
        """Σ of the wrong size raises DimMismatch."""
        with pytest.raises(DimMismatch):
            smooth_value_quadrature(sphere2, SpdMatrix.isotropic(1.0, 3), [0.0, 0.0])


class TestAnalyticQuadratic:
    """Test the closed-form smoothing of quadratics."""

    def test_sphere_at_origin(self, sphere2, identity2):
        """Sphere d=2, Σ=I, x=0 → 1.0 with zero gradient."""
        value, grad = analytic_smooth_quadratic(sphere2.quadratic, identity2, [0.0, 0.0])
        assert value == pytest.approx(1.0)
        assert np.allclose(grad, 0.0)
        assert smooth_value_quadrature(sphere2, identity2, [0.0, 0.0]) == pytest.approx(value, abs=1e-10)

    def test_constant_quadratic(self, coupled):
        """A=0, b=0 → c and zero gradient."""
        value, grad = analytic_smooth_quadratic(QuadraticForm.create(np.zeros((2, 2)), c=2.5), coupled, [1.0, 1.0])
        assert value == pytest.approx(2.5)
        assert np.allclose(grad, 0.0)

    def test_one_dimensional(self):
        """Sphere d=1, Σ=[2], x=3 → 9 + 2 = 11, gradient 6."""
        f = make_benchmark("sphere", 1)
        value, grad = analytic_smooth_quadratic(f.quadratic, SpdMatrix.isotropic(2.0, 1), [3.0])
        assert value == pytest.approx(11.0)
        assert np.allclose(grad, [6.0])


class TestMonteCarlo:
    """Test the Monte Carlo estimators."""

    def test_constant_value_exact(self, coupled):
        """Constant f → exactly c with zero stderr."""
        mean, stderr = smooth_value_mc(constant(2.0, 2), coupled, [0.0, 0.0], McConfig(1000, seed=1))
        assert mean == 2.0
        assert stderr == 0.0

    def test_constant_gradient_exact(self, coupled):
        """Central differences of a constant vanish per sample."""
        est = smooth_grad_mc(constant(2.0, 2), coupled, [0.0, 0.0], McConfig(500, seed=1))
        assert np.array_equal(est.mean, np.zeros(2))

    def test_linear_value(self, coupled):
        """Linear f: mean within 4·stderr of aᵀx at N=10⁴."""
        f = make_linear([1.0, -2.0])
        x = np.array([0.5, 0.25])
        mean, stderr = smooth_value_mc(f, coupled, x, McConfig(10_000, seed=3))
        assert abs(mean - 0.0) <= 4.0 * stderr

    def test_sphere_value(self, sphere2, identity2):
        """Sphere d=2, Σ=I, x=0: within 4·stderr of 1.0 at N=10⁵."""
        mean, stderr = smooth_value_mc(sphere2, identity2, [0.0, 0.0], McConfig(100_000, seed=4))
        assert abs(mean - 1.0) <= 4.0 * stderr

    def test_linear_gradient(self):
        """a=(1,2), Σ=diag(1,3) at N=10⁵: within 4·stderr of (1,2)."""
        est = smooth_grad_mc(make_linear([1.0, 2.0]), SpdMatrix.diagonal([1.0, 3.0]), [0.3, -0.2],
                             McConfig(100_000, seed=5))
        assert np.all(np.abs(est.mean - [1.0, 2.0]) <= 4.0 * est.stderr)

    def test_sphere_gradient(self, sphere2, identity2):
        """Sphere at (1,0), Σ=I: within 4·stderr of (2,0)."""
        est = smooth_grad_mc(sphere2, identity2, [1.0, 0.0], McConfig(100_000, seed=6))
        assert np.all(np.abs(est.mean - [2.0, 0.0]) <= 4.0 * est.stderr)

    def test_forward_variant_unbiased(self, sphere2, identity2):
        """Forward differences with coefficient 2 estimate the same gradient."""
        est = smooth_grad_mc(sphere2, identity2, [1.0, 0.0], McConfig(100_000, variant=FORWARD, seed=7))
        assert np.all(np.abs(est.mean - [2.0, 0.0]) <= 4.0 * est.stderr)

    def test_halved_forward_coefficient_is_biased(self, sphere2, identity2):
        """Coefficient 1/2 lands far outside the band."""
        est = smooth_grad_mc(sphere2, identity2, [1.0, 0.0],
                             McConfig(100_000, variant=FORWARD, seed=7, forward_coefficient=0.5))
        assert abs(est.mean[0] - 2.0) > 10.0 * est.stderr[0]

    def test_evaluation_counts(self, sphere2, identity2):
        """Central uses 2N evaluations, forward N+1."""
        smooth_grad_mc(sphere2, identity2, [0.0, 0.0], McConfig(50))
        assert sphere2.eval_count == 100
        smooth_grad_mc(sphere2, identity2, [0.0, 0.0], McConfig(50, variant=FORWARD))
        assert sphere2.eval_count == 151

    def test_attaches_samples(self, sphere2, identity2):
        """Directions and plus-side fitness come back with the estimate."""
        est = smooth_grad_mc(sphere2, identity2, [1.0, 1.0], McConfig(32, seed=2))
        assert est.directions.shape == (32, 2)
        assert np.allclose(est.fitness, sphere2.value_batch([1.0, 1.0] + est.directions, count=False))
        assert est.samples_used == 32

    def test_workers_do_not_change_result(self, coupled):
        """Threaded chunk evaluation reproduces the serial estimate."""
        f = make_benchmark("rosenbrock", 2)
        serial = smooth_grad_mc(f, coupled, [0.1, 0.2], McConfig(1000, seed=8, chunk_size=100))
        threaded = smooth_grad_mc(f, coupled, [0.1, 0.2], McConfig(1000, seed=8, chunk_size=100, workers=4))
        assert np.array_equal(serial.mean, threaded.mean)

    def test_directions_keyed_by_counter(self):
        """Same counter repeats the draw, a new counter changes it."""
        cfg = McConfig(10, seed=9)
        first = np.concatenate(draw_directions(cfg, 3))
        again = np.concatenate(draw_directions(cfg, 3))
        other = np.concatenate(draw_directions(cfg.at(1), 3))
        assert np.array_equal(first, again)
        assert not np.array_equal(first, other)

    def test_direction_variance(self):
        """Directions have per-coordinate variance 1/2."""
        u = np.concatenate(draw_directions(McConfig(200_000, seed=10), 2))
        assert np.allclose(u.var(axis=0), 0.5, rtol=0.02)

    def test_rejects_bad_config(self):
        """Zero samples and unknown variants are refused."""
        with pytest.raises(ValueError):
            McConfig(0)
        with pytest.raises(ValueError):
            McConfig(10, variant="backward")


class TestKernel:
    """Test the convolution-form kernel."""

    def test_integrates_to_one(self):
        """k_Σ has unit mass in d=1."""
        S = SpdMatrix.isotropic(0.7, 1)
        grid = np.linspace(-10.0, 10.0, 20_001)
        assert trapezoid(smoothing_kernel(S, grid[:, None]), grid) == pytest.approx(1.0, abs=1e-8)

    def test_convolution_matches_expectation(self):
        """∫ f(x−v)k_Σ(v)dv equals the change-of-variables form."""
        S = SpdMatrix.isotropic(1.3, 1)
        grid = np.linspace(-15.0, 15.0, 30_001)
        x = 0.4
        convolution = trapezoid(np.cos(2.0 * (x - grid)) * smoothing_kernel(S, grid[:, None]), grid)
        assert convolution == pytest.approx(smooth_cosine_closed_form([2.0], S, [x]), abs=1e-8)

    def test_peak_value(self, identity2):
        """k_I(0) = 1/π in two dimensions."""
        assert smoothing_kernel(identity2, [0.0, 0.0]) == pytest.approx(1.0 / np.pi)


class TestComposition:
    """Test composition of smoothings."""

    def test_identity_pair(self, identity2):
        """I then I → √2·I."""
        assert np.allclose(compose_smoothing(identity2, identity2).matrix, np.sqrt(2.0) * np.eye(2))

    def test_three_four_five(self):
        """diag(3,1) then diag(4,1) → diag(5, √2)."""
        H = compose_smoothing(SpdMatrix.diagonal([3.0, 1.0]), SpdMatrix.diagonal([4.0, 1.0]))
        assert np.allclose(H.matrix, np.diag([5.0, np.sqrt(2.0)]))

    def test_non_commuting(self, diag12, coupled):
        """H² = Σ² + T² within 1e-12 for a non-commuting pair."""
        H = compose_smoothing(diag12, coupled)
        assert np.allclose(H.squared(), diag12.squared() + coupled.squared(), atol=1e-12)

    def test_nested_quadrature(self, diag12, coupled):
        """(f_Σ)_T = f_H on a 2-d quadratic."""
        q = QuadraticForm.create([[1.0, 0.4], [0.4, 0.5]], [0.3, -0.2], 1.0)
        H = compose_smoothing(diag12, coupled)
        inner, _ = analytic_smooth_quadratic(q, diag12, [0.0, 0.0])
        shifted = QuadraticForm.create(q.A.entries, q.b, inner)
        nested, _ = analytic_smooth_quadratic(shifted, coupled, [0.3, 0.7])
        direct, _ = analytic_smooth_quadratic(q, H, [0.3, 0.7])
        assert nested == pytest.approx(direct, abs=1e-8)
        assert smooth_value_quadrature(q.to_objective(), H, [0.3, 0.7]) == pytest.approx(direct, abs=1e-8)


class TestAbsDerivative:
    """Test the smoothed derivative of |x|."""

    def test_odd_and_bounded(self):
        """erf(x/σ) is 0 at the origin and tends to ±1."""
        assert smooth_abs_derivative(0.0, 1.0) == 0.0
        assert smooth_abs_derivative(50.0, 1.0) == pytest.approx(1.0)
        assert smooth_abs_derivative(-50.0, 1.0) == pytest.approx(-1.0)

    def test_matches_monte_carlo(self):
        """Monte Carlo gradient of |x| agrees with erf(x/σ)."""
        f = Objective(1, lambda points: np.abs(points[..., 0]))
        S = SpdMatrix.isotropic(0.8, 1)
        est = smooth_grad_mc(f, S, [0.6], McConfig(100_000, seed=11))
        assert abs(est.mean[0] - float(smooth_abs_derivative(0.6, 0.8))) <= 4.0 * est.stderr[0]
