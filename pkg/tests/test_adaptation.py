"""
Tests for smoothing-matrix adaptation strategies and spectrum clamping.
"""

import logging

import numpy as np
import pytest

from ags.adaptation import (
    CMA,
    FIXED,
    GEOMETRIC,
    AdaptationStrategy,
    CmaParams,
    adapt,
    adapt_with_fallback,
    clamp_spectrum,
    cma_covariance,
)
from ags.exceptions import AdaptationFailed, BadBounds
from ags.spd_linalg import SpdMatrix, random_spd


class TestCmaParams:
    """Test rank-μ constants."""

    def test_default_weights(self):
        """μ = N/2 log-rank weights, positive, decreasing, summing to 1."""
        params = CmaParams.default(16)
        weights = np.asarray(params.weights)
        assert params.mu == 8
        assert weights.sum() == pytest.approx(1.0)
        assert np.all(np.diff(weights) < 0)
        assert np.all(weights > 0)

    def test_equal_weights(self):
        """equal(μ) weights every elite 1/μ."""
        assert np.allclose(CmaParams.equal(4).weights, 0.25)

    def test_rejects_bad_rate(self):
        """c_mu outside (0, 1] is invalid."""
        with pytest.raises(ValueError):
            CmaParams.default(8, c_mu=1.5)


class TestClampSpectrum:
    """Test eigenvalue clipping."""

    def test_within_bounds_unchanged(self):
        """diag(2,1) with floor 0.5, cap 10 is returned as is."""
        S = SpdMatrix.diagonal([2.0, 1.0])
        assert clamp_spectrum(S, 0.5, 10.0) is S

    def test_floor(self):
        """diag(1e-15, 1) with floor 1e-3 → diag(1e-3, 1)."""
        clamped = clamp_spectrum(np.diag([1e-15, 1.0]), 1e-3, 10.0)
        assert np.allclose(clamped.matrix, np.diag([1e-3, 1.0]))

    def test_pinned(self, rng):
        """floor = cap = c forces c·I."""
        clamped = clamp_spectrum(random_spd(4, rng), 0.7, 0.7)
        assert np.allclose(clamped.matrix, 0.7 * np.eye(4), atol=1e-12)

    def test_cap(self):
        """Large eigenvalues are capped."""
        clamped = clamp_spectrum(SpdMatrix.diagonal([50.0, 1.0]), 0.1, 5.0)
        assert clamped.op_norm == 5.0

    def test_floor_above_cap(self):
        """floor > cap raises BadBounds."""
        with pytest.raises(BadBounds):
            clamp_spectrum(np.eye(2), 2.0, 1.0)

    def test_nonpositive_floor(self):
        """floor ≤ 0 raises BadBounds."""
        with pytest.raises(BadBounds):
            clamp_spectrum(np.eye(2), 0.0, 1.0)


class TestAdapt:
    """Test the three strategies."""

    def test_fixed(self, coupled):
        """fixed returns Σ unchanged."""
        strategy = AdaptationStrategy(FIXED, coupled)
        assert adapt(strategy, coupled) is coupled

    def test_geometric(self):
        """γ=0.5, Σ=diag(2,4) → diag(1,2)."""
        S = SpdMatrix.diagonal([2.0, 4.0])
        strategy = AdaptationStrategy(GEOMETRIC, S, gamma=0.5)
        assert np.allclose(adapt(strategy, S).matrix, np.diag([1.0, 2.0]))

    def test_geometric_norm_sequence(self, coupled):
        """‖Σ_t‖ = γ^t‖Σ₀‖."""
        strategy = AdaptationStrategy(GEOMETRIC, coupled, gamma=0.8)
        S = coupled
        for t in range(1, 31):
            S = adapt(strategy, S)
            assert S.op_norm == pytest.approx(0.8 ** t * 3.0, rel=1e-12)

    def test_geometric_respects_floor(self):
        """Decay stops at the floor."""
        strategy = AdaptationStrategy(GEOMETRIC, SpdMatrix.isotropic(1.0, 2), gamma=0.1, floor=1e-3)
        S = strategy.sigma0
        for _ in range(10):
            S = adapt(strategy, S)
        assert S.min_eig == pytest.approx(1e-3)

    def test_cma_symmetric_and_bounded(self, rng, coupled):
        """Rank-μ updates stay symmetric and inside [floor, cap]."""
        strategy = AdaptationStrategy(CMA, coupled, floor=0.05, cap=2.0)
        S = strategy.initial()
        for _ in range(20):
            directions = rng.standard_normal((12, 2)) * np.sqrt(0.5)
            fitness = rng.standard_normal(12)
            C = cma_covariance(S, directions, fitness, strategy.params_for(12))
            assert np.allclose(C, C.T, atol=1e-12)
            S = adapt(strategy, S, directions, fitness)
            assert S.min_eig >= 0.05 - 1e-15
            assert S.op_norm <= 2.0 + 1e-15

    def test_cma_tie_break_deterministic(self, rng, coupled):
        """Equal fitness values rank by sample index, reproducibly."""
        strategy = AdaptationStrategy(CMA, coupled)
        directions = rng.standard_normal((10, 2))
        first = adapt(strategy, coupled, directions, np.zeros(10))
        second = adapt(strategy, coupled, directions, np.zeros(10))
        assert np.array_equal(first.matrix, second.matrix)

    def test_cma_uses_best_samples(self, identity2):
        """With c_mu=1 and μ=1 the update is y·yᵀ of the fittest direction."""
        params = CmaParams(1, 1.0, (1.0,))
        directions = np.array([[1.0, 0.0], [0.0, 2.0], [3.0, 3.0]])
        C = cma_covariance(identity2, directions, np.array([5.0, -1.0, 2.0]), params)
        assert np.allclose(C, [[0.0, 0.0], [0.0, 4.0]])

    def test_cma_second_moment(self, rng, coupled):
        """Equal weights over all samples: E[C'] = (1 − c/2)Σ²."""
        n = 20_000
        directions = rng.standard_normal((n, 2)) * np.sqrt(0.5)
        C = cma_covariance(coupled, directions, np.zeros(n), CmaParams.equal(n, c_mu=0.3))
        target = 0.85 * coupled.squared()
        assert np.linalg.norm(C - target, 2) <= 0.05 * np.linalg.norm(target, 2)

    def test_cma_needs_samples(self, coupled):
        """cma without samples raises AdaptationFailed."""
        with pytest.raises(AdaptationFailed):
            adapt(AdaptationStrategy(CMA, coupled), coupled)

    def test_cma_non_finite_fitness(self, coupled):
        """All-NaN fitness raises AdaptationFailed."""
        with pytest.raises(AdaptationFailed):
            adapt(AdaptationStrategy(CMA, coupled), coupled, np.ones((4, 2)), np.full(4, np.nan))

    def test_unknown_kind(self, coupled):
        """Unknown strategies are refused."""
        with pytest.raises(ValueError):
            AdaptationStrategy("newton", coupled)


class TestFallback:
    """Test the geometric fallback after a failed update."""

    def test_falls_back_and_logs(self, coupled, caplog):
        """Failure decays by 0.95 and logs a warning."""
        strategy = AdaptationStrategy(CMA, coupled)
        with caplog.at_level(logging.WARNING, logger="ags.adaptation"):
            S, fell_back = adapt_with_fallback(strategy, coupled, np.ones((4, 2)), np.full(4, np.inf))
        assert fell_back
        assert np.allclose(S.matrix, 0.95 * coupled.matrix)
        assert "failed" in caplog.text

    def test_success_is_not_flagged(self, coupled):
        """A normal update reports no fallback."""
        _, fell_back = adapt_with_fallback(AdaptationStrategy(GEOMETRIC, coupled), coupled)
        assert not fell_back
