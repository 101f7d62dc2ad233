"""
Tests for the invariant verification suite.
"""

import pytest

from harness.experiment_runner import run_experiment
from harness.verify_suite import BUDGETS, VerificationSuite, invariant_names

CHEAP = [
    "sqrt_squares_back",
    "norm_triangle_inequality",
    "self_pair_flags",
    "benchmark_gradients",
    "rotation_invariant_minimum",
    "declared_smoothness",
    "geometric_decay",
    "adam_moment_bound",
    "finite_sum_cancellation",
    "certificate_tracker_agreement",
    "descent_on_convex_quadratic",
    "adam_assumptions",
    "determinism",
    "record_invariants",
]


class TestRegistry:
    """Test the invariant catalogue."""

    def test_names_unique(self):
        """Every invariant is registered once."""
        names = invariant_names()
        assert len(names) == len(set(names))

    def test_every_module_covered(self):
        """Each library module and the harness contribute invariants."""
        one_each = ["self_pair_flags", "declared_smoothness", "kernel_forms", "certificate_tracker_agreement",
                    "geometric_decay", "determinism", "record_invariants"]
        report = VerificationSuite().run(only=one_each)
        assert {r["module"] for r in report["results"]} == {
            "spd_linalg", "objectives", "smoothing", "bounds", "adaptation", "optimizers", "harness"}
        assert {"oracle_agreement", "spectrum_bounds", "sgd_gradient_trend"} <= set(invariant_names())

    def test_levels_share_invariants(self):
        """fast and full differ only in budgets."""
        assert set(BUDGETS) == {"fast", "full"}
        assert BUDGETS["full"].mc_samples > BUDGETS["fast"].mc_samples
        assert BUDGETS["full"].spd_samples == 1000
        assert BUDGETS["full"].adam_grad_ratio == 100.0

    def test_unknown_level(self):
        """Unknown levels raise ValueError."""
        with pytest.raises(ValueError):
            VerificationSuite("exhaustive")


class TestRun:
    """Test running invariants."""

    def test_cheap_invariants_pass(self):
        """The fast deterministic invariants pass."""
        report = VerificationSuite("fast").run(only=CHEAP)
        failed = [r for r in report["results"] if not r["passed"]]
        assert report["passed"], failed
        assert [r["name"] for r in report["results"]] == [n for n in invariant_names() if n in CHEAP]

    def test_value_diff_soundness_passes(self):
        """B(Σ, T) covers quadrature gaps on isotropic, shared-basis, dominating and random pairs."""
        report = VerificationSuite("fast").run(only=["value_diff_soundness"])
        assert report["passed"], report["results"]

    def test_sgd_gradient_trend_passes(self):
        """The AGS-SGD running minimum stays below its certificate."""
        report = VerificationSuite("fast").run(only=["sgd_gradient_trend"])
        measured = report["results"][0]["measured"]
        assert report["passed"], measured
        assert measured["min_grad_sq_final"] < measured["min_grad_sq_t10"]

    def test_adam_trend_tracks_true_gradient(self):
        """AGS-Adam with the default schedule shrinks the running min ‖∇f‖ by the level's ratio."""
        report = VerificationSuite("fast").run(only=["adam_trend"])
        measured = report["results"][0]["measured"]
        assert report["passed"], measured
        assert measured["required_ratio"] == BUDGETS["fast"].adam_grad_ratio
        assert measured["ratio"] >= measured["required_ratio"]

    def test_sgd_noisy_ball_passes(self):
        """Decreasing steps end below a tenth of the constant-step plateau."""
        report = VerificationSuite("fast").run(only=["sgd_noisy_ball"])
        measured = report["results"][0]["measured"]
        assert report["passed"], measured
        assert measured["decreasing_plateau"] <= 0.1 * measured["constant_plateau"]

    def test_report_shape(self):
        """Each entry carries module, name, passed and measured values."""
        report = VerificationSuite().run(only=["geometric_decay"])
        assert report["level"] == "fast"
        entry = report["results"][0]
        assert set(entry) == {"module", "name", "passed", "measured"}
        assert entry["measured"]["max_rel_error"] <= 1e-12

    def test_record_invariants_check_files(self):
        """The harness invariant reads back the CSV and the summary's config."""
        measured = VerificationSuite().run(only=["record_invariants"])["results"][0]["measured"]
        assert measured["csv_rows"] == 30
        assert measured["config_round_trips"] is True

    def test_config_drift_is_caught(self, mocker):
        """A summary whose config does not parse back to the run's config fails."""
        def drifted(cfg, out_dir):
            summary = run_experiment(cfg, out_dir)
            summary["config"]["seed"] += 1
            return summary

        mocker.patch("harness.verify_suite.run_experiment", side_effect=drifted)
        report = VerificationSuite().run(only=["record_invariants"])
        assert not report["passed"]
        assert report["results"][0]["measured"]["config_round_trips"] is False

    def test_biased_forward_estimator_fails(self):
        """A forward coefficient of 0.5 is caught as biased."""
        report = VerificationSuite("fast", forward_coefficient=0.5).run(only=["estimator_unbiasedness"])
        assert not report["passed"]
        assert report["results"][0]["measured"]["forward_coefficient"] == 0.5

    def test_crashing_check_is_a_failure(self, mocker):
        """An exception inside a check becomes a failed entry."""
        mocker.patch("harness.verify_suite.make_benchmark", side_effect=RuntimeError("broken objective"))
        report = VerificationSuite().run(only=["determinism"])
        assert not report["passed"]
        assert "broken objective" in report["results"][0]["measured"]["error"]

    def test_logs_each_invariant(self, caplog):
        """Every invariant logs its outcome."""
        with caplog.at_level("INFO", logger="harness.verify_suite"):
            VerificationSuite().run(only=["geometric_decay"])
        assert "adaptation/geometric_decay: pass" in caplog.text
