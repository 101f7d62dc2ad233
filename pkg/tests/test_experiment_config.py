"""
Tests for parsing and validating experiment configuration documents.
"""

import json
from pathlib import Path

import pytest
import yaml

from harness.experiment_config import (
    ConfigParseError,
    ConfigValidationError,
    HarnessIOError,
    load_config,
    parse_config,
    serialize_config,
)


class TestParseConfig:
    """Test parse_config on valid documents."""

    def test_minimal_defaults(self, minimal_config):
        """Omitted sections take their documented defaults."""
        cfg = parse_config(yaml.safe_dump(minimal_config))
        assert cfg.function.name == "sphere"
        assert cfg.function.x_opt == "origin"
        assert cfg.smoothing.sigma0 == 1.0
        assert cfg.smoothing.adaptation.kind == "geometric"
        assert cfg.smoothing.mc_samples == 64
        assert cfg.optimizer.schedule.eta0 is None
        assert cfg.certificate is True

    def test_quadratic_defaults_to_analytic(self, minimal_config):
        """Sphere with a smoothed method resolves to analytic gradients."""
        assert parse_config(json.dumps(minimal_config)).gradient_source == "analytic_quadratic"

    def test_nonquadratic_defaults_to_mc(self, minimal_config):
        """Rosenbrock resolves to Monte Carlo gradients."""
        minimal_config["function"]["name"] = "rosenbrock"
        assert parse_config(json.dumps(minimal_config)).gradient_source == "mc"

    def test_baseline_has_no_gradient_source(self, minimal_config):
        """Unsmoothed baselines resolve to no smoothed source."""
        minimal_config["optimizer"]["method"] = "adam"
        assert parse_config(json.dumps(minimal_config)).gradient_source is None

    def test_json_accepted(self, minimal_config):
        """JSON documents parse like YAML."""
        assert parse_config(json.dumps(minimal_config)) == parse_config(yaml.safe_dump(minimal_config))

    def test_matrix_sigma0(self, minimal_config):
        """A full SPD sigma0 matrix is accepted."""
        minimal_config["smoothing"] = {"sigma0": [[2.0, 1.0], [1.0, 2.0]]}
        cfg = parse_config(json.dumps(minimal_config))
        assert cfg.sigma0_matrix().op_norm == pytest.approx(3.0)

    def test_serialize_round_trip(self, minimal_config):
        """serialize_config output parses back to an equal config."""
        cfg = parse_config(json.dumps(minimal_config))
        assert parse_config(serialize_config(cfg)) == cfg


class TestValidation:
    """Test rejected documents."""

    def test_powell_dimension(self, minimal_config):
        """Powell d=6 names the divisibility requirement."""
        minimal_config["function"] = {"name": "powell", "dim": 6}
        with pytest.raises(ConfigValidationError, match="powell requires dim divisible by 4"):
            parse_config(json.dumps(minimal_config))

    def test_unknown_key(self, minimal_config):
        """Unknown keys are rejected with their path."""
        minimal_config["optimizer"]["momentum"] = 0.5
        with pytest.raises(ConfigValidationError) as excinfo:
            parse_config(json.dumps(minimal_config))
        assert any(path == "optimizer.momentum" for path, _ in excinfo.value.errors)

    def test_unknown_method(self, minimal_config):
        """Methods outside the catalogue are rejected."""
        minimal_config["optimizer"]["method"] = "newton"
        with pytest.raises(ConfigValidationError):
            parse_config(json.dumps(minimal_config))

    def test_unknown_function(self, minimal_config):
        """Unknown benchmark names are rejected."""
        minimal_config["function"]["name"] = "rastrigin"
        with pytest.raises(ConfigValidationError):
            parse_config(json.dumps(minimal_config))

    def test_analytic_on_rosenbrock(self, minimal_config):
        """analytic_quadratic needs a quadratic benchmark."""
        minimal_config["function"]["name"] = "rosenbrock"
        minimal_config["smoothing"] = {"gradient": "analytic_quadratic"}
        with pytest.raises(ConfigValidationError, match="analytic_quadratic"):
            parse_config(json.dumps(minimal_config))

    def test_non_spd_sigma0(self, minimal_config):
        """An indefinite sigma0 is rejected."""
        minimal_config["smoothing"] = {"sigma0": [[1.0, 2.0], [2.0, 1.0]]}
        with pytest.raises(ConfigValidationError, match="positive definite"):
            parse_config(json.dumps(minimal_config))

    def test_sigma0_wrong_size(self, minimal_config):
        """sigma0 must match the function dimension."""
        minimal_config["smoothing"] = {"sigma0": [[1.0]]}
        with pytest.raises(ConfigValidationError):
            parse_config(json.dumps(minimal_config))

    def test_floor_above_cap(self, minimal_config):
        """floor > cap is rejected."""
        minimal_config["smoothing"] = {"adaptation": {"floor": 2.0, "cap": 1.0}}
        with pytest.raises(ConfigValidationError, match="exceeds cap"):
            parse_config(json.dumps(minimal_config))

    def test_cma_method_needs_cma_adaptation(self, minimal_config):
        """The cma baseline refuses geometric adaptation."""
        minimal_config["optimizer"]["method"] = "cma"
        with pytest.raises(ConfigValidationError, match="cma adaptation"):
            parse_config(json.dumps(minimal_config))

    def test_missing_seed(self, minimal_config):
        """seed is required."""
        del minimal_config["seed"]
        with pytest.raises(ConfigValidationError):
            parse_config(json.dumps(minimal_config))

    def test_nonpositive_horizon(self, minimal_config):
        """T must be at least 1."""
        minimal_config["optimizer"]["T"] = 0
        with pytest.raises(ConfigValidationError):
            parse_config(json.dumps(minimal_config))


class TestParseErrors:
    """Test malformed documents."""

    def test_yaml_location(self):
        """Malformed YAML reports a line and column."""
        with pytest.raises(ConfigParseError) as excinfo:
            parse_config("seed: 1\nfunction: [sphere\n")
        assert excinfo.value.line is not None
        assert excinfo.value.column is not None

    def test_json_location(self):
        """Malformed JSON reports where it broke."""
        with pytest.raises(ConfigParseError) as excinfo:
            parse_config('{"seed": 1,}')
        assert excinfo.value.line == 1

    def test_not_a_mapping(self):
        """A top-level list is not a configuration."""
        with pytest.raises(ConfigParseError, match="mapping"):
            parse_config("- 1\n- 2\n")


class TestLoadConfig:
    """Test reading configuration files."""

    def test_reads_yaml_file(self, minimal_config, write_config):
        """A YAML file on disk loads."""
        cfg = load_config(write_config(minimal_config))
        assert cfg.optimizer.T == 100

    def test_reads_json_file(self, minimal_config, write_config):
        """A JSON file on disk loads."""
        cfg = load_config(write_config(minimal_config, "experiment.json"))
        assert cfg.seed == 1

    def test_missing_file(self, tmp_path):
        """A missing file raises HarnessIOError naming the path."""
        path = tmp_path / "absent.yaml"
        with pytest.raises(HarnessIOError) as excinfo:
            load_config(path)
        assert excinfo.value.path == path

    def test_example_config_is_valid(self):
        """The documented example configuration validates."""
        cfg = load_config(Path(__file__).resolve().parent.parent / "experiment_config_example.yaml")
        assert cfg.function.name == "rosenbrock"
        assert cfg.stochastic.K == 8
