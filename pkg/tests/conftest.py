"""
Shared pytest fixtures for all test modules.

Seeded generators, the canonical matrices used throughout the worked
examples, small benchmark objectives, and configuration documents written to
temporary directories.
"""

import json

import numpy as np
import pytest
import yaml

from ags.objectives import make_benchmark
from ags.spd_linalg import SpdMatrix


@pytest.fixture
def rng():
    """Seeded generator so property tests are reproducible."""
    return np.random.default_rng(12345)


@pytest.fixture
def identity2():
    """2×2 identity smoothing matrix."""
    return SpdMatrix.isotropic(1.0, 2)


@pytest.fixture
def diag12():
    """Σ = diag(1, 2)."""
    return SpdMatrix.diagonal([1.0, 2.0])


@pytest.fixture
def coupled():
    """T = [[2, 1], [1, 2]], which does not commute with diag(1, 2)."""
    return SpdMatrix.from_array([[2.0, 1.0], [1.0, 2.0]])


@pytest.fixture
def sphere2():
    """Unrotated sphere in two dimensions."""
    return make_benchmark("sphere", 2)


@pytest.fixture
def minimal_config():
    """Smallest valid experiment document."""
    return {
        "function": {"name": "sphere", "dim": 2},
        "optimizer": {"method": "ags_gd", "T": 100},
        "seed": 1,
        "output": "out/",
    }


@pytest.fixture
def sphere_gd_config(tmp_path):
    """AGS-GD on sphere d=10 with analytic gradients, writing into tmp_path."""
    return {
        "function": {"name": "sphere", "dim": 10},
        "optimizer": {"method": "ags_gd", "T": 100, "schedule": {"eta0": 0.25}},
        "smoothing": {"sigma0": 1.0, "gradient": "analytic_quadratic",
                      "adaptation": {"kind": "geometric", "gamma": 0.9}},
        "seed": 7,
        "output": str(tmp_path / "sphere_gd"),
    }


@pytest.fixture
def write_config(tmp_path):
    """Write a config mapping to a YAML (or JSON) file and return its path."""
    def _write(config, name="experiment.yaml"):
        path = tmp_path / name
        if name.endswith(".json"):
            path.write_text(json.dumps(config))
        else:
            path.write_text(yaml.safe_dump(config))
        return path
    return _write
