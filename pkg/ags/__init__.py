"""Anisotropic Gaussian smoothing: linear algebra, objectives, estimators, bounds and optimizers."""

__version__ = "0.1.0"
