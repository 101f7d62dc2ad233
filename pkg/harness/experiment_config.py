"""
Experiment configuration documents.

A configuration is a JSON or YAML mapping validated into ExperimentConfig.
Unknown keys are rejected and every precondition the library would check
later (benchmark dimension, SPD initial smoothing, method and gradient source
compatibility) is checked here, before anything is evaluated.
"""

import json
import logging
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
import pydantic
import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ags.adaptation import CMA, DEFAULT_C_MU, DEFAULT_CAP, DEFAULT_FLOOR, DEFAULT_SCALE_DECAY, KINDS
from ags.exceptions import AgsError
from ags.objectives import check_benchmark_dim
from ags.optimizers import ANALYTIC_QUADRATIC, METHODS, MONTE_CARLO, SMOOTHED_METHODS, STOCHASTIC_METHODS
from ags.smoothing import VARIANTS
from ags.spd_linalg import SpdMatrix

logger = logging.getLogger(__name__)

QUADRATIC_BENCHMARKS = ("sphere", "ellipsoidal")


class HarnessError(Exception):
    """Base class for errors raised by the harness."""


class ConfigParseError(HarnessError):
    """The document is not a well-formed JSON/YAML mapping."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        location = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{location}")
        self.line = line
        self.column = column


class ConfigValidationError(HarnessError):
    """
    One or more fields failed validation.

    Attributes:
        errors: (field path, message) pairs
    """

    def __init__(self, errors: List[Tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{path}: {message}" for path, message in errors))


class HarnessIOError(HarnessError):
    """Reading a configuration or writing results failed."""

    def __init__(self, message: str, path: Union[str, Path]):
        super().__init__(f"{message}: {path}")
        self.path = Path(path)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FunctionConfig(_Strict):
    name: str
    dim: int = Field(ge=1)
    rotation_seed: Optional[int] = Field(default=None, ge=0)
    x_opt: Union[Literal["origin"], List[float]] = "origin"

    @model_validator(mode="after")
    def _check_benchmark(self):
        try:
            check_benchmark_dim(self.name, self.dim)
        except AgsError as e:
            raise ValueError(str(e))
        if isinstance(self.x_opt, list) and len(self.x_opt) != self.dim:
            raise ValueError(f"x_opt has {len(self.x_opt)} entries, expected {self.dim}")
        return self


class ScheduleConfig(_Strict):
    """Step sizes; eta0 None means 1/(2L) for the GD family when L is known, else 1e-2."""

    eta0: Optional[float] = Field(default=None, gt=0)
    eta_exponent: Optional[float] = Field(default=None, ge=0)
    beta: float = Field(default=0.9, ge=0, lt=1)
    theta_scale: float = Field(default=1e-3, ge=0, le=1)
    theta_exponent: float = Field(default=0.5, ge=0)
    epsilon: float = Field(default=1e-8, ge=0)


class OptimizerConfig(_Strict):
    method: Literal[METHODS]
    T: int = Field(ge=1)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    grad_tol: Optional[float] = Field(default=None, gt=0)


class AdaptationConfig(_Strict):
    kind: Literal[KINDS] = "geometric"
    gamma: float = Field(default=0.9, gt=0, lt=1)
    floor: float = Field(default=DEFAULT_FLOOR, gt=0)
    cap: float = Field(default=DEFAULT_CAP, gt=0)
    c_mu: float = Field(default=DEFAULT_C_MU, gt=0, le=1)
    mu: Optional[int] = Field(default=None, ge=1)
    scale_decay: float = Field(default=DEFAULT_SCALE_DECAY, gt=0, le=1)

    @model_validator(mode="after")
    def _check_bounds(self):
        if self.floor > self.cap:
            raise ValueError(f"floor {self.floor:g} exceeds cap {self.cap:g}")
        return self


class SmoothingConfig(_Strict):
    sigma0: Union[float, List[List[float]]] = 1.0
    adaptation: AdaptationConfig = Field(default_factory=AdaptationConfig)
    gradient: Optional[Literal[ANALYTIC_QUADRATIC, MONTE_CARLO]] = None
    mc_samples: int = Field(default=64, ge=1)
    delta: Literal[VARIANTS] = "central"
    workers: int = Field(default=1, ge=1)

    @field_validator("sigma0")
    @classmethod
    def _check_sigma0(cls, value):
        if isinstance(value, list):
            try:
                SpdMatrix.from_array(value)
            except AgsError as e:
                raise ValueError(f"sigma0 must be symmetric positive definite: {e}")
        elif not value > 0:
            raise ValueError("sigma0 must be positive")
        return value


class StochasticConfig(_Strict):
    K: int = Field(ge=1)
    noise_scale: float = Field(default=1.0, ge=0)
    # λ with E‖∇f_k‖² ≤ λ; enables the SGD certificate when given
    grad_sq_bound: Optional[float] = Field(default=None, ge=0)


class ExperimentConfig(_Strict):
    """A complete, validated experiment."""

    function: FunctionConfig
    optimizer: OptimizerConfig
    smoothing: SmoothingConfig = Field(default_factory=SmoothingConfig)
    stochastic: Optional[StochasticConfig] = None
    x0: Optional[List[float]] = None
    certificate: bool = True
    seed: int = Field(ge=0, lt=2 ** 64)
    output: Optional[str] = None

    @model_validator(mode="after")
    def _check_consistency(self):
        dim = self.function.dim
        sigma0 = self.smoothing.sigma0
        if isinstance(sigma0, list) and len(sigma0) != dim:
            raise ValueError(f"sigma0 is {len(sigma0)}x{len(sigma0)}, expected {dim}x{dim}")
        if self.x0 is not None and len(self.x0) != dim:
            raise ValueError(f"x0 has {len(self.x0)} entries, expected {dim}")
        method = self.optimizer.method
        if self.gradient_source == ANALYTIC_QUADRATIC and self.function.name not in QUADRATIC_BENCHMARKS:
            raise ValueError(f"analytic_quadratic gradients need one of {QUADRATIC_BENCHMARKS}")
        if method == "cma" and self.smoothing.adaptation.kind != CMA:
            raise ValueError("cma method requires cma adaptation")
        if method == "cma" and self.smoothing.gradient == ANALYTIC_QUADRATIC:
            raise ValueError("cma method samples directions and cannot use analytic_quadratic")
        if self.stochastic is not None and method not in STOCHASTIC_METHODS:
            logger.warning("stochastic section ignored by %s", method)
        return self

    @property
    def gradient_source(self) -> Optional[str]:
        """Resolved source of smoothed gradients (None for unsmoothed baselines)."""
        method = self.optimizer.method
        if method not in SMOOTHED_METHODS:
            return MONTE_CARLO if method == "cma" else None
        if self.smoothing.gradient is not None:
            return self.smoothing.gradient
        return ANALYTIC_QUADRATIC if self.function.name in QUADRATIC_BENCHMARKS else MONTE_CARLO

    def sigma0_matrix(self) -> SpdMatrix:
        sigma0 = self.smoothing.sigma0
        if isinstance(sigma0, list):
            return SpdMatrix.from_array(np.array(sigma0))
        return SpdMatrix.isotropic(float(sigma0), self.function.dim)


def _load_document(document: str):
    if document.lstrip().startswith("{"):
        try:
            return json.loads(document)
        except json.JSONDecodeError as e:
            raise ConfigParseError(e.msg, e.lineno, e.colno) from e
    try:
        return yaml.safe_load(document)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        if mark is None:
            raise ConfigParseError(str(e)) from e
        raise ConfigParseError(getattr(e, "problem", None) or str(e), mark.line + 1, mark.column + 1) from e


def parse_config(document: str) -> ExperimentConfig:
    """
    Parse and validate a configuration document.

    Args:
        document: JSON or YAML text holding a mapping

    Returns:
        Validated ExperimentConfig with every default applied

    Raises:
        ConfigParseError: if the text is malformed or not a mapping
        ConfigValidationError: if any field is invalid or unknown
    """
    data = _load_document(document)
    if not isinstance(data, dict):
        raise ConfigParseError("configuration must be a mapping", 1, 1)
    try:
        return ExperimentConfig.model_validate(data)
    except pydantic.ValidationError as e:
        errors = [(".".join(str(p) for p in err["loc"]) or "<root>", err["msg"]) for err in e.errors()]
        raise ConfigValidationError(errors) from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read and parse a configuration file."""
    path = Path(path)
    try:
        document = path.read_text()
    except OSError as e:
        raise HarnessIOError(f"cannot read configuration ({e.strerror})", path) from e
    return parse_config(document)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical JSON text of a validated configuration; parse_config reads it back unchanged."""
    return json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True)
