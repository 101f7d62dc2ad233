"""
Smoothing-matrix schedules: fixed, geometric decay, and a rank-μ covariance
update driven by the same samples the gradient estimator drew.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import numpy.typing as npt

from ags.exceptions import AdaptationFailed, BadBounds, DimMismatch
from ags.spd_linalg import MatrixLike, SpdMatrix, SymMatrix, sym_eigen

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]

FIXED = "fixed"
GEOMETRIC = "geometric"
CMA = "cma"
KINDS = (FIXED, GEOMETRIC, CMA)

DEFAULT_FLOOR = 1e-8
DEFAULT_CAP = 1e6
DEFAULT_C_MU = 0.3
DEFAULT_SCALE_DECAY = 0.99
FALLBACK_GAMMA = 0.95


@dataclass(frozen=True)
class CmaParams:
    """
    Rank-μ update constants.

    Attributes:
        mu: Number of elite samples
        c_mu: Learning rate in (0, 1]
        weights: mu positive, non-increasing weights summing to 1
    """

    mu: int
    c_mu: float
    weights: Tuple[float, ...]

    def __post_init__(self):
        if self.mu < 1 or len(self.weights) != self.mu:
            raise ValueError(f"need mu >= 1 weights, got mu={self.mu} and {len(self.weights)} weights")
        if not 0.0 < self.c_mu <= 1.0:
            raise ValueError(f"c_mu must lie in (0, 1], got {self.c_mu}")
        w = np.asarray(self.weights)
        if np.any(w <= 0) or np.any(np.diff(w) > 0):
            raise ValueError("weights must be positive and non-increasing")
        if abs(float(np.sum(w)) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")

    @classmethod
    def default(cls, samples: int, c_mu: float = DEFAULT_C_MU, mu: Optional[int] = None) -> "CmaParams":
        """Log-rank weights w_i ∝ log(μ + 1/2) − log i with μ = ⌊N/2⌋."""
        mu = mu or max(1, samples // 2)
        raw = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
        return cls(mu, c_mu, tuple(raw / raw.sum()))

    @classmethod
    def equal(cls, mu: int, c_mu: float = DEFAULT_C_MU) -> "CmaParams":
        return cls(mu, c_mu, tuple(np.full(mu, 1.0 / mu)))


@dataclass(frozen=True)
class AdaptationStrategy:
    """
    How Σ_t evolves between iterations.

    Attributes:
        kind: "fixed", "geometric" or "cma"
        sigma0: Initial smoothing matrix Σ₀
        floor: Smallest eigenvalue any emitted Σ_t may have
        cap: Largest eigenvalue any emitted Σ_t may have
        gamma: Geometric decay factor in (0, 1)
        cma: Rank-μ constants; None derives defaults from the sample count
        scale_decay: Global shrink applied after each rank-μ update
    """

    kind: str
    sigma0: SpdMatrix
    floor: float = DEFAULT_FLOOR
    cap: float = DEFAULT_CAP
    gamma: float = 0.9
    cma: Optional[CmaParams] = field(default=None)
    scale_decay: float = DEFAULT_SCALE_DECAY

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown adaptation kind '{self.kind}', expected one of {KINDS}")
        _check_bounds(self.floor, self.cap)
        if self.kind == GEOMETRIC and not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 < self.scale_decay <= 1.0:
            raise ValueError(f"scale_decay must lie in (0, 1], got {self.scale_decay}")

    def params_for(self, samples: int) -> CmaParams:
        return self.cma or CmaParams.default(samples)

    def initial(self) -> SpdMatrix:
        """Σ₀ clamped into [floor, cap]."""
        return clamp_spectrum(self.sigma0, self.floor, self.cap)


def _check_bounds(floor: float, cap: float):
    if not floor > 0.0:
        raise BadBounds(f"floor must be positive, got {floor}")
    if floor > cap:
        raise BadBounds(f"floor {floor:g} exceeds cap {cap:g}")


def clamp_spectrum(S: MatrixLike, floor: float, cap: float) -> SpdMatrix:
    """
    Clip eigenvalues into [floor, cap], keeping the eigenvectors.

    Args:
        S: Symmetric matrix (need not be positive definite)
        floor: Smallest allowed eigenvalue
        cap: Largest allowed eigenvalue

    Returns:
        SpdMatrix; S itself when it already satisfies the bounds

    Raises:
        BadBounds: if floor is not positive or exceeds cap
    """
    _check_bounds(floor, cap)
    if isinstance(S, SpdMatrix) and S.min_eig >= floor and S.op_norm <= cap:
        return S
    eigenvalues, eigenvectors = sym_eigen(S)
    return SpdMatrix.from_eigen(np.clip(eigenvalues, floor, cap), eigenvectors, eig_floor=0.0)


def cma_covariance(S: SpdMatrix, directions: Array, fitness: Array, params: CmaParams) -> Array:
    """
    Rank-μ covariance C' = (1 − c_μ)Σ² + c_μ Σ_i w_i y_i y_iᵀ, y_i = Σu_(i).

    Samples are ranked by ascending fitness, ties broken by sample index.

    Args:
        S: Current smoothing matrix Σ_t
        directions: u_n, shape (N, d)
        fitness: f(x + Σ_t u_n), shape (N,)
        params: Rank-μ constants

    Returns:
        Symmetric d×d array C'

    Raises:
        AdaptationFailed: when fewer than mu fitness values are finite
    """
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    fitness = np.asarray(fitness, dtype=float).ravel()
    if directions.shape != (fitness.size, S.dim):
        raise DimMismatch(f"directions of shape {directions.shape} for {fitness.size} fitness values in dim {S.dim}")
    finite = np.isfinite(fitness)
    if int(finite.sum()) < params.mu:
        raise AdaptationFailed(f"{int(finite.sum())} finite fitness values, need {params.mu}")

    ranking = np.argsort(np.where(finite, fitness, np.inf), kind="stable")[:params.mu]
    elites = directions[ranking] @ S.matrix
    weights = np.asarray(params.weights)
    update = (elites.T * weights) @ elites
    covariance = (1.0 - params.c_mu) * S.squared() + params.c_mu * update
    return SymMatrix.from_array(covariance).entries


def adapt(strategy: AdaptationStrategy, S: SpdMatrix, directions: Optional[Array] = None,
          fitness: Optional[Array] = None) -> SpdMatrix:
    """
    Produce Σ_{t+1} from Σ_t.

    Args:
        strategy: Adaptation strategy
        S: Current smoothing matrix Σ_t
        directions: Sample directions u_n (cma only)
        fitness: f(x_t + Σ_t u_n) per direction (cma only)

    Returns:
        Next smoothing matrix with spectrum inside [floor, cap]

    Raises:
        AdaptationFailed: for cma without enough finite samples
    """
    if strategy.kind == FIXED:
        return S
    if strategy.kind == GEOMETRIC:
        return clamp_spectrum(S.scaled(strategy.gamma), strategy.floor, strategy.cap)

    if directions is None or fitness is None:
        raise AdaptationFailed("covariance update needs sample directions and fitness values")
    params = strategy.params_for(len(fitness))
    eigenvalues, eigenvectors = sym_eigen(cma_covariance(S, directions, fitness, params))
    root = np.sqrt(np.maximum(eigenvalues, 0.0)) * strategy.scale_decay
    return SpdMatrix.from_eigen(np.clip(root, strategy.floor, strategy.cap), eigenvectors, eig_floor=0.0)


def adapt_with_fallback(strategy: AdaptationStrategy, S: SpdMatrix, directions: Optional[Array] = None,
                        fitness: Optional[Array] = None) -> Tuple[SpdMatrix, bool]:
    """
    adapt, falling back to geometric decay with γ = 0.95 when the update fails.

    Returns:
        Tuple of (Σ_{t+1}, whether the fallback was used)
    """
    try:
        return adapt(strategy, S, directions, fitness), False
    except AdaptationFailed as e:
        logger.warning("covariance adaptation failed (%s), decaying by %.2f instead", e, FALLBACK_GAMMA)
        return clamp_spectrum(S.scaled(FALLBACK_GAMMA), strategy.floor, strategy.cap), True
