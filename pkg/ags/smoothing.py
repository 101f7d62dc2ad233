"""
Anisotropic Gaussian smoothing of an objective.

    f_Σ(x) = π^{-d/2} ∫ f(x + Σu) e^{-‖u‖²} du
    ∇f_Σ(x) = 2 Σ⁻¹ π^{-d/2} ∫ u f(x + Σu) e^{-‖u‖²} du

Three evaluators: closed forms (quadratics, the cosine family, |x| in d=1),
tensor Gauss-Hermite quadrature for d ≤ 3, and Monte Carlo for anything.
Monte Carlo directions u have per-coordinate variance 1/2, matching the
e^{-‖u‖²} weight above.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np
import numpy.typing as npt
from scipy.special import erf

from ags.exceptions import DimMismatch, DimTooLarge
from ags.objectives import Objective, QuadraticForm
from ags.spd_linalg import SpdMatrix, check_same_dim, spd_sqrt

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]

CENTRAL = "central"
FORWARD = "forward"
VARIANTS = (CENTRAL, FORWARD)

DEFAULT_ORDER = 16
MAX_QUADRATURE_DIM = 3
MIN_ORDER = 4
DEFAULT_CHUNK = 4096


@dataclass(frozen=True)
class McConfig:
    """
    Monte Carlo estimator settings.

    Draws are keyed by (seed, counter, chunk index), so the same config always
    reproduces the same directions whatever the number of workers.

    Attributes:
        samples: Number of directions N
        variant: "central" (f(x+Σu) − f(x−Σu)) or "forward" (f(x+Σu) − f(x))
        seed: Entropy of the Monte Carlo stream
        counter: Position in the stream, normally the iteration index
        forward_coefficient: Multiplier of the forward difference
        chunk_size: Directions drawn and evaluated per chunk
        workers: Threads used to evaluate chunks
    """

    samples: int
    variant: str = CENTRAL
    seed: int = 0
    counter: int = 0
    forward_coefficient: float = 2.0
    chunk_size: int = DEFAULT_CHUNK
    workers: int = 1

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError(f"samples must be at least 1, got {self.samples}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got '{self.variant}'")
        if self.chunk_size < 1 or self.workers < 1:
            raise ValueError("chunk_size and workers must be positive")

    def at(self, counter: int) -> "McConfig":
        return replace(self, counter=int(counter))


@dataclass(frozen=True)
class GradientEstimate:
    """
    Monte Carlo gradient estimate of ∇f_Σ.

    Attributes:
        mean: Estimated gradient
        stderr: Per-coordinate sample standard deviation / √N
        samples_used: Number of directions N
        directions: The u_n drawn, shape (N, d)
        fitness: f(x + Σu_n) for each direction, reused by covariance adaptation
    """

    mean: Array
    stderr: Array
    samples_used: int
    directions: Optional[Array] = None
    fitness: Optional[Array] = None


def draw_directions(cfg: McConfig, dim: int) -> List[Array]:
    """
    Directions u_n ~ N(0, I/2), split into chunks.

    Args:
        cfg: Monte Carlo settings
        dim: Dimension d

    Returns:
        List of arrays of shape (chunk, d) whose rows total cfg.samples
    """
    chunks = []
    remaining = cfg.samples
    index = 0
    while remaining > 0:
        size = min(cfg.chunk_size, remaining)
        seq = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(cfg.counter, index))
        rng = np.random.default_rng(seq)
        chunks.append(rng.standard_normal((size, dim)) * np.sqrt(0.5))
        remaining -= size
        index += 1
    return chunks


def _evaluate_chunks(obj: Objective, chunks: List[Array], workers: int) -> Array:
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(obj.value_batch, chunks))
    else:
        values = [obj.value_batch(chunk) for chunk in chunks]
    return np.concatenate(values)


def _mean_and_stderr(samples: Array) -> Tuple[Array, Array]:
    n = samples.shape[0]
    # shifting by the first sample makes constant inputs exact
    anchor = samples[0]
    centered = samples - anchor
    mean = anchor + np.mean(centered, axis=0)
    if n < 2:
        return mean, np.zeros_like(np.asarray(mean, dtype=float))
    stderr = np.std(centered, axis=0, ddof=1) / np.sqrt(n)
    return mean, stderr


def _as_point(obj: Objective, x) -> Array:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != obj.dim:
        raise DimMismatch(f"point has dimension {x.size}, objective {obj.dim}")
    return x


def smooth_value_mc(obj: Objective, S: SpdMatrix, x, cfg: McConfig) -> Tuple[float, float]:
    """
    Monte Carlo estimate of f_Σ(x).

    Args:
        obj: Objective f
        S: Smoothing matrix Σ
        x: Evaluation point
        cfg: Monte Carlo settings

    Returns:
        Tuple of (sample mean, standard error)
    """
    x = _as_point(obj, x)
    check_same_dim(obj, S)
    chunks = draw_directions(cfg, obj.dim)
    values = _evaluate_chunks(obj, [x + u @ S.matrix for u in chunks], cfg.workers)
    mean, stderr = _mean_and_stderr(values)
    return float(mean), float(stderr)


def smooth_grad_mc(obj: Objective, S: SpdMatrix, x, cfg: McConfig) -> GradientEstimate:
    """
    Monte Carlo estimate of ∇f_Σ(x) from N Gaussian directions.

    Per sample the estimator is δ_n·Σ⁻¹u_n with
    δ_n = f(x+Σu_n) − f(x−Σu_n) (central, 2N evaluations) or
    δ_n = c·(f(x+Σu_n) − f(x)) (forward, N+1 evaluations, c = forward_coefficient).
    Both are unbiased for c = 2.

    Args:
        obj: Objective f
        S: Smoothing matrix Σ
        x: Evaluation point
        cfg: Monte Carlo settings

    Returns:
        GradientEstimate with the directions and f(x+Σu_n) attached
    """
    x = _as_point(obj, x)
    check_same_dim(obj, S)
    chunks = draw_directions(cfg, obj.dim)
    steps = [u @ S.matrix for u in chunks]
    plus = _evaluate_chunks(obj, [x + y for y in steps], cfg.workers)
    if cfg.variant == CENTRAL:
        minus = _evaluate_chunks(obj, [x - y for y in steps], cfg.workers)
        delta = plus - minus
    else:
        base = obj.value(x)
        delta = cfg.forward_coefficient * (plus - base)

    directions = np.concatenate(chunks)
    per_sample = delta[:, None] * (directions @ S.inverse())
    mean, stderr = _mean_and_stderr(per_sample)
    if not np.all(np.isfinite(mean)):
        logger.debug("non-finite gradient estimate at counter %d", cfg.counter)
    return GradientEstimate(mean, stderr, cfg.samples, directions, plus)


def _hermite_grid(dim: int, order: int) -> Tuple[Array, Array]:
    if dim > MAX_QUADRATURE_DIM:
        raise DimTooLarge(f"tensor quadrature supports dim <= {MAX_QUADRATURE_DIM}, got {dim}")
    if order < MIN_ORDER:
        raise ValueError(f"quadrature order must be at least {MIN_ORDER}, got {order}")
    nodes, weights = np.polynomial.hermite.hermgauss(order)
    mesh = np.meshgrid(*([nodes] * dim), indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=-1)
    wmesh = np.meshgrid(*([weights] * dim), indexing="ij")
    grid_weights = np.prod(np.stack([w.ravel() for w in wmesh], axis=-1), axis=-1)
    return points, grid_weights / np.pi ** (dim / 2.0)


def smooth_value_quadrature(obj: Objective, S: SpdMatrix, x, order: int = DEFAULT_ORDER) -> float:
    """
    f_Σ(x) by tensor Gauss-Hermite quadrature.

    Exact for integrands polynomial of degree < 2·order along each axis.
    Evaluations are not counted.

    Raises:
        DimTooLarge: if the dimension exceeds 3
    """
    x = _as_point(obj, x)
    check_same_dim(obj, S)
    points, weights = _hermite_grid(obj.dim, order)
    values = obj.value_batch(x + points @ S.matrix, count=False)
    return float(weights @ values)


def smooth_grad_quadrature(obj: Objective, S: SpdMatrix, x, order: int = DEFAULT_ORDER) -> Array:
    """
    ∇f_Σ(x) = 2Σ⁻¹ E[u f(x+Σu)] by tensor Gauss-Hermite quadrature.

    Args:
        obj: Objective f (no gradient needed)
        S: Smoothing matrix Σ
        x: Evaluation point
        order: Nodes per axis

    Returns:
        Gradient vector

    Raises:
        DimTooLarge: if the dimension exceeds 3
    """
    x = _as_point(obj, x)
    check_same_dim(obj, S)
    points, weights = _hermite_grid(obj.dim, order)
    values = obj.value_batch(x + points @ S.matrix, count=False)
    return 2.0 * S.inverse() @ ((weights * values) @ points)


def analytic_smooth_quadratic(q: QuadraticForm, S: SpdMatrix, x) -> Tuple[float, Array]:
    """
    Closed-form smoothing of a quadratic: q(x) + tr(AΣ²)/2, gradient ∇q(x).

    Args:
        q: Quadratic form
        S: Smoothing matrix Σ
        x: Evaluation point

    Returns:
        Tuple of (value, gradient)
    """
    check_same_dim(q, S)
    x = np.asarray(x, dtype=float).ravel()
    if x.size != q.dim:
        raise DimMismatch(f"point has dimension {x.size}, quadratic {q.dim}")
    shift = 0.5 * float(np.trace(q.A.entries @ S.squared()))
    return float(q.value(x)) + shift, q.gradient(x)


def smooth_cosine_closed_form(a, S: SpdMatrix, x) -> float:
    """Smoothed f(x) = cos(aᵀx): cos(aᵀx)·exp(−‖Σa‖²/4)."""
    a = np.asarray(a, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    if a.size != S.dim or x.size != S.dim:
        raise DimMismatch(f"a, x and Σ must share dimension {S.dim}")
    spread = S.matrix @ a
    return float(np.cos(a @ x) * np.exp(-(spread @ spread) / 4.0))


def smooth_abs_derivative(x, sigma: float) -> Array:
    # d/dx of |x| smoothed with Σ = [σ]
    return erf(np.asarray(x, dtype=float) / sigma)


def smoothing_kernel(S: SpdMatrix, v) -> Array:
    """
    Convolution kernel k_Σ(v) = exp(−vᵀΣ⁻²v) / (π^{d/2}|Σ|), so that f_Σ = f ⋆ k_Σ.

    Args:
        S: Smoothing matrix Σ
        v: Offsets, shape (..., d)

    Returns:
        Kernel values, shape (...)
    """
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != S.dim:
        raise DimMismatch(f"offsets have dimension {v.shape[-1]}, Σ {S.dim}")
    inv_sq = (S.eigenvectors / S.eigenvalues ** 2) @ S.eigenvectors.T
    exponent = np.einsum("...i,ij,...j->...", v, inv_sq, v)
    det = float(np.prod(S.eigenvalues))
    return np.exp(-exponent) / (np.pi ** (S.dim / 2.0) * det)


def compose_smoothing(S: SpdMatrix, T: SpdMatrix) -> SpdMatrix:
    """
    Smoothing by Σ then by T equals smoothing by H = √(Σ² + T²).

    Raises:
        DimMismatch: if Σ and T differ in dimension
    """
    check_same_dim(S, T)
    return spd_sqrt(S.squared() + T.squared())
