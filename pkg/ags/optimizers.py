"""
Smoothed GD, SGD and Adam, their unsmoothed baselines, and a pure covariance
adaptation baseline, all driven by one run loop.

Each iteration adapts Σ first, then steps with the gradient of f_{Σ_{t+1}}.
Randomness comes from three streams spawned off the master seed (component
choice, Monte Carlo directions, adaptation directions) so the streams never
interfere with each other.
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import numpy.typing as npt

from ags.adaptation import CMA, AdaptationStrategy, adapt_with_fallback
from ags.bounds import CertificateTracker
from ags.exceptions import AgsError, BadStep, DegenerateDenominator, NonFiniteGradient, RunAborted
from ags.objectives import FiniteSum, Objective
from ags.smoothing import McConfig, analytic_smooth_quadratic, draw_directions, smooth_grad_mc
from ags.spd_linalg import SpdMatrix

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]

AGS_GD = "ags_gd"
AGS_SGD = "ags_sgd"
AGS_ADAM = "ags_adam"
GD = "gd"
SGD = "sgd"
ADAM = "adam"
CMA_BASELINE = "cma"
SMOOTHED_METHODS = (AGS_GD, AGS_SGD, AGS_ADAM)
BASELINE_METHODS = (GD, SGD, ADAM)
METHODS = SMOOTHED_METHODS + BASELINE_METHODS + (CMA_BASELINE,)
STOCHASTIC_METHODS = (AGS_SGD, AGS_ADAM, SGD, ADAM)

ANALYTIC_QUADRATIC = "analytic_quadratic"
MONTE_CARLO = "mc"
EXACT_UNSMOOTHED = "exact_unsmoothed"

STREAMS = ("components", "mc", "adaptation")
DEFAULT_ADAPTATION_SAMPLES = 16


@dataclass(frozen=True)
class OptimizerState:
    """
    Iterate of a run.

    Attributes:
        x: Current point
        t: Number of steps taken
        m: Adam first moment
        v: Adam second moment (elementwise, never negative)
    """

    x: Array
    t: int
    m: Array
    v: Array

    @classmethod
    def initial(cls, x0) -> "OptimizerState":
        x0 = np.array(x0, dtype=float).ravel()
        return cls(x0, 0, np.zeros_like(x0), np.zeros_like(x0))


@dataclass(frozen=True)
class Schedule:
    """
    Step-size and moment schedules.

    η_t = eta0·t^{−eta_exponent}, β_t = beta, θ_t = 1 − theta_scale·t^{−theta_exponent}.
    A zero exponent gives a constant step.
    """

    eta0: float = 1e-2
    eta_exponent: float = 0.6
    beta: float = 0.9
    theta_scale: float = 1e-3
    theta_exponent: float = 0.5
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.eta0 > 0:
            raise BadStep(f"eta0 must be positive, got {self.eta0}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if not 0.0 <= self.theta_scale <= 1.0:
            raise ValueError(f"theta_scale must lie in [0, 1], got {self.theta_scale}")
        if self.epsilon < 0 or self.eta_exponent < 0 or self.theta_exponent < 0:
            raise ValueError("epsilon and exponents must be nonnegative")

    @classmethod
    def constant(cls, eta: float, **kwargs) -> "Schedule":
        return cls(eta0=eta, eta_exponent=0.0, **kwargs)

    def eta(self, t: int) -> float:
        return self.eta0 * float(t) ** (-self.eta_exponent)

    def beta_at(self, t: int) -> float:
        return self.beta

    def theta(self, t: int) -> float:
        return 1.0 - self.theta_scale * float(t) ** (-self.theta_exponent)


def default_schedule(method: str, smoothness_L: Optional[float] = None) -> Schedule:
    """λ = 1/(2L) (or 1e-2) for the GD family, η_t = 1e-2·t^{−0.6} otherwise."""
    if method in (GD, AGS_GD, CMA_BASELINE):
        return Schedule.constant(0.5 / smoothness_L if smoothness_L else 1e-2)
    return Schedule()


@dataclass(frozen=True)
class GradientSource:
    """Where smoothed gradients come from: closed form, Monte Carlo, or none (baselines)."""

    kind: str
    mc: Optional[McConfig] = None

    @classmethod
    def analytic(cls) -> "GradientSource":
        return cls(ANALYTIC_QUADRATIC)

    @classmethod
    def monte_carlo(cls, cfg: McConfig) -> "GradientSource":
        return cls(MONTE_CARLO, cfg)

    @classmethod
    def exact(cls) -> "GradientSource":
        return cls(EXACT_UNSMOOTHED)


@dataclass(frozen=True)
class RunRecord:
    """One row of a run's trajectory, taken after step t."""

    t: int
    f_x: float
    f_best: float
    grad_norm_est: float
    grad_stderr_norm: float
    sigma_opnorm: float
    sigma_min_eig: float
    evals_cumulative: int
    certificate: Optional[float] = None
    adaptation_fallback: bool = False


def _check_gradient(g: Array) -> Array:
    g = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient("gradient has NaN or infinite entries")
    return g


def ags_gd_step(state: OptimizerState, grad_sigma, lam: float) -> OptimizerState:
    """x' = x − λ∇f_Σ(x)."""
    if not lam > 0:
        raise BadStep(f"step size must be positive, got {lam}")
    g = _check_gradient(grad_sigma)
    return replace(state, x=state.x - lam * g, t=state.t + 1)


def ags_sgd_step(state: OptimizerState, k: int, grad_sigma_k, eta_t: float) -> OptimizerState:
    """
    x' = x − η_t∇f_{k,Σ}(x) for the sampled component k.

    Args:
        state: Current iterate
        k: Component index drawn by the run loop
        grad_sigma_k: Smoothed gradient of component k
        eta_t: Step size at this iteration

    Returns:
        Next iterate
    """
    if not eta_t > 0:
        raise BadStep(f"step size must be positive, got {eta_t}")
    if k < 0:
        raise ValueError(f"component index must be nonnegative, got {k}")
    g = _check_gradient(grad_sigma_k)
    return replace(state, x=state.x - eta_t * g, t=state.t + 1)


def ags_adam_step(state: OptimizerState, grad_sigma_k, schedule: Schedule,
                  t: Optional[int] = None) -> OptimizerState:
    """
    Adam update without bias correction.

        m' = β_t m + (1 − β_t)g
        v' = θ_t v + (1 − θ_t)g²
        x' = x − η_t m' / √(v' + ε)

    Args:
        state: Current iterate
        grad_sigma_k: Smoothed gradient
        schedule: Schedules for η, β, θ and ε
        t: Iteration index for the schedules (state.t + 1 by default)

    Returns:
        Next iterate

    Raises:
        DegenerateDenominator: when √(v' + ε) vanishes where m' does not
    """
    g = _check_gradient(grad_sigma_k)
    t = state.t + 1 if t is None else t
    beta, theta = schedule.beta_at(t), schedule.theta(t)
    m = beta * state.m + (1.0 - beta) * g
    v = theta * state.v + (1.0 - theta) * g ** 2
    denominator = np.sqrt(v + schedule.epsilon)
    vanished = denominator == 0.0
    if np.any(vanished & (m != 0.0)):
        raise DegenerateDenominator("second moment and epsilon vanish where the first moment does not")
    ratio = np.divide(m, denominator, out=np.zeros_like(m), where=~vanished)
    return OptimizerState(state.x - schedule.eta(t) * ratio, state.t + 1, m, v)


def stream_seeds(seed: int) -> Dict[str, int]:
    """Independent 64-bit seeds for the named streams of one run."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: int(child.generate_state(1, dtype=np.uint64)[0]) for name, child in zip(STREAMS, children)}


def _check_compatible(method: str, objective: Objective, grad_source: GradientSource,
                      adaptation: Optional[AdaptationStrategy], finite_sum: Optional[FiniteSum]):
    if method not in METHODS:
        raise ValueError(f"unknown method '{method}', expected one of {METHODS}")
    if method in SMOOTHED_METHODS or method == CMA_BASELINE:
        if adaptation is None:
            raise ValueError(f"{method} needs an adaptation strategy")
        if adaptation.sigma0.dim != objective.dim:
            raise ValueError(f"sigma0 has dimension {adaptation.sigma0.dim}, objective {objective.dim}")
    if method in SMOOTHED_METHODS:
        if grad_source.kind == ANALYTIC_QUADRATIC:
            sources = [objective] if finite_sum is None else [finite_sum.component(k) for k in range(finite_sum.K)]
            if any(obj.quadratic is None for obj in sources):
                raise ValueError("analytic_quadratic gradients need a quadratic objective")
        elif grad_source.kind != MONTE_CARLO:
            raise ValueError(f"{method} needs analytic_quadratic or mc gradients, got {grad_source.kind}")
    if method in BASELINE_METHODS and not objective.has_gradient:
        raise ValueError(f"{method} needs an objective with an analytic gradient")
    if method == CMA_BASELINE and (grad_source.mc is None or adaptation.kind != CMA):
        raise ValueError("cma baseline needs mc samples and cma adaptation")
    if grad_source.kind == MONTE_CARLO and grad_source.mc is None:
        raise ValueError("mc gradient source needs an McConfig")


class _Runner:
    """Mutable loop state for a single run."""

    def __init__(self, method, objective, schedule, adaptation, grad_source, seed, finite_sum,
                 certificate, adaptation_samples):
        self.method = method
        self.objective = objective
        self.schedule = schedule
        self.adaptation = adaptation
        self.grad_source = grad_source
        self.finite_sum = finite_sum
        self.certificate = certificate
        self.adaptation_samples = adaptation_samples
        seeds = stream_seeds(seed)
        self.component_rng = np.random.default_rng(seeds["components"])
        self.mc_seed = seeds["mc"]
        self.adaptation_seed = seeds["adaptation"]
        self.samples: Optional[Tuple[Array, Array]] = None

    def target(self) -> Tuple[int, Objective]:
        if self.method in STOCHASTIC_METHODS and self.finite_sum is not None:
            k = int(self.component_rng.integers(self.finite_sum.K))
            return k, self.finite_sum.component(k)
        return 0, self.objective

    def fresh_samples(self, x: Array, sigma: SpdMatrix, t: int) -> Tuple[Array, Array]:
        cfg = McConfig(self.adaptation_samples, seed=self.adaptation_seed, counter=t)
        directions = np.concatenate(draw_directions(cfg, self.objective.dim))
        return directions, self.objective.value_batch(x + directions @ sigma.matrix)

    def next_sigma(self, x: Array, sigma: SpdMatrix, t: int) -> Tuple[SpdMatrix, bool]:
        """
        Σ_t from Σ_{t−1}.

        CMA ranks the directions drawn for the previous gradient estimate, so
        the fitness is that step's component f_k evaluated around the point the
        estimate was taken at, one iterate behind x, with the previous Σ. No
        fresh evaluation at x is made. Only when no estimate left samples behind
        (first step, analytic gradients) are new directions drawn at x.
        """
        if self.adaptation.kind != CMA:
            return adapt_with_fallback(self.adaptation, sigma)
        directions, fitness = self.samples or self.fresh_samples(x, sigma, t)
        self.samples = None
        return adapt_with_fallback(self.adaptation, sigma, directions, fitness)

    def smoothed_gradient(self, target: Objective, sigma: SpdMatrix, x: Array, t: int) -> Tuple[Array, Array]:
        if self.grad_source.kind == ANALYTIC_QUADRATIC:
            _, g = analytic_smooth_quadratic(target.quadratic, sigma, x)
            return g, np.zeros_like(g)
        cfg = replace(self.grad_source.mc, seed=self.mc_seed, counter=t)
        estimate = smooth_grad_mc(target, sigma, x, cfg)
        self.samples = (estimate.directions, estimate.fitness)
        return estimate.mean, estimate.stderr

    def cma_step(self, state: OptimizerState, sigma: SpdMatrix, t: int) -> Tuple[OptimizerState, Array]:
        # mean moves to the weighted elite mean; Σ is adapted afterwards from the same samples
        cfg = replace(self.grad_source.mc, seed=self.mc_seed, counter=t)
        directions = np.concatenate(draw_directions(cfg, self.objective.dim))
        fitness = self.objective.value_batch(state.x + directions @ sigma.matrix)
        params = self.adaptation.params_for(len(fitness))
        finite = np.isfinite(fitness)
        ranking = np.argsort(np.where(finite, fitness, np.inf), kind="stable")[:params.mu]
        shift = np.asarray(params.weights) @ (directions[ranking] @ sigma.matrix)
        self.samples = (directions, fitness)
        return replace(state, x=state.x + shift, t=state.t + 1), shift

    def step(self, state: OptimizerState, sigma: Optional[SpdMatrix], t: int):
        k, target = self.target()
        if self.method in BASELINE_METHODS:
            g = target.gradient(state.x)
            stderr = np.zeros_like(g)
        else:
            g, stderr = self.smoothed_gradient(target, sigma, state.x, t)
        if self.method in (GD, AGS_GD):
            new_state = ags_gd_step(state, g, self.schedule.eta(t))
        elif self.method in (SGD, AGS_SGD):
            new_state = ags_sgd_step(state, k, g, self.schedule.eta(t))
        else:
            new_state = ags_adam_step(state, g, self.schedule, t)
        return new_state, g, stderr


def run(method: str, objective: Objective, x0, horizon: int, schedule: Optional[Schedule] = None,
        adaptation: Optional[AdaptationStrategy] = None, grad_source: Optional[GradientSource] = None,
        seed: int = 0, finite_sum: Optional[FiniteSum] = None,
        certificate: Optional[CertificateTracker] = None, grad_tol: Optional[float] = None,
        sigma_schedule: Optional[Callable[[int], SpdMatrix]] = None,
        adaptation_samples: int = DEFAULT_ADAPTATION_SAMPLES) -> List[RunRecord]:
    """
    Run one optimizer for up to horizon steps.

    Args:
        method: ags_gd, ags_sgd, ags_adam, gd, sgd, adam or cma
        objective: Objective f (also used for monitoring f(x_t))
        x0: Starting point
        horizon: Number of steps T
        schedule: Step-size schedule (default_schedule when omitted)
        adaptation: Σ_t strategy, required by smoothed methods and cma
        grad_source: Gradient source (exact for baselines by default)
        seed: Master seed for all random streams
        finite_sum: Components for the stochastic methods
        certificate: Tracker fed with (Σ_t, η_t) after every step
        grad_tol: Stop early once ‖g_t‖ falls below this
        sigma_schedule: Explicit t ↦ Σ_t overriding the adaptation strategy
        adaptation_samples: Directions drawn for cma adaptation when the
            gradient source supplies none

    Returns:
        One RunRecord per step taken

    Raises:
        RunAborted: when a step fails; carries the records produced so far
    """
    if horizon < 1:
        raise ValueError(f"horizon must be positive, got {horizon}")
    grad_source = grad_source or GradientSource.exact()
    _check_compatible(method, objective, grad_source, adaptation, finite_sum)
    schedule = schedule or default_schedule(method, objective.smoothness_L)
    runner = _Runner(method, objective, schedule, adaptation, grad_source, seed, finite_sum,
                     certificate, adaptation_samples)

    smoothed = method in SMOOTHED_METHODS or method == CMA_BASELINE
    state = OptimizerState.initial(x0)
    sigma = adaptation.initial() if smoothed else None
    best = np.inf
    records: List[RunRecord] = []
    logger.info("starting %s on %s (dim=%d, T=%d)", method, objective.name, objective.dim, horizon)

    for t in range(1, horizon + 1):
        fallback = False
        try:
            if method == CMA_BASELINE:
                state, g = runner.cma_step(state, sigma, t)
                stderr = np.zeros_like(g)
                sigma, fallback = runner.next_sigma(state.x, sigma, t)
            else:
                if sigma_schedule is not None:
                    sigma = sigma_schedule(t)
                elif smoothed:
                    sigma, fallback = runner.next_sigma(state.x, sigma, t)
                state, g, stderr = runner.step(state, sigma, t)
        except (AgsError, FloatingPointError) as e:
            logger.warning("%s aborted at t=%d: %s", method, t, e)
            raise RunAborted(f"{method} aborted at t={t}: {e}", records, e) from e

        f_x = objective.value(state.x, count=False)
        best = min(best, f_x)
        cert = None
        if certificate is not None and sigma is not None:
            cert = certificate.push(sigma, schedule.eta(t))
        grad_norm = float(np.linalg.norm(g))
        records.append(RunRecord(
            t=t,
            f_x=f_x,
            f_best=best,
            grad_norm_est=grad_norm,
            grad_stderr_norm=float(np.linalg.norm(stderr)),
            sigma_opnorm=sigma.op_norm if sigma is not None else 0.0,
            sigma_min_eig=sigma.min_eig if sigma is not None else 0.0,
            evals_cumulative=objective.eval_count,
            certificate=cert,
            adaptation_fallback=fallback,
        ))
        logger.debug("t=%d f=%.6g |g|=%.3g |sigma|=%s", t, f_x, grad_norm, records[-1].sigma_opnorm)
        if grad_tol is not None and grad_norm < grad_tol:
            logger.info("%s reached gradient tolerance at t=%d", method, t)
            break

    logger.info("finished %s on %s: f=%.6g after %d steps", method, objective.name, records[-1].f_x, len(records))
    return records
