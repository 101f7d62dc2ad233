"""
Invariant verification suite.

Every module's properties are checked numerically against independent
oracles (closed forms, quadrature, trajectories). The fast and full levels run
the same invariants with different sample budgets. The report is plain data so
the CLI can print it as JSON.
"""

import json
import logging
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid
from scipy.stats import linregress

from ags.adaptation import CMA, FIXED, GEOMETRIC, AdaptationStrategy, CmaParams, adapt, clamp_spectrum, cma_covariance
from ags.bounds import (
    GD_CONVEX,
    GD_NONCONVEX,
    SGD,
    CertificateInputs,
    CertificateTracker,
    adam_assumption_check,
    bound_grad_diff,
    bound_value_diff,
    certificate_gd_convex,
    certificate_gd_nonconvex,
    certificate_sgd,
    corollary_grad_bound,
    lemma3_gaps,
    lipschitz_smoothness_bound,
)
from ags.objectives import (
    Objective,
    QuadraticForm,
    benchmark_names,
    make_benchmark,
    make_cosine,
    make_finite_sum,
    make_linear,
    make_rotation,
)
from ags.optimizers import (
    AGS_ADAM,
    OptimizerState,
    Schedule,
    GradientSource,
    ags_adam_step,
    ags_gd_step,
    default_schedule,
    run,
)
from ags.smoothing import (
    FORWARD,
    McConfig,
    analytic_smooth_quadratic,
    compose_smoothing,
    smooth_abs_derivative,
    smooth_cosine_closed_form,
    smooth_grad_mc,
    smooth_grad_quadrature,
    smooth_value_mc,
    smooth_value_quadrature,
    smoothing_kernel,
)
from ags.spd_linalg import SpdMatrix, classify_pair, operator_norm, random_spd, spd_sqrt
from harness.experiment_config import parse_config
from harness.experiment_runner import RECORD_COLUMNS, run_experiment

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20240601


@dataclass(frozen=True)
class Budget:
    """Sample sizes and pass thresholds for one verification level."""

    quadratics: int
    points: int
    mc_samples: int
    rate_repeats: int
    pairs: int
    pair_points: int
    semigroup_pairs: int
    gd_horizon: int
    sgd_steps: int
    adam_steps: int
    cma_samples: int
    spd_samples: int
    sgd_trend_steps: int
    adam_grad_ratio: float


BUDGETS: Dict[str, Budget] = {
    "fast": Budget(10, 3, 20_000, 20, 10, 20, 5, 100, 2_000, 2_000, 10_000, 100, 2_000, 10.0),
    "full": Budget(50, 10, 100_000, 50, 50, 100, 20, 200, 10_000, 10_000, 10_000, 1_000, 5_000, 100.0),
}


@dataclass
class InvariantResult:
    module: str
    name: str
    passed: bool
    measured: Dict


Check = Callable[["VerificationSuite"], Tuple[bool, Dict]]
_REGISTRY: List[Tuple[str, str, Check]] = []


def invariant(module: str, name: str):
    """Register a check under module/name."""
    def register(check: Check) -> Check:
        _REGISTRY.append((module, name, check))
        return check
    return register


def invariant_names() -> List[str]:
    return [name for _, name, _ in _REGISTRY]


class VerificationSuite:
    """
    Runs every registered invariant at one budget level.

    Attributes:
        level: "fast" or "full"
        budget: Sample sizes for the level
        forward_coefficient: Coefficient of the forward-difference estimator
            under test (2 is unbiased)
        seed: Master seed for all checks
    """

    def __init__(self, level: str = "fast", forward_coefficient: float = 2.0, seed: int = DEFAULT_SEED):
        if level not in BUDGETS:
            raise ValueError(f"unknown level '{level}', expected one of {list(BUDGETS)}")
        self.level = level
        self.budget = BUDGETS[level]
        self.forward_coefficient = forward_coefficient
        self.seed = seed

    def rng(self, tag: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, tag])

    def stream(self, tag: int) -> int:
        return int(self.rng(tag).integers(2 ** 63))

    def run(self, only: Optional[Sequence[str]] = None) -> Dict:
        """
        Execute the invariants.

        Args:
            only: Restrict to these invariant names

        Returns:
            {"level", "passed", "results": [{module, name, passed, measured}]}
        """
        results = []
        for module, name, check in _REGISTRY:
            if only is not None and name not in only:
                continue
            try:
                passed, measured = check(self)
            except Exception as e:
                # a crashing check is a failed entry, not a crashed suite
                passed, measured = False, {"error": f"{type(e).__name__}: {e}"}
            logger.info("%s/%s: %s", module, name, "pass" if passed else "FAIL")
            results.append(InvariantResult(module, name, bool(passed), measured))
        return {
            "level": self.level,
            "passed": all(r.passed for r in results),
            "results": [asdict(r) for r in results],
        }


def verify_suite(level: str = "fast", forward_coefficient: float = 2.0) -> Dict:
    return VerificationSuite(level, forward_coefficient).run()


# --- shared fixtures ---

def _random_quadratic(rng: np.random.Generator, dim: int, convex: bool = False) -> QuadraticForm:
    if convex:
        A = random_spd(dim, rng, 0.1, 2.0).matrix
    else:
        M = rng.standard_normal((dim, dim))
        A = (M + M.T) / 2.0
    return QuadraticForm.create(A, rng.standard_normal(dim), float(rng.standard_normal()))


def _cosine_plus_quadratic(a, q: QuadraticForm) -> Objective:
    a = np.asarray(a, dtype=float)

    def value_fn(points):
        return np.cos(points @ a) + q.value(points)

    return Objective(a.size, value_fn, name="cosine+quadratic")


def _smoothed(obj: Objective, S: SpdMatrix) -> Objective:
    """f_Σ as an objective in its own right, evaluated by quadrature."""
    def value_fn(points):
        points = np.asarray(points, dtype=float)
        flat = points.reshape(-1, obj.dim)
        values = np.array([smooth_value_quadrature(obj, S, p) for p in flat])
        return values.reshape(points.shape[:-1])

    return Objective(obj.dim, value_fn, name=f"smoothed {obj.name}")


def smoothing_pairs(rng: np.random.Generator, count: int, dim: int = 2) -> List[Tuple[SpdMatrix, SpdMatrix]]:
    """
    (Σ, T) pairs cycling through isotropic, shared-eigenbasis, dominating
    (T² = Σ² + P with P PSD, not commuting) and unrelated random pairs.
    """
    pairs = []
    for i in range(count):
        family = i % 4
        if family == 0:
            a, b = rng.uniform(0.1, 1.5, 2)
            pairs.append((SpdMatrix.isotropic(a, dim), SpdMatrix.isotropic(b, dim)))
        elif family == 1:
            basis = make_rotation(dim, int(rng.integers(2 ** 32)))
            pairs.append((SpdMatrix.from_eigen(rng.uniform(0.1, 1.5, dim), basis),
                          SpdMatrix.from_eigen(rng.uniform(0.1, 1.5, dim), basis)))
        elif family == 2:
            S = random_spd(dim, rng, 0.1, 1.2)
            extra = rng.standard_normal((dim, dim)) * 0.4
            pairs.append((S, spd_sqrt(S.squared() + extra @ extra.T)))
        else:
            pairs.append((random_spd(dim, rng, 0.1, 1.5), random_spd(dim, rng, 0.1, 1.5)))
    return pairs


def _band_failures(z_scores: List[float], band: float) -> int:
    return int(np.sum(np.asarray(z_scores) > band))


def _z_score(estimate: float, exact: float, stderr: float) -> float:
    if stderr > 0:
        return abs(estimate - exact) / stderr
    return 0.0 if estimate == exact else np.inf


# --- spd_linalg ---

@invariant("spd_linalg", "sqrt_squares_back")
def _sqrt_squares_back(suite: VerificationSuite):
    rng = suite.rng(20)
    worst = 0.0
    for i in range(suite.budget.spd_samples):
        M = random_spd(1 + i % 8, rng, 0.01, 10.0).matrix
        R = spd_sqrt(M).matrix
        worst = max(worst, float(np.max(np.abs(R @ R - M))) / operator_norm(M))
    return worst <= 1e-12, {"max_rel_residual": worst, "matrices": suite.budget.spd_samples}


@invariant("spd_linalg", "norm_triangle_inequality")
def _norm_triangle(suite: VerificationSuite):
    rng = suite.rng(21)
    worst = -np.inf
    for i in range(suite.budget.spd_samples):
        dim = 1 + i % 8
        A, B = rng.standard_normal((2, dim, dim))
        A, B = A + A.T, B + B.T
        excess = operator_norm(A + B) - operator_norm(A) - operator_norm(B)
        worst = max(worst, excess / max(operator_norm(A) + operator_norm(B), 1e-300))
    return worst <= 1e-12, {"max_rel_excess": worst}


@invariant("spd_linalg", "self_pair_flags")
def _self_pair_flags(suite: VerificationSuite):
    rng = suite.rng(22)
    failures = 0
    for i in range(suite.budget.spd_samples):
        S = random_spd(1 + i % 8, rng, 0.01, 10.0)
        pair = classify_pair(S, S)
        failures += not (pair.codiagonalizable and pair.t_dominates and pair.s_dominates)
    return failures == 0, {"failures": failures}


# --- objectives ---

@invariant("objectives", "benchmark_gradients")
def _benchmark_gradients(suite: VerificationSuite):
    rng = suite.rng(23)
    h = 1e-6
    worst = {}
    for name in benchmark_names():
        f = make_benchmark(name, 4, rotation_seed=int(rng.integers(2 ** 32)), x_opt=rng.uniform(-0.5, 0.5, 4))
        gap = 0.0
        for _ in range(suite.budget.points * 3):
            x = f.x_opt + rng.uniform(-1.5, 1.5, 4)
            fd = np.array([(f.value(x + e, count=False) - f.value(x - e, count=False)) / (2.0 * h)
                           for e in h * np.eye(4)])
            grad = f.gradient(x)
            gap = max(gap, float(np.linalg.norm(fd - grad)) / max(1.0, float(np.linalg.norm(grad))))
        worst[name] = gap
    return max(worst.values()) <= 1e-5, {"max_rel_fd_gap": worst}


@invariant("objectives", "rotation_invariant_minimum")
def _rotation_invariant_minimum(suite: VerificationSuite):
    rng = suite.rng(24)
    worst_min = 0.0
    worst_rotated = 0.0
    for name in benchmark_names():
        x_opt = rng.uniform(-1.0, 1.0, 4)
        plain = make_benchmark(name, 4, x_opt=x_opt)
        for _ in range(suite.budget.points):
            seed = int(rng.integers(2 ** 32))
            rotated = make_benchmark(name, 4, rotation_seed=seed, x_opt=x_opt)
            worst_min = max(worst_min, abs(rotated.value(x_opt, count=False)))
            z = rng.uniform(-1.0, 1.0, 4)
            # f_R(x_opt + Rᵀz) is the unrotated formula at z
            moved = rotated.value(x_opt + make_rotation(4, seed).T @ z, count=False)
            expected = plain.value(x_opt + z, count=False)
            worst_rotated = max(worst_rotated, abs(moved - expected) / max(1.0, abs(expected)))
    passed = worst_min <= 1e-12 and worst_rotated <= 1e-9
    return passed, {"max_value_at_minimizer": worst_min, "max_rotated_rel_gap": worst_rotated}


@invariant("objectives", "declared_smoothness")
def _declared_smoothness(suite: VerificationSuite):
    rng = suite.rng(25)
    objectives = [make_benchmark("sphere", 4, rotation_seed=1), make_benchmark("ellipsoidal", 4, rotation_seed=2),
                  make_cosine(rng.uniform(-1.5, 1.5, 4))]
    worst_ratio = 0.0
    worst_declared = 0.0
    for f in objectives:
        if f.quadratic is not None:
            top = float(np.max(np.linalg.eigvalsh(f.quadratic.A.entries)))
            worst_declared = max(worst_declared, abs(2.0 * top - f.smoothness_L) / f.smoothness_L)
        for _ in range(suite.budget.points * 10):
            x, y = rng.uniform(-2.0, 2.0, (2, 4))
            ratio = np.linalg.norm(f.gradient(x) - f.gradient(y)) / (f.smoothness_L * np.linalg.norm(x - y))
            worst_ratio = max(worst_ratio, float(ratio))
    declared = {f.name: f.smoothness_L for f in objectives}
    passed = worst_ratio <= 1.0 + 1e-9 and worst_declared <= 1e-9
    return passed, {"max_ratio_to_L": worst_ratio, "max_rel_gap_to_2_lambda_max": worst_declared,
                    "declared": declared}


# --- smoothing ---

@invariant("smoothing", "oracle_agreement")
def _oracle_agreement(suite: VerificationSuite):
    b = suite.budget
    rng = suite.rng(1)
    seed = suite.stream(101)
    worst_quadrature = 0.0
    z_scores = []
    for i in range(b.quadratics):
        dim = 1 + i % 3
        q = _random_quadratic(rng, dim)
        obj = q.to_objective()
        S = random_spd(dim, rng, 0.2, 1.5)
        for _ in range(b.points):
            x = rng.uniform(-2.0, 2.0, dim)
            exact, _ = analytic_smooth_quadratic(q, S, x)
            quad = smooth_value_quadrature(obj, S, x, order=8)
            worst_quadrature = max(worst_quadrature, abs(quad - exact) / max(1.0, abs(exact)))
            mean, stderr = smooth_value_mc(obj, S, x, McConfig(b.mc_samples, seed=seed, counter=len(z_scores)))
            z_scores.append(_z_score(mean, exact, stderr))
    allowed = max(1, int(0.02 * len(z_scores)))
    outside3 = _band_failures(z_scores, 3.0)
    outside5 = _band_failures(z_scores, 5.0)
    passed = worst_quadrature <= 1e-8 and outside3 <= allowed and outside5 == 0
    return passed, {"worst_quadrature_rel_error": worst_quadrature, "mc_outside_3se": outside3,
                    "mc_outside_5se": outside5, "mc_points": len(z_scores)}


@invariant("smoothing", "estimator_unbiasedness")
def _estimator_unbiasedness(suite: VerificationSuite):
    b = suite.budget
    rng = suite.rng(2)
    seed = suite.stream(102)
    a = np.array([1.0, 2.0])
    S = SpdMatrix.diagonal([1.0, 3.0])
    linear = make_linear(a)
    x = rng.uniform(-1.0, 1.0, 2)
    sizes = [100, 1_000, 10_000]
    rms = []
    for j, n in enumerate(sizes):
        errors = [
            np.sum((smooth_grad_mc(linear, S, x, McConfig(n, seed=seed, counter=j * b.rate_repeats + r)).mean - a) ** 2)
            for r in range(b.rate_repeats)
        ]
        rms.append(float(np.sqrt(np.mean(errors))))
    slope = float(linregress(np.log(sizes), np.log(rms)).slope)

    sphere = make_benchmark("sphere", 2)
    identity = SpdMatrix.isotropic(1.0, 2)
    point = np.array([1.0, 0.0])
    exact = np.array([2.0, 0.0])
    central = smooth_grad_mc(sphere, identity, point, McConfig(b.mc_samples, seed=seed + 1))
    forward = smooth_grad_mc(sphere, identity, point, McConfig(
        b.mc_samples, variant=FORWARD, seed=seed + 2, forward_coefficient=suite.forward_coefficient))
    combined = np.sqrt(central.stderr ** 2 + forward.stderr ** 2)
    agree = bool(np.all(np.abs(central.mean - forward.mean) <= 3.0 * combined))
    unbiased = bool(np.all(np.abs(forward.mean - exact) <= 4.0 * forward.stderr))
    passed = -0.65 <= slope <= -0.35 and agree and unbiased
    return passed, {"loglog_slope": slope, "rms_errors": rms, "forward_mean": forward.mean.tolist(),
                    "central_mean": central.mean.tolist(), "forward_coefficient": suite.forward_coefficient}


@invariant("smoothing", "smoothness_preservation")
def _smoothness_preservation(suite: VerificationSuite):
    rng = suite.rng(3)
    a = np.array([1.3, -0.8])
    cosine = make_cosine(a)
    worst = 0.0
    for _ in range(suite.budget.points * 5):
        S = random_spd(2, rng, 0.2, 1.5)
        x, y = rng.uniform(-3.0, 3.0, (2, 2))
        diff = np.linalg.norm(smooth_grad_quadrature(cosine, S, x) - smooth_grad_quadrature(cosine, S, y))
        worst = max(worst, diff / (cosine.smoothness_L * np.linalg.norm(x - y)))
    return worst <= 1.0 + 1e-9, {"worst_ratio_to_L": worst}


@invariant("smoothing", "convexity_and_domination")
def _convexity_domination(suite: VerificationSuite):
    rng = suite.rng(4)
    worst_domination = np.inf
    worst_midpoint = -np.inf
    for i in range(suite.budget.quadratics):
        dim = 1 + i % 3
        obj = _random_quadratic(rng, dim, convex=True).to_objective()
        S = random_spd(dim, rng, 0.2, 1.5)
        for _ in range(suite.budget.points):
            x, y = rng.uniform(-2.0, 2.0, (2, dim))
            fx = smooth_value_quadrature(obj, S, x, order=8)
            fy = smooth_value_quadrature(obj, S, y, order=8)
            fm = smooth_value_quadrature(obj, S, (x + y) / 2.0, order=8)
            worst_domination = min(worst_domination, fx - obj.value(x, count=False))
            worst_midpoint = max(worst_midpoint, fm - (fx + fy) / 2.0)
    passed = worst_domination >= 0.0 and worst_midpoint <= 1e-9
    return passed, {"min_smoothed_minus_f": worst_domination, "max_midpoint_excess": worst_midpoint}


@invariant("smoothing", "strict_positivity")
def _strict_positivity(suite: VerificationSuite):
    shifted = make_cosine([2.0], offset=1.0)
    points = np.linspace(-3.0, 3.0, suite.budget.points * 10 + 1)
    lowest = np.inf
    for sigma in (0.5, 1.0, 2.0):
        S = SpdMatrix.isotropic(sigma, 1)
        for x in np.append(points, np.pi / 2.0):
            lowest = min(lowest, smooth_value_quadrature(shifted, S, [x]))
    return lowest > 0.0, {"min_smoothed_value": lowest}


@invariant("smoothing", "semigroup")
def _semigroup(suite: VerificationSuite):
    rng = suite.rng(5)
    a = np.array([1.0, -0.7])
    q = QuadraticForm.create([[0.5, 0.1], [0.1, 0.3]], [0.2, -0.1], 0.0)
    f = _cosine_plus_quadratic(a, q)
    worst_nested = 0.0
    worst_closed = 0.0
    worst_square = 0.0
    for _ in range(suite.budget.semigroup_pairs):
        S = random_spd(2, rng, 0.2, 1.0)
        T = random_spd(2, rng, 0.2, 1.0)
        H = compose_smoothing(S, T)
        worst_square = max(worst_square, float(np.max(np.abs(H.squared() - S.squared() - T.squared()))))
        inner = _smoothed(f, S)
        x = rng.uniform(-1.0, 1.0, 2)
        nested = smooth_value_quadrature(inner, T, x)
        direct = smooth_value_quadrature(f, H, x)
        worst_nested = max(worst_nested, abs(nested - direct))
        closed = smooth_cosine_closed_form(a, T, x) * np.exp(-np.sum((S.matrix @ a) ** 2) / 4.0)
        worst_closed = max(worst_closed, abs(closed - smooth_cosine_closed_form(a, H, x)))
    passed = worst_nested < 1e-8 and worst_closed < 1e-12 and worst_square < 1e-12
    return passed, {"max_nested_gap": worst_nested, "max_closed_form_gap": worst_closed,
                    "max_square_residual": worst_square}


@invariant("smoothing", "gradient_identity")
def _gradient_identity(suite: VerificationSuite):
    rng = suite.rng(6)
    h = 1e-5
    worst = 0.0
    for i in range(suite.budget.points * 2):
        dim = 1 + i % 2
        a = rng.uniform(0.5, 1.5, dim)
        f = _cosine_plus_quadratic(a, _random_quadratic(rng, dim))
        S = random_spd(dim, rng, 0.2, 1.0)
        x = rng.uniform(-1.0, 1.0, dim)
        grad = smooth_grad_quadrature(f, S, x)
        for j in range(dim):
            e = np.zeros(dim)
            e[j] = h
            fd = (smooth_value_quadrature(f, S, x + e) - smooth_value_quadrature(f, S, x - e)) / (2.0 * h)
            worst = max(worst, abs(fd - grad[j]))
    return worst < 1e-6, {"max_fd_gap": worst}


@invariant("smoothing", "kernel_forms")
def _kernel_forms(suite: VerificationSuite):
    rng = suite.rng(7)
    worst_mass = 0.0
    worst_form = 0.0
    cosine = make_cosine([1.7])
    for _ in range(suite.budget.points):
        sigma = float(rng.uniform(0.3, 2.0))
        S = SpdMatrix.isotropic(sigma, 1)
        grid = np.linspace(-12.0 * sigma, 12.0 * sigma, 40_001)
        kernel = smoothing_kernel(S, grid[:, None])
        worst_mass = max(worst_mass, abs(trapezoid(kernel, grid) - 1.0))
        x = float(rng.uniform(-2.0, 2.0))
        convolution = trapezoid(np.cos(1.7 * (x - grid)) * kernel, grid)
        worst_form = max(worst_form, abs(convolution - smooth_value_quadrature(cosine, S, [x])))
    return worst_mass < 1e-6 and worst_form < 1e-6, {"max_mass_error": worst_mass, "max_form_gap": worst_form}


@invariant("smoothing", "lipschitz_only_smoothness")
def _lipschitz_only(suite: VerificationSuite):
    seed = suite.stream(108)
    absolute = Objective.from_scalar(lambda x: abs(float(x[0])), 1, name="abs")
    worst_ratio = 0.0
    z_scores = []
    grid = np.linspace(-5.0, 5.0, 20_001)
    for sigma in (0.5, 1.0, 2.0):
        S = SpdMatrix.isotropic(sigma, 1)
        slopes = np.abs(np.diff(smooth_abs_derivative(grid, sigma)) / np.diff(grid))
        worst_ratio = max(worst_ratio, float(slopes.max()) / lipschitz_smoothness_bound(1.0, 1, S))
        for x in (-1.0, 0.3, 2.0):
            est = smooth_grad_mc(absolute, S, [x], McConfig(4_000, seed=seed, counter=len(z_scores)))
            z_scores.append(_z_score(float(est.mean[0]), float(smooth_abs_derivative(x, sigma)), float(est.stderr[0])))
    passed = worst_ratio <= 1.0 and _band_failures(z_scores, 4.0) == 0
    return passed, {"max_slope_over_bound": worst_ratio, "max_mc_z": float(max(z_scores))}


# --- bounds ---

@invariant("bounds", "gap_soundness")
def _gap_soundness(suite: VerificationSuite):
    rng = suite.rng(8)
    worst_value = -np.inf
    worst_grad = -np.inf
    worst_corollary = -np.inf
    for i in range(suite.budget.quadratics):
        dim = 1 + i % 3
        S = random_spd(dim, rng, 0.1, 1.5)
        for f in (make_benchmark("sphere", dim), make_cosine(rng.uniform(-1.5, 1.5, dim))):
            gaps = lemma3_gaps(f.smoothness_L, dim, S)
            for _ in range(suite.budget.points):
                x = rng.uniform(-2.0, 2.0, dim)
                smoothed_grad = smooth_grad_quadrature(f, S, x)
                grad = f.gradient(x)
                worst_value = max(worst_value, abs(smooth_value_quadrature(f, S, x) - f.value(x, count=False)) - gaps.value_gap)
                worst_grad = max(worst_grad, np.linalg.norm(smoothed_grad - grad) - gaps.grad_gap)
                bound = corollary_grad_bound(f.smoothness_L, dim, S, float(smoothed_grad @ smoothed_grad))
                worst_corollary = max(worst_corollary, float(grad @ grad) - bound)
    passed = worst_value <= 1e-12 and worst_grad <= 1e-12 and worst_corollary <= 1e-12
    return passed, {"max_value_excess": worst_value, "max_grad_excess": worst_grad,
                    "max_corollary_excess": worst_corollary}


@invariant("bounds", "value_diff_soundness")
def _value_diff_soundness(suite: VerificationSuite):
    rng = suite.rng(9)
    worst = -np.inf
    asymmetry = 0.0
    sphere = make_benchmark("sphere", 2)
    cosine = make_cosine([1.2, -0.9])
    for S, T in smoothing_pairs(rng, suite.budget.pairs):
        for f in (sphere, cosine):
            B = bound_value_diff(f.smoothness_L, 2, S, T)
            asymmetry = max(asymmetry, abs(B - bound_value_diff(f.smoothness_L, 2, T, S)) / max(B, 1e-300),
                            abs(bound_grad_diff(f.smoothness_L, 2, S, T) - bound_grad_diff(f.smoothness_L, 2, T, S)))
            for x in rng.uniform(-2.0, 2.0, (suite.budget.pair_points, 2)):
                measured = abs(smooth_value_quadrature(f, S, x) - smooth_value_quadrature(f, T, x))
                worst = max(worst, measured - B)
    return worst <= 1e-12 and asymmetry <= 1e-12, {"max_excess": worst, "max_asymmetry": asymmetry}


@invariant("bounds", "gd_certificate_soundness")
def _gd_certificate(suite: VerificationSuite):
    horizon = suite.budget.gd_horizon
    rng = suite.rng(10)
    sphere = make_benchmark("sphere", 10, rotation_seed=3)
    x0 = rng.uniform(-2.0, 2.0, 10)
    tracker = CertificateTracker(GD_CONVEX, 2.0, 10, x0_dist=float(np.linalg.norm(x0)))
    strategy = AdaptationStrategy(GEOMETRIC, SpdMatrix.isotropic(1.0, 10), gamma=0.9, floor=1e-12)
    records = run("ags_gd", sphere, x0, horizon, schedule=Schedule.constant(0.25), adaptation=strategy,
                  grad_source=GradientSource.analytic(), certificate=tracker)
    excess = max(r.f_x - r.certificate for r in records)
    late = [r.certificate for r in records if r.t >= 50]
    monotone = bool(np.all(np.diff(late) <= 0.0))
    batch = certificate_gd_convex(CertificateInputs(
        2.0, 10, [SpdMatrix.isotropic(0.9 ** t, 10) for t in range(1, horizon + 1)], x0_dist=float(np.linalg.norm(x0))))
    agreement = abs(batch - records[-1].certificate) / batch
    passed = excess <= 0.0 and monotone and agreement < 1e-9
    return passed, {"max_gap_minus_certificate": excess, "final_certificate": records[-1].certificate,
                    "monotone_after_50": monotone, "batch_rel_diff": agreement}


@invariant("bounds", "certificate_tracker_agreement")
def _tracker_agreement(suite: VerificationSuite):
    rng = suite.rng(11)
    sigmas = [random_spd(2, rng, 0.1, 1.5) for _ in range(30)]
    etas = rng.uniform(0.01, 0.2, 30)
    worst = 0.0
    for kind, batch_fn in ((GD_CONVEX, certificate_gd_convex), (GD_NONCONVEX, certificate_gd_nonconvex),
                           (SGD, certificate_sgd)):
        tracker = CertificateTracker(kind, 1.5, 2, x0_dist=1.3, f0_gap=2.0, step=0.1, lambda_sq_bound=0.7)
        for T in range(1, len(sigmas) + 1):
            online = tracker.push(sigmas[T - 1], float(etas[T - 1]))
            if T % 10 == 0:
                inputs = CertificateInputs(1.5, 2, sigmas[:T], x0_dist=1.3, f0_gap=2.0, step=0.1,
                                           etas=etas[:T], lambda_sq_bound=0.7)
                batch = batch_fn(inputs)
                worst = max(worst, abs(online - batch) / batch)
    return worst < 1e-9, {"max_rel_diff": worst}


def _noisy_sphere_run(schedule: Schedule, steps: int, dim: int, seed: int):
    sphere = make_benchmark("sphere", dim)
    finite_sum = make_finite_sum(sphere, 8, 1.0, seed)
    strategy = AdaptationStrategy(FIXED, SpdMatrix.isotropic(0.1, dim))
    x0 = np.full(dim, 1.5)
    records = run("ags_sgd", sphere, x0, steps, schedule=schedule, adaptation=strategy,
                  grad_source=GradientSource.analytic(), seed=seed, finite_sum=finite_sum)
    # ‖∇f‖² = 4f on the centred sphere
    grad_sq = np.array([4.0 * r.f_x for r in records])
    return sphere, finite_sum, x0, grad_sq


@invariant("bounds", "sgd_noisy_ball")
def _sgd_noisy_ball(suite: VerificationSuite):
    steps = suite.budget.sgd_steps
    dim = 4
    seed = suite.stream(112)
    sphere, finite_sum, x0, constant = _noisy_sphere_run(Schedule.constant(0.1), steps, dim, seed)
    _, _, _, decreasing = _noisy_sphere_run(Schedule(eta0=0.1, eta_exponent=0.6), steps, dim, seed)
    tail = slice(int(0.8 * steps), None)
    plateau_constant = float(np.median(constant[tail]))
    plateau_decreasing = float(np.min(decreasing[tail]))
    sigma = SpdMatrix.isotropic(0.1, dim)
    lambda_sq = float(np.mean(np.sum(finite_sum.shifts ** 2, axis=1)))
    certificate = certificate_sgd(CertificateInputs(
        2.0, dim, [sigma] * steps, f0_gap=sphere.value(x0, count=False), etas=np.full(steps, 0.1),
        lambda_sq_bound=lambda_sq, sigma_initial=sigma))
    passed = float(np.min(constant[tail])) <= certificate and plateau_decreasing <= 0.1 * plateau_constant
    return passed, {"constant_plateau": plateau_constant, "decreasing_plateau": plateau_decreasing,
                    "certificate": certificate}


@invariant("bounds", "adam_assumptions")
def _adam_assumptions(suite: VerificationSuite):
    sigmas = [0.1 * 0.995 ** t for t in range(1, 2_001)]
    default = adam_assumption_check(0.6, 0.5, sigmas, L=1.0, d=4, eta0=0.1)
    summable = adam_assumption_check(1.5, 0.5, sigmas, d=4)
    square_divergent = adam_assumption_check(0.4, 0.7, sigmas, d=4)
    passed = (default.passed
              and not summable.conditions["sum_eta_diverges"].passed
              and not square_divergent.conditions["sum_eta_sq_converges"].passed)
    return passed, {"default": default.to_dict()}


# --- optimizers ---

@invariant("optimizers", "adam_trend")
def _adam_trend(suite: VerificationSuite):
    b = suite.budget
    rosenbrock = make_benchmark("rosenbrock", 4, rotation_seed=7)
    # y = (0, 1, 0, 1) in the unshifted Rosenbrock variable sits on the steep ridge
    x0 = make_rotation(4, 7).T @ np.array([-1.0, 0.0, -1.0, 0.0])
    schedule = default_schedule(AGS_ADAM)
    strategy = AdaptationStrategy(GEOMETRIC, SpdMatrix.isotropic(0.1, 4), gamma=0.995)
    seed = suite.stream(113)
    state = OptimizerState.initial(x0)
    sigma = strategy.initial()
    grad_norms, values, sigma_norms = [], [], []
    for t in range(1, b.adam_steps + 1):
        sigma = adapt(strategy, sigma)
        estimate = smooth_grad_mc(rosenbrock, sigma, state.x, McConfig(16, seed=seed, counter=t))
        state = ags_adam_step(state, estimate.mean, schedule, t)
        grad_norms.append(float(np.linalg.norm(rosenbrock.gradient(state.x))))
        values.append(rosenbrock.value(state.x, count=False))
        sigma_norms.append(sigma.op_norm)
    running = np.minimum.accumulate(grad_norms)
    ratio = float(running[9] / max(running[-1], 1e-300))
    f0 = rosenbrock.value(x0, count=False)
    report = adam_assumption_check(schedule.eta_exponent, schedule.theta_exponent, sigma_norms, d=4,
                                   eta0=schedule.eta0)
    passed = (ratio >= b.adam_grad_ratio and min(values) <= 0.1 * f0
              and sigma_norms[-1] <= 1e-3 * 0.1 and report.passed)
    return passed, {"min_grad_norm_t10": float(running[9]), "min_grad_norm_final": float(running[-1]),
                    "ratio": ratio, "required_ratio": b.adam_grad_ratio, "f0": f0, "best_f": min(values),
                    "final_sigma": sigma_norms[-1], "assumptions": report.to_dict()}


@invariant("optimizers", "sgd_gradient_trend")
def _sgd_gradient_trend(suite: VerificationSuite):
    steps = suite.budget.sgd_trend_steps
    dim = 4
    sphere = make_benchmark("sphere", dim)
    finite_sum = make_finite_sum(sphere, 8, 1.0, suite.stream(114))
    schedule = Schedule(eta0=0.5, eta_exponent=0.5)
    x0 = np.full(dim, 1.5)
    records = run("ags_sgd", sphere, x0, steps, schedule=schedule,
                  adaptation=AdaptationStrategy(FIXED, SpdMatrix.isotropic(1.0, dim)),
                  grad_source=GradientSource.analytic(), seed=suite.stream(115), finite_sum=finite_sum,
                  sigma_schedule=lambda t: SpdMatrix.isotropic(1.0 / t, dim))
    values = np.array([sphere.value(x0, count=False)] + [r.f_x for r in records])
    running = np.minimum.accumulate(4.0 * values[1:])
    # E_k‖2x + ξ_k‖² = 4f(x) + mean‖ξ_k‖² along the trajectory
    lambda_sq = 4.0 * float(values.max()) + float(np.mean(np.sum(finite_sum.shifts ** 2, axis=1)))
    certificate = certificate_sgd(CertificateInputs(
        2.0, dim, [SpdMatrix.isotropic(1.0 / t, dim) for t in range(1, steps + 1)], f0_gap=float(values[0]),
        etas=[schedule.eta(t) for t in range(1, steps + 1)], lambda_sq_bound=lambda_sq,
        sigma_initial=SpdMatrix.isotropic(1.0, dim)))
    passed = float(running[-1]) <= certificate and running[-1] < running[9]
    return passed, {"min_grad_sq_t10": float(running[9]), "min_grad_sq_final": float(running[-1]),
                    "certificate": certificate}


@invariant("optimizers", "descent_on_convex_quadratic")
def _descent(suite: VerificationSuite):
    rng = suite.rng(14)
    q = _random_quadratic(rng, 3, convex=True)
    lam = 1.0 / (2.0 * float(np.max(np.linalg.eigvalsh(q.A.entries))))
    state = OptimizerState.initial(rng.uniform(-2.0, 2.0, 3))
    sigma = SpdMatrix.isotropic(1.0, 3)
    worst = -np.inf
    for _ in range(50):
        sigma = sigma.scaled(0.9)
        before, grad = analytic_smooth_quadratic(q, sigma, state.x)
        state = ags_gd_step(state, grad, lam)
        after, _ = analytic_smooth_quadratic(q, sigma, state.x)
        worst = max(worst, after - before - 1e-12 * max(1.0, abs(before)))
    return worst <= 0.0, {"max_increase": worst}


@invariant("optimizers", "adam_moment_bound")
def _adam_moments(suite: VerificationSuite):
    rng = suite.rng(15)
    state = OptimizerState.initial(np.zeros(3))
    schedule = Schedule(eta0=0.05)
    max_norm = 0.0
    max_square = 0.0
    worst_m = -np.inf
    worst_v = -np.inf
    for _ in range(200):
        g = rng.standard_normal(3) * rng.uniform(0.1, 3.0)
        max_norm = max(max_norm, float(np.linalg.norm(g)))
        max_square = max(max_square, float(np.max(g ** 2)))
        state = ags_adam_step(state, g, schedule)
        worst_m = max(worst_m, float(np.linalg.norm(state.m)) - max_norm * (1.0 + 1e-12))
        worst_v = max(worst_v, float(np.max(state.v)) - max_square * (1.0 + 1e-12))
    passed = worst_m <= 0.0 and worst_v <= 0.0 and bool(np.all(state.v >= 0.0))
    return passed, {"max_m_excess": worst_m, "max_v_excess": worst_v}


@invariant("optimizers", "baseline_reduction")
def _baseline_reduction(suite: VerificationSuite):
    rng = suite.rng(16)
    sphere = make_benchmark("sphere", 5, rotation_seed=11)
    x0 = rng.uniform(-2.0, 2.0, 5)
    fixed = AdaptationStrategy(FIXED, SpdMatrix.isotropic(0.3, 5))
    worst = 0.0
    for smoothed, plain, schedule in (("ags_gd", "gd", Schedule.constant(0.25)), ("ags_adam", "adam", Schedule())):
        a = run(smoothed, sphere, x0, 50, schedule=schedule, adaptation=fixed, grad_source=GradientSource.analytic())
        b = run(plain, sphere, x0, 50, schedule=schedule)
        worst = max(worst, max(abs(r.f_x - s.f_x) / max(abs(s.f_x), 1e-12) for r, s in zip(a, b)))
    return worst < 1e-9, {"max_rel_value_gap": worst}


@invariant("optimizers", "finite_sum_cancellation")
def _finite_sum_cancellation(suite: VerificationSuite):
    rng = suite.rng(17)
    sphere = make_benchmark("sphere", 3, rotation_seed=5)
    finite_sum = make_finite_sum(sphere, 8, 2.0, suite.stream(117))
    S = random_spd(3, rng, 0.2, 1.0)
    x = rng.uniform(-2.0, 2.0, 3)
    grads = [analytic_smooth_quadratic(finite_sum.component(k).quadratic, S, x)[1] for k in range(8)]
    full = analytic_smooth_quadratic(sphere.quadratic, S, x)[1]
    gap = float(np.max(np.abs(np.mean(grads, axis=0) - full)))
    return gap < 1e-10, {"max_gap": gap}


@invariant("optimizers", "determinism")
def _determinism(suite: VerificationSuite):
    rosenbrock = make_benchmark("rosenbrock", 2, rotation_seed=2)
    strategy = AdaptationStrategy(CMA, SpdMatrix.isotropic(0.5, 2))
    source = GradientSource.monte_carlo(McConfig(32))
    first = run("ags_gd", rosenbrock, [0.5, -0.5], 20, schedule=Schedule.constant(1e-3),
                adaptation=strategy, grad_source=source, seed=99)
    rosenbrock = make_benchmark("rosenbrock", 2, rotation_seed=2)
    second = run("ags_gd", rosenbrock, [0.5, -0.5], 20, schedule=Schedule.constant(1e-3),
                 adaptation=strategy, grad_source=source, seed=99)
    return first == second, {"records": len(first)}


# --- adaptation ---

@invariant("adaptation", "spectrum_bounds")
def _spectrum_bounds(suite: VerificationSuite):
    rng = suite.rng(18)
    strategy = AdaptationStrategy(CMA, SpdMatrix.isotropic(1.0, 3), floor=0.05, cap=2.0)
    sigma = strategy.initial()
    worst_asymmetry = 0.0
    inside = True
    for _ in range(50):
        directions = rng.standard_normal((20, 3)) * np.sqrt(0.5)
        fitness = rng.standard_normal(20) * 10.0
        params = strategy.params_for(20)
        covariance = cma_covariance(sigma, directions, fitness, params)
        worst_asymmetry = max(worst_asymmetry, float(np.max(np.abs(covariance - covariance.T))))
        sigma = adapt(strategy, sigma, directions, fitness)
        inside = inside and sigma.min_eig >= 0.05 - 1e-15 and sigma.op_norm <= 2.0 + 1e-15
    flat = np.zeros(20)
    repeat = [adapt(strategy, sigma, directions, flat).matrix for _ in range(2)]
    tie_break = bool(np.array_equal(repeat[0], repeat[1]))
    pinned = clamp_spectrum(random_spd(3, rng), 0.7, 0.7)
    pinned_gap = float(np.max(np.abs(pinned.matrix - 0.7 * np.eye(3))))
    passed = inside and worst_asymmetry <= 1e-12 and tie_break and pinned_gap <= 1e-12
    return passed, {"max_asymmetry": worst_asymmetry, "tie_break_deterministic": tie_break,
                    "pinned_gap": pinned_gap}


@invariant("adaptation", "geometric_decay")
def _geometric_decay(suite: VerificationSuite):
    strategy = AdaptationStrategy(GEOMETRIC, SpdMatrix.diagonal([2.0, 0.5, 1.0]), gamma=0.8, floor=1e-12)
    sigma = strategy.sigma0
    worst = 0.0
    for t in range(1, 101):
        sigma = adapt(strategy, sigma)
        worst = max(worst, abs(sigma.op_norm - 0.8 ** t * 2.0) / (0.8 ** t * 2.0))
    return worst <= 1e-12, {"max_rel_error": worst}


@invariant("adaptation", "cma_second_moment")
def _cma_second_moment(suite: VerificationSuite):
    rng = suite.rng(19)
    n = suite.budget.cma_samples
    sigma = random_spd(3, rng, 0.5, 1.5)
    params = CmaParams.equal(n, c_mu=0.3)
    directions = rng.standard_normal((n, 3)) * np.sqrt(0.5)
    covariance = cma_covariance(sigma, directions, np.zeros(n), params)
    target = (1.0 - 0.3 / 2.0) * sigma.squared()
    gap = float(np.linalg.norm(covariance - target, 2) / np.linalg.norm(target, 2))
    return gap <= 0.05, {"rel_gap": gap}


# --- harness ---

@invariant("harness", "record_invariants")
def _record_invariants(suite: VerificationSuite):
    ok = True
    for method, kind in (("cma", CMA), ("ags_sgd", GEOMETRIC)):
        sphere = make_benchmark("sphere", 3, rotation_seed=4)
        strategy = AdaptationStrategy(kind, SpdMatrix.isotropic(0.5, 3))
        records = run(method, sphere, [1.0, -1.0, 0.5], 40, adaptation=strategy,
                      grad_source=GradientSource.monte_carlo(McConfig(16)),
                      finite_sum=make_finite_sum(sphere, 4, 0.5, 3), seed=5)
        ts = [r.t for r in records]
        running = np.minimum.accumulate([r.f_x for r in records])
        evals = [r.evals_cumulative for r in records]
        ok = (ok and ts == list(range(1, len(records) + 1))
              and np.array_equal(running, [r.f_best for r in records])
              and bool(np.all(np.diff(evals) >= 0)))

    horizon = 30
    cfg = parse_config(json.dumps({
        "function": {"name": "rosenbrock", "dim": 3, "rotation_seed": 4},
        "optimizer": {"method": "ags_adam", "T": horizon},
        "smoothing": {"sigma0": 0.2, "gradient": "mc", "mc_samples": 8},
        "seed": suite.stream(120),
    }))
    with tempfile.TemporaryDirectory() as out_dir:
        summary = run_experiment(cfg, out_dir)
        frame = pd.read_csv(Path(out_dir) / "records.csv")
    rows_match = len(frame) == horizon and list(frame.columns) == RECORD_COLUMNS
    config_round_trips = parse_config(json.dumps(summary["config"])) == cfg
    passed = ok and rows_match and config_round_trips
    return passed, {"trajectory_fields": ok, "csv_rows": len(frame), "config_round_trips": config_round_trips}
