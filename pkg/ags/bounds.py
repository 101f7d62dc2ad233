"""
Gap bounds and convergence certificates for smoothed optimization.

Everything here is arithmetic on operator norms and spectra of smoothing
matrices: how far f_Σ sits from f, how far f_Σ sits from f_T, and the
right-hand sides of the GD, SGD and Adam convergence results evaluated on a
concrete smoothing sequence.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from ags.exceptions import BadStep, EmptySchedule
from ags.spd_linalg import SpdMatrix, check_same_dim, classify_pair, sym_eigen

logger = logging.getLogger(__name__)

# relative gap below which eigenvalues of Σ count as repeated
_BLOCK_TOL = 1e-10


@dataclass(frozen=True)
class GapReport:
    """
    Bounds on the distance between f and f_Σ.

    Attributes:
        value_gap: Bound on |f_Σ(x) − f(x)|
        grad_gap: Bound on ‖∇f_Σ(x) − ∇f(x)‖
    """

    value_gap: float
    grad_gap: float


def _grad_scale(d: int) -> float:
    return ((3.0 + d) / 2.0) ** 1.5


def _spread(S: SpdMatrix) -> float:
    # ‖Σ‖²‖Σ⁻¹‖, which is σ for Σ = σI
    return S.op_norm ** 2 * S.inv_op_norm


def lemma3_gaps(L: float, d: int, S: SpdMatrix) -> GapReport:
    """
    Distance between an L-smooth f and its smoothing.

    Args:
        L: Smoothness constant of f
        d: Dimension
        S: Smoothing matrix Σ

    Returns:
        GapReport with value_gap = Ld‖Σ‖²/4 and
        grad_gap = L‖Σ‖²‖Σ⁻¹‖((3+d)/2)^{3/2}
    """
    return GapReport(
        value_gap=L * d * S.op_norm ** 2 / 4.0,
        grad_gap=L * _spread(S) * _grad_scale(d),
    )


def corollary_grad_bound(L: float, d: int, S: SpdMatrix, smoothed_grad_sq: float) -> float:
    """Upper bound on ‖∇f(x)‖² from ‖∇f_Σ(x)‖²."""
    if smoothed_grad_sq < 0:
        raise ValueError("smoothed_grad_sq must be nonnegative")
    return 2.0 * smoothed_grad_sq + L ** 2 * _spread(S) ** 2 * (3.0 + d) ** 3 / 4.0


def lipschitz_smoothness_bound(M: float, d: int, S: SpdMatrix) -> float:
    """Smoothness constant M√(2d)‖Σ⁻¹‖ of f_Σ when f is only M-Lipschitz."""
    return M * np.sqrt(2.0 * d) * S.inv_op_norm


def _eigen_blocks(eigenvalues: np.ndarray) -> List[np.ndarray]:
    """Index groups of (numerically) repeated eigenvalues, eigenvalues sorted descending."""
    tol = _BLOCK_TOL * max(float(np.max(np.abs(eigenvalues))), 1.0)
    blocks, start = [], 0
    for i in range(1, eigenvalues.size + 1):
        if i == eigenvalues.size or eigenvalues[start] - eigenvalues[i] > tol:
            blocks.append(np.arange(start, i))
            start = i
    return blocks


def _paired_square_spectra(S: SpdMatrix, T: SpdMatrix):
    """
    Eigenvalues of Σ² and T² matched through a shared eigenbasis.

    The basis is Σ's eigenvectors, rotated inside each repeated eigenvalue of
    Σ so that T² is diagonal there as well.
    """
    basis = np.array(S.eigenvectors, dtype=float)
    T_sq = T.squared()
    for block in _eigen_blocks(np.asarray(S.eigenvalues)):
        if block.size > 1:
            columns = basis[:, block]
            _, rotation = np.linalg.eigh(columns.T @ T_sq @ columns)
            basis[:, block] = columns @ rotation
    sigma_sq = np.asarray(S.eigenvalues, dtype=float) ** 2
    tau_sq = np.einsum("ij,jk,ki->i", basis.T, T_sq, basis)
    return sigma_sq, tau_sq


def _dominance_bound(L: float, d: int, S: SpdMatrix, T: SpdMatrix) -> float:
    eigenvalues, _ = sym_eigen(T.squared() - S.squared())
    return L * d * float(np.max(np.abs(eigenvalues))) / 4.0


def _codiagonal_bound(L: float, d: int, S: SpdMatrix, T: SpdMatrix) -> float:
    # value gaps of smoothing from the shared floor D = min(Σ², T²) up to each of
    # Σ² and T²; the excess matrices have squared norms `above` and `below`
    sigma_sq, tau_sq = _paired_square_spectra(S, T)
    above = max(0.0, float(np.max(sigma_sq - tau_sq)))
    below = max(0.0, float(np.max(tau_sq - sigma_sq)))
    return L * d * (above + below) / 4.0


def _general_bound(L: float, d: int, S: SpdMatrix, T: SpdMatrix) -> float:
    floor = min(S.min_eig, T.min_eig) ** 2
    return L * d * (S.op_norm ** 2 + T.op_norm ** 2 - 2.0 * floor) / 4.0


def bound_value_diff(L: float, d: int, S: Optional[SpdMatrix], T: Optional[SpdMatrix]) -> float:
    """
    Bound B(Σ, T) on |f_Σ(x) − f_T(x)| for L-smooth f.

    Every applicable case is evaluated and the smallest is returned:
    dominance (T² − Σ² semi-definite either way), shared eigenbasis, and the
    general bound that always applies. None stands for "no smoothing", for
    which B reduces to the value gap of the other matrix.

    Args:
        L: Smoothness constant
        d: Dimension
        S: Smoothing matrix Σ, or None
        T: Smoothing matrix T, or None

    Returns:
        Nonnegative bound, 0 when Σ and T are equal

    Raises:
        DimMismatch: if the dimensions differ
    """
    if S is None and T is None:
        return 0.0
    if S is None or T is None:
        return lemma3_gaps(L, d, T if S is None else S).value_gap
    check_same_dim(S, T)
    if np.array_equal(S.matrix, T.matrix):
        return 0.0

    pair = classify_pair(S, T)
    candidates = [_general_bound(L, d, S, T)]
    if pair.t_dominates or pair.s_dominates:
        candidates.append(_dominance_bound(L, d, S, T))
    if pair.codiagonalizable:
        candidates.append(_codiagonal_bound(L, d, S, T))
    return max(0.0, min(candidates))


def bound_grad_diff(L: float, d: int, S: SpdMatrix, T: SpdMatrix) -> float:
    """
    Bound B̃(Σ, T) on ‖∇f_Σ(x) − ∇f_T(x)‖ through the triangle inequality via ∇f.

    Raises:
        DimMismatch: if the dimensions differ
    """
    check_same_dim(S, T)
    return L * _grad_scale(d) * (_spread(S) + _spread(T))


@dataclass
class CertificateInputs:
    """
    Quantities the convergence certificates are evaluated on.

    Attributes:
        L: Smoothness constant of f
        d: Dimension
        sigma_sequence: Σ_1, ..., Σ_T
        x0_dist: ‖x₀ − x_*‖ (convex GD)
        f0_gap: f(x₀) − f_* (nonconvex GD and SGD)
        step: Constant step λ (GD)
        etas: Step sizes η_1, ..., η_T (SGD)
        lambda_sq_bound: λ with E‖∇f_k‖² ≤ λ (SGD)
        sigma_initial: Σ₀ for the SGD smoothing-change term (None means no smoothing)
        sigma_next: Σ_{T+1} for nonconvex GD (defaults to Σ_T)
    """

    L: float
    d: int
    sigma_sequence: List[SpdMatrix]
    x0_dist: float = 0.0
    f0_gap: float = 0.0
    step: Optional[float] = None
    etas: Optional[Sequence[float]] = None
    lambda_sq_bound: float = 0.0
    sigma_initial: Optional[SpdMatrix] = None
    sigma_next: Optional[SpdMatrix] = None

    def __post_init__(self):
        for name in ("L", "x0_dist", "f0_gap", "lambda_sq_bound"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.d < 1:
            raise ValueError("d must be positive")
        self.sigma_sequence = list(self.sigma_sequence)

    @property
    def horizon(self) -> int:
        return len(self.sigma_sequence)


def _require_sequence(inputs: CertificateInputs):
    if not inputs.sigma_sequence:
        raise EmptySchedule("certificate needs at least one smoothing matrix")


def _require_step(step: Optional[float]) -> float:
    if step is None or not step > 0:
        raise BadStep(f"step size must be positive, got {step}")
    return float(step)


def _smoothing_cost(S: SpdMatrix) -> float:
    # ‖Σ‖⁴‖Σ⁻¹‖²
    return _spread(S) ** 2


def certificate_gd_convex(inputs: CertificateInputs) -> float:
    """
    Bound on f(x_T) − f_* for smoothed GD on a convex L-smooth f.

    (1/2T)‖x₀−x_*‖² + (1/T)[(Ld/4)Σ‖Σ_t‖² + Σ_{t=1}^{T−1} t·B(Σ_{T−t}, Σ_{T−t+1})]

    Raises:
        EmptySchedule: for an empty sigma_sequence
    """
    _require_sequence(inputs)
    sigmas = inputs.sigma_sequence
    T = len(sigmas)
    L, d = inputs.L, inputs.d
    smoothing = L * d / 4.0 * sum(S.op_norm ** 2 for S in sigmas)
    changes = sum(
        t * bound_value_diff(L, d, sigmas[T - t - 1], sigmas[T - t])
        for t in range(1, T)
    )
    return inputs.x0_dist ** 2 / (2.0 * T) + (smoothing + changes) / T


def certificate_gd_nonconvex(inputs: CertificateInputs) -> float:
    """
    Bound on min_t ‖∇f(x_t)‖² for smoothed GD with step λ on an L-smooth f.

    The smoothing-change sum runs over t = 0..T with Σ₀ = 0 and, when only
    T matrices are given, Σ_{T+1} = Σ_T.

    Raises:
        EmptySchedule: for an empty sigma_sequence
        BadStep: when step is missing or not positive
    """
    _require_sequence(inputs)
    step = _require_step(inputs.step)
    sigmas = inputs.sigma_sequence
    T = len(sigmas)
    L, d = inputs.L, inputs.d
    final = inputs.sigma_next if inputs.sigma_next is not None else sigmas[-1]
    padded: List[Optional[SpdMatrix]] = [None] + sigmas + [final]
    leading = 4.0 / (T * step) * inputs.f0_gap
    cost = L ** 2 / T * ((6.0 + d) / 2.0) ** 3 * sum(_smoothing_cost(S) for S in sigmas)
    changes = sum(bound_value_diff(L, d, padded[t + 1], padded[t]) for t in range(T + 1))
    return leading + cost + 4.0 / (T * step) * changes


def certificate_sgd_terms(inputs: CertificateInputs) -> Dict[str, float]:
    """
    The four terms of the smoothed SGD bound on min_t E‖∇f_{Σ_{t+1}}(x_t)‖².

    Args:
        inputs: Must carry etas with one positive entry per smoothing matrix

    Returns:
        Dict with initial_gap, noise, smoothing_cost and smoothing_change

    Raises:
        EmptySchedule: for an empty sigma_sequence
        BadStep: for a missing or nonpositive step size
    """
    _require_sequence(inputs)
    if inputs.etas is None:
        raise BadStep("SGD certificate needs a step-size schedule")
    etas = np.asarray(inputs.etas, dtype=float)
    sigmas = inputs.sigma_sequence
    if etas.size != len(sigmas):
        raise ValueError(f"{etas.size} step sizes for {len(sigmas)} smoothing matrices")
    if np.any(etas <= 0):
        raise BadStep("step sizes must be positive")

    L, d = inputs.L, inputs.d
    total = float(np.sum(etas))
    costs = np.array([_smoothing_cost(S) for S in sigmas])
    previous = [inputs.sigma_initial] + sigmas[:-1]
    changes = sum(bound_value_diff(L, d, S, P) for S, P in zip(sigmas, previous))
    return {
        "initial_gap": inputs.f0_gap / total,
        "noise": L * inputs.lambda_sq_bound ** 2 * float(np.sum(etas ** 2)) / total,
        "smoothing_cost": L ** 3 * (3.0 + d) ** 3 / 8.0 * float(np.sum(costs * etas ** 2)) / total,
        "smoothing_change": changes / total,
    }


def certificate_sgd(inputs: CertificateInputs) -> float:
    """Sum of certificate_sgd_terms."""
    return float(sum(certificate_sgd_terms(inputs).values()))


GD_CONVEX = "gd_convex"
GD_NONCONVEX = "gd_nonconvex"
SGD = "sgd"
CERTIFICATE_KINDS = (GD_CONVEX, GD_NONCONVEX, SGD)


class CertificateTracker:
    """
    Running certificate along a trajectory, updated in O(1) per iteration.

    After pushing Σ_1..Σ_T (and η_1..η_T for SGD) the value equals the batch
    certificate on the same inputs.
    """

    def __init__(self, kind: str, L: float, d: int, x0_dist: float = 0.0, f0_gap: float = 0.0,
                 step: Optional[float] = None, lambda_sq_bound: float = 0.0,
                 sigma_initial: Optional[SpdMatrix] = None):
        if kind not in CERTIFICATE_KINDS:
            raise ValueError(f"unknown certificate kind '{kind}', expected one of {CERTIFICATE_KINDS}")
        if kind == GD_NONCONVEX:
            _require_step(step)
        self.kind = kind
        self.L = L
        self.d = d
        self.x0_dist = x0_dist
        self.f0_gap = f0_gap
        self.step = step
        self.lambda_sq_bound = lambda_sq_bound
        self._previous = sigma_initial if kind == SGD else None
        self._t = 0
        self._norm_sq_sum = 0.0
        self._cost_sum = 0.0
        self._change_sum = 0.0
        self._weighted_change_sum = 0.0
        self._eta_sum = 0.0
        self._eta_sq_sum = 0.0
        self._cost_eta_sq_sum = 0.0

    @property
    def horizon(self) -> int:
        return self._t

    def push(self, sigma: SpdMatrix, eta: Optional[float] = None) -> float:
        """
        Add Σ_{t+1} (and η_{t+1}) and return the certificate at horizon t+1.

        Raises:
            BadStep: for SGD when eta is missing or not positive
        """
        L, d = self.L, self.d
        self._t += 1
        if self.kind != GD_CONVEX:
            # against Σ₀ on the first push
            self._change_sum += bound_value_diff(L, d, sigma, self._previous)
        elif self._previous is not None:
            change = bound_value_diff(L, d, self._previous, sigma)
            self._change_sum += change
            self._weighted_change_sum += (self._t - 1) * change
        self._norm_sq_sum += sigma.op_norm ** 2
        self._cost_sum += _smoothing_cost(sigma)
        if self.kind == SGD:
            if eta is None or not eta > 0:
                raise BadStep(f"step size must be positive, got {eta}")
            self._eta_sum += eta
            self._eta_sq_sum += eta ** 2
            self._cost_eta_sq_sum += _smoothing_cost(sigma) * eta ** 2
        self._previous = sigma
        return self.value

    @property
    def value(self) -> float:
        if self._t == 0:
            raise EmptySchedule("no smoothing matrices pushed yet")
        T = self._t
        L, d = self.L, self.d
        if self.kind == GD_CONVEX:
            changes = T * self._change_sum - self._weighted_change_sum
            return self.x0_dist ** 2 / (2.0 * T) + (L * d / 4.0 * self._norm_sq_sum + changes) / T
        if self.kind == GD_NONCONVEX:
            scale = 4.0 / (T * self.step)
            return (scale * self.f0_gap
                    + L ** 2 / T * ((6.0 + d) / 2.0) ** 3 * self._cost_sum
                    + scale * self._change_sum)
        total = self._eta_sum
        return (self.f0_gap / total
                + L * self.lambda_sq_bound ** 2 * self._eta_sq_sum / total
                + L ** 3 * (3.0 + d) ** 3 / 8.0 * self._cost_eta_sq_sum / total
                + self._change_sum / total)


@dataclass(frozen=True)
class ConditionResult:
    passed: bool
    detail: str


@dataclass
class AssumptionReport:
    """Pass/fail per convergence hypothesis of smoothed Adam."""

    conditions: Dict[str, ConditionResult] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    def to_dict(self) -> Dict[str, Dict[str, Union[bool, str]]]:
        return {name: {"passed": c.passed, "detail": c.detail} for name, c in self.conditions.items()}


def _as_spd_sequence(sigmas: Sequence[Union[SpdMatrix, float]], d: int) -> List[SpdMatrix]:
    return [S if isinstance(S, SpdMatrix) else SpdMatrix.isotropic(float(S), d) for S in sigmas]


def adam_assumption_check(eta_exponent: float, theta_exponent: float, sigmas: Sequence[Union[SpdMatrix, float]],
                          L: float = 1.0, d: int = 1, eta0: float = 1.0, theta_scale: float = 1e-3,
                          m_tilde: Optional[float] = None) -> AssumptionReport:
    """
    Check the schedule hypotheses of smoothed Adam on power-law schedules.

    η_t = η₀·t^{−p} and θ_t = 1 − theta_scale·t^{−q}. Series conditions use
    p-series tests; conditions on Σ_t look at the supplied finite prefix.

    Args:
        eta_exponent: p
        theta_exponent: q
        sigmas: Σ_1, Σ_2, ... as SpdMatrix or isotropic scalars
        L: Smoothness constant for B and B̃
        d: Dimension (used when sigmas are scalars)
        eta0: η₀
        theta_scale: 1 − θ_1
        m_tilde: Constant for B̃(Σ_{t+1}, Σ_t) ≤ M̃η_t; estimated from the
            first half of the prefix when omitted

    Returns:
        AssumptionReport, never raises on failing conditions
    """
    p, q = eta_exponent, theta_exponent
    report = AssumptionReport()
    report.conditions["sum_eta_diverges"] = ConditionResult(p <= 1.0, f"p-series with p={p:g}")
    report.conditions["sum_eta_sq_converges"] = ConditionResult(p > 0.5, f"p-series with 2p={2 * p:g}")
    theta_ok = theta_scale == 0.0 or p + q > 1.0
    report.conditions["sum_eta_theta_converges"] = ConditionResult(theta_ok, f"p-series with p+q={p + q:g}")

    matrices = _as_spd_sequence(sigmas, d)
    if len(matrices) < 4:
        short = ConditionResult(False, f"prefix of {len(matrices)} matrices is too short")
        for name in ("b_tilde_tracks_eta", "b_summable", "sigma_to_zero"):
            report.conditions[name] = short
        return report

    steps = np.array([eta0 * (t + 1) ** (-p) for t in range(len(matrices) - 1)])
    ratios = np.array([
        bound_grad_diff(L, matrices[0].dim, matrices[t + 1], matrices[t]) / steps[t]
        for t in range(len(matrices) - 1)
    ])
    half = len(ratios) // 2
    if m_tilde is None:
        estimate = float(np.max(ratios[:half]))
        tracks = bool(np.all(ratios[half:] <= estimate))
        detail = f"estimated M~={estimate:.4g}, late max ratio {float(np.max(ratios[half:])):.4g}"
    else:
        tracks = bool(np.all(ratios <= m_tilde))
        detail = f"M~={m_tilde:g}, max ratio {float(np.max(ratios)):.4g}"
    report.conditions["b_tilde_tracks_eta"] = ConditionResult(tracks, detail)

    changes = np.array([
        bound_value_diff(L, matrices[0].dim, matrices[t + 1], matrices[t])
        for t in range(len(matrices) - 1)
    ])
    early, late = float(np.sum(changes[:half])), float(np.sum(changes[half:]))
    report.conditions["b_summable"] = ConditionResult(
        late <= 0.5 * early or late == 0.0, f"partial sums {early:.4g} then {late:.4g}"
    )

    norms = np.array([S.op_norm for S in matrices])
    shrinking = bool(np.all(np.diff(norms) <= 0.0)) and norms[-1] < 0.01 * norms[0]
    report.conditions["sigma_to_zero"] = ConditionResult(
        shrinking, f"norm {norms[0]:.4g} -> {norms[-1]:.4g}"
    )
    for name, result in report.conditions.items():
        logger.debug("adam assumption %s: %s (%s)", name, "pass" if result.passed else "fail", result.detail)
    return report
