"""
Objective functions: black-box wrappers, quadratic forms, rotated benchmarks
and the zero-mean linear-shift finite sum used for the stochastic setting.

Value functions are batched: they take an array of shape (..., d) and return
shape (...), so Monte Carlo and quadrature evaluate whole sample blocks at once.
"""

import logging
import threading
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import numpy.typing as npt

from ags.exceptions import BadDimension, DimMismatch, UnknownFunction
from ags.spd_linalg import SymMatrix, operator_norm

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]
BatchFn = Callable[[Array], Array]
GradFn = Callable[[Array], Array]


class EvalCounter:
    """Monotone count of function evaluations, safe to bump from several threads."""

    def __init__(self):
        self._count = 0
        self._lock = threading.Lock()

    def add(self, n: int = 1):
        with self._lock:
            self._count += int(n)

    @property
    def value(self) -> int:
        with self._lock:
            return self._count


class Objective:
    """
    Black-box objective with optional analytic gradient and known optimum.

    Every call to value/value_batch with count=True advances eval_count by the
    number of points evaluated.
    """

    def __init__(
        self,
        dim: int,
        value_fn: BatchFn,
        grad_fn: Optional[GradFn] = None,
        smoothness_L: Optional[float] = None,
        f_star: Optional[float] = None,
        x_opt: Optional[Array] = None,
        name: str = "objective",
        quadratic: Optional["QuadraticForm"] = None,
        convex: bool = False,
        counter: Optional[EvalCounter] = None,
    ):
        """
        Initialize the objective.

        Args:
            dim: Input dimension d
            value_fn: Batched value function, (..., d) -> (...)
            grad_fn: Optional analytic gradient, (d,) -> (d,)
            smoothness_L: Lipschitz constant of the gradient, if known
            f_star: Minimum value, if known
            x_opt: Minimizer, if known
            name: Label used in logs and records
            quadratic: The quadratic form this objective evaluates, if any
            convex: Whether the objective is known to be convex
            counter: Shared evaluation counter (a fresh one by default)
        """
        if dim < 1:
            raise BadDimension(f"dimension must be positive, got {dim}")
        if smoothness_L is not None and smoothness_L < 0:
            raise ValueError("smoothness_L must be nonnegative")
        self.dim = int(dim)
        self.value_fn = value_fn
        self.grad_fn = grad_fn
        self.smoothness_L = smoothness_L
        self.f_star = f_star
        self.x_opt = None if x_opt is None else np.asarray(x_opt, dtype=float)
        self.name = name
        self.quadratic = quadratic
        self.convex = convex
        self.counter = counter or EvalCounter()

    @classmethod
    def from_scalar(cls, fn: Callable[[Array], float], dim: int, **kwargs) -> "Objective":
        """
        Wrap a scalar function of one point as a batched objective.

        Args:
            fn: Function of a (d,) vector returning a float
            dim: Input dimension
            **kwargs: Forwarded to Objective

        Returns:
            Objective evaluating fn row by row
        """
        def batched(points: Array) -> Array:
            points = np.asarray(points, dtype=float)
            flat = points.reshape(-1, dim)
            out = np.array([float(fn(row)) for row in flat])
            return out.reshape(points.shape[:-1])

        return cls(dim, batched, **kwargs)

    @property
    def eval_count(self) -> int:
        return self.counter.value

    def _check_point(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise DimMismatch(f"{self.name} expects points of dimension {self.dim}, got shape {x.shape}")
        return x

    def value(self, x, count: bool = True) -> float:
        """Evaluate f at a single point."""
        x = self._check_point(x)
        if count:
            self.counter.add(1)
        return float(np.asarray(self.value_fn(x[None, :]))[0])

    def value_batch(self, points, count: bool = True) -> Array:
        """
        Evaluate f at every row of points.

        Args:
            points: Array of shape (n, d)
            count: Whether the evaluations count toward eval_count

        Returns:
            Array of shape (n,)
        """
        points = self._check_point(points)
        points = points.reshape(-1, self.dim)
        if count:
            self.counter.add(points.shape[0])
        return np.asarray(self.value_fn(points), dtype=float).reshape(points.shape[0])

    @property
    def has_gradient(self) -> bool:
        return self.grad_fn is not None

    def gradient(self, x) -> Array:
        """Analytic gradient at a single point (does not count as an evaluation)."""
        if self.grad_fn is None:
            raise ValueError(f"{self.name} has no analytic gradient")
        x = self._check_point(x)
        return np.asarray(self.grad_fn(x), dtype=float)


@dataclass(frozen=True)
class QuadraticForm:
    """f(x) = xᵀAx + bᵀx + c, the family with closed-form smoothing."""

    A: SymMatrix
    b: Array
    c: float = 0.0

    @classmethod
    def create(cls, A, b=None, c: float = 0.0) -> "QuadraticForm":
        sym = SymMatrix.from_array(A)
        b = np.zeros(sym.dim) if b is None else np.array(b, dtype=float).ravel()
        if b.size != sym.dim:
            raise DimMismatch(f"A is {sym.dim}x{sym.dim} but b has {b.size} entries")
        b.setflags(write=False)
        return cls(sym, b, float(c))

    @property
    def dim(self) -> int:
        return self.A.dim

    def value(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        quad = np.einsum("...i,ij,...j->...", x, self.A.entries, x)
        return quad + x @ self.b + self.c

    def gradient(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        return 2.0 * x @ self.A.entries + self.b

    def with_shift(self, shift) -> "QuadraticForm":
        """Same form plus the linear term shiftᵀx."""
        return QuadraticForm.create(self.A.entries, self.b + np.asarray(shift, dtype=float), self.c)

    def to_objective(self, name: str = "quadratic", counter: Optional[EvalCounter] = None) -> Objective:
        """
        Objective view of the form, with L = 2‖A‖ and the minimizer when A is PD.

        Args:
            name: Objective label
            counter: Optional shared evaluation counter

        Returns:
            Objective whose value_fn is this form
        """
        eigenvalues = np.linalg.eigvalsh(self.A.entries)
        x_opt, f_star = None, None
        if eigenvalues[0] > 0:
            x_opt = np.linalg.solve(self.A.entries, -0.5 * self.b)
            f_star = float(self.value(x_opt))
        return Objective(
            self.dim,
            self.value,
            grad_fn=self.gradient,
            smoothness_L=2.0 * operator_norm(self.A),
            f_star=f_star,
            x_opt=x_opt,
            name=name,
            quadratic=self,
            convex=bool(eigenvalues[0] >= 0),
            counter=counter,
        )


class FiniteSum:
    """
    Stochastic objective f = (1/K) Σ_k f_k with f_k(x) = f(x) + ξ_kᵀx.

    The shifts ξ_k sum to zero, so the component average and its gradient
    equal the base exactly, and every component keeps the base's L.
    """

    def __init__(self, base: Objective, shifts: Array):
        """
        Initialize the finite sum.

        Args:
            base: The objective f
            shifts: Array of shape (K, d) of linear shifts
        """
        shifts = np.atleast_2d(np.asarray(shifts, dtype=float))
        if shifts.shape[1] != base.dim:
            raise DimMismatch(f"shifts have dimension {shifts.shape[1]}, objective {base.dim}")
        shifts.setflags(write=False)
        self.base = base
        self.shifts = shifts
        self._components = [self._make_component(k) for k in range(shifts.shape[0])]

    @property
    def K(self) -> int:
        return self.shifts.shape[0]

    @property
    def dim(self) -> int:
        return self.base.dim

    def _make_component(self, k: int) -> Objective:
        base = self.base
        shift = self.shifts[k]

        def value_fn(points: Array) -> Array:
            return base.value_fn(points) + points @ shift

        grad_fn = None
        if base.grad_fn is not None:
            def grad_fn(x: Array) -> Array:
                return base.grad_fn(x) + shift

        quadratic = base.quadratic.with_shift(shift) if base.quadratic is not None else None
        return Objective(
            base.dim,
            value_fn,
            grad_fn=grad_fn,
            smoothness_L=base.smoothness_L,
            name=f"{base.name}[k={k}]",
            quadratic=quadratic,
            convex=base.convex,
            counter=base.counter,
        )

    def component(self, k: int) -> Objective:
        """The k-th component f_k as an Objective sharing the base counter."""
        return self._components[k]

    def mean_value(self, x) -> float:
        """(1/K) Σ_k f_k(x), evaluated without counting."""
        return float(np.mean([c.value(x, count=False) for c in self._components]))


def make_finite_sum(base: Objective, K: int, noise_scale: float, seed: int) -> FiniteSum:
    """
    Build K zero-mean linear-shift components around base.

    Args:
        base: Objective f
        K: Number of components (at least 1)
        noise_scale: Standard deviation of the Gaussian shift draws
        seed: Seed for the shift draws

    Returns:
        FiniteSum whose shifts are re-centered to sum to the zero vector
    """
    if K < 1:
        raise ValueError(f"K must be at least 1, got {K}")
    if noise_scale < 0:
        raise ValueError(f"noise_scale must be nonnegative, got {noise_scale}")
    rng = np.random.default_rng(seed)
    shifts = rng.normal(0.0, noise_scale, size=(K, base.dim))
    shifts = shifts - shifts.mean(axis=0)
    return FiniteSum(base, shifts)


def make_rotation(dim: int, seed: int) -> Array:
    """
    Seeded random orthogonal matrix.

    QR of a seeded Gaussian matrix, with columns flipped so R has a positive
    diagonal; the same (dim, seed) always gives the same matrix.

    Args:
        dim: Matrix dimension
        seed: 64-bit seed

    Returns:
        Orthogonal dim×dim array
    """
    if dim < 1:
        raise BadDimension(f"dimension must be positive, got {dim}")
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


# --- benchmark formulas in the transformed variable z, batched over leading axes ---

def _power_ramp(dim: int, low: float, span: float) -> Array:
    if dim == 1:
        return np.array([low])
    return low + span * np.arange(dim) / (dim - 1)


def _sphere(z: Array) -> Array:
    return np.sum(z ** 2, axis=-1)


def _sphere_grad(z: Array) -> Array:
    return 2.0 * z


def _ellipsoidal_coefficients(dim: int) -> Array:
    # d = 1 falls back to the sphere
    return 10.0 ** _power_ramp(dim, 0.0, 6.0)


def _ellipsoidal(z: Array) -> Array:
    return np.sum(_ellipsoidal_coefficients(z.shape[-1]) * z ** 2, axis=-1)


def _ellipsoidal_grad(z: Array) -> Array:
    return 2.0 * _ellipsoidal_coefficients(z.shape[-1]) * z


def _diff_powers(z: Array) -> Array:
    powers = _power_ramp(z.shape[-1], 2.0, 4.0)
    return np.sqrt(np.sum(np.abs(z) ** powers, axis=-1))


def _diff_powers_grad(z: Array) -> Array:
    powers = _power_ramp(z.shape[-1], 2.0, 4.0)
    total = np.sqrt(np.sum(np.abs(z) ** powers, axis=-1))
    if total == 0.0:
        return np.zeros_like(z)
    return powers * np.abs(z) ** (powers - 1.0) * np.sign(z) / (2.0 * total)


def _powell_parts(z: Array):
    blocks = z.reshape(z.shape[:-1] + (-1, 4))
    z0, z1, z2, z3 = (blocks[..., i] for i in range(4))
    return z0 + 10.0 * z1, z2 - z3, z1 - 2.0 * z2, z0 - z3


def _powell(z: Array) -> Array:
    a, b, c, e = _powell_parts(z)
    return np.sum(a ** 2 + 5.0 * b ** 2 + c ** 4 + 10.0 * e ** 4, axis=-1)


def _powell_grad(z: Array) -> Array:
    a, b, c, e = _powell_parts(z)
    grad = np.stack([
        2.0 * a + 40.0 * e ** 3,
        20.0 * a + 4.0 * c ** 3,
        10.0 * b - 8.0 * c ** 3,
        -10.0 * b - 40.0 * e ** 3,
    ], axis=-1)
    return grad.reshape(z.shape)


def _rosenbrock(z: Array) -> Array:
    # standard Rosenbrock at z + 1, so the minimizer sits at z = 0
    y = z + 1.0
    return np.sum(100.0 * (y[..., 1:] - y[..., :-1] ** 2) ** 2 + (y[..., :-1] - 1.0) ** 2, axis=-1)


def _rosenbrock_grad(z: Array) -> Array:
    y = z + 1.0
    ridge = y[..., 1:] - y[..., :-1] ** 2
    grad = np.zeros_like(y)
    grad[..., :-1] += -400.0 * y[..., :-1] * ridge + 2.0 * (y[..., :-1] - 1.0)
    grad[..., 1:] += 200.0 * ridge
    return grad


def _ackley(z: Array) -> Array:
    n = z.shape[-1]
    radius = np.sqrt(np.sum(z ** 2, axis=-1) / n)
    waves = np.sum(np.cos(2.0 * np.pi * z), axis=-1) / n
    return 20.0 * (1.0 - np.exp(-0.2 * radius)) + (np.e - np.exp(waves))


def _ackley_grad(z: Array) -> Array:
    n = z.shape[-1]
    radius = np.sqrt(np.sum(z ** 2) / n)
    waves = np.sum(np.cos(2.0 * np.pi * z)) / n
    radial = np.zeros_like(z) if radius == 0.0 else 4.0 * np.exp(-0.2 * radius) * z / (n * radius)
    return radial + 2.0 * np.pi * np.exp(waves) * np.sin(2.0 * np.pi * z) / n


@dataclass(frozen=True)
class _Benchmark:
    value: Callable[[Array], Array]
    grad: Callable[[Array], Array]
    domain: Tuple[float, float]
    min_dim: int = 1
    dim_multiple: int = 1


BENCHMARKS: Dict[str, _Benchmark] = {
    "sphere": _Benchmark(_sphere, _sphere_grad, (-2.0, 2.0)),
    "ellipsoidal": _Benchmark(_ellipsoidal, _ellipsoidal_grad, (-2.0, 2.0)),
    "diff_powers": _Benchmark(_diff_powers, _diff_powers_grad, (-5.0, 5.0), min_dim=2),
    "powell": _Benchmark(_powell, _powell_grad, (-4.0, 5.0), dim_multiple=4),
    "rosenbrock": _Benchmark(_rosenbrock, _rosenbrock_grad, (-5.0, 10.0), min_dim=2),
    "ackley": _Benchmark(_ackley, _ackley_grad, (-32.768, 32.768)),
}


def benchmark_names() -> List[str]:
    return list(BENCHMARKS)


def check_benchmark_dim(name: str, dim: int):
    """
    Validate a (benchmark, dimension) pair.

    Raises:
        UnknownFunction: if name is not a benchmark
        BadDimension: if dim is not supported by that benchmark
    """
    if name not in BENCHMARKS:
        raise UnknownFunction(f"unknown benchmark '{name}', expected one of {benchmark_names()}")
    spec = BENCHMARKS[name]
    if dim < spec.min_dim:
        raise BadDimension(f"{name} requires dim >= {spec.min_dim}")
    if dim % spec.dim_multiple != 0:
        raise BadDimension(f"{name} requires dim divisible by {spec.dim_multiple}")


def benchmark_domain(name: str) -> Tuple[float, float]:
    """Input box of a benchmark, used only to draw initial points."""
    if name not in BENCHMARKS:
        raise UnknownFunction(f"unknown benchmark '{name}'")
    return BENCHMARKS[name].domain


def sample_initial_point(name: str, dim: int, rng: np.random.Generator) -> Array:
    low, high = benchmark_domain(name)
    return rng.uniform(low, high, size=dim)


def make_benchmark(name: str, dim: int, rotation_seed: Optional[int] = None,
                   x_opt: Optional[npt.ArrayLike] = None) -> Objective:
    """
    Build a rotated, shifted benchmark evaluated at z = R(x − x_opt).

    Args:
        name: One of sphere, ellipsoidal, diff_powers, powell, rosenbrock, ackley
        dim: Input dimension
        rotation_seed: Seed for R; None means R = I
        x_opt: Minimizer location (origin by default)

    Returns:
        Objective with chain-rule gradient, f_star = 0 and x_opt set

    Raises:
        UnknownFunction: for an unknown name
        BadDimension: for an unsupported dimension
    """
    check_benchmark_dim(name, dim)
    spec = BENCHMARKS[name]
    rotation = np.eye(dim) if rotation_seed is None else make_rotation(dim, rotation_seed)
    x_opt = np.zeros(dim) if x_opt is None else np.asarray(x_opt, dtype=float).ravel()
    if x_opt.size != dim:
        raise DimMismatch(f"x_opt has {x_opt.size} entries, expected {dim}")

    def value_fn(points: Array) -> Array:
        return spec.value((points - x_opt) @ rotation.T)

    def grad_fn(x: Array) -> Array:
        return spec.grad(rotation @ (x - x_opt)) @ rotation

    quadratic, smoothness_L = None, None
    if name in ("sphere", "ellipsoidal"):
        coefficients = np.ones(dim) if name == "sphere" else _ellipsoidal_coefficients(dim)
        A = (rotation.T * coefficients) @ rotation
        A = (A + A.T) / 2.0
        quadratic = QuadraticForm.create(A, -2.0 * A @ x_opt, float(x_opt @ A @ x_opt))
        smoothness_L = 2.0 * float(coefficients.max())

    logger.debug("built benchmark %s (dim=%d, rotation_seed=%s)", name, dim, rotation_seed)
    return Objective(
        dim,
        value_fn,
        grad_fn=grad_fn,
        smoothness_L=smoothness_L,
        f_star=0.0,
        x_opt=x_opt,
        name=name,
        quadratic=quadratic,
        convex=name in ("sphere", "ellipsoidal", "diff_powers", "powell"),
    )


def make_linear(a, c: float = 0.0) -> Objective:
    """f(x) = aᵀx + c, unchanged by any smoothing."""
    a = np.asarray(a, dtype=float).ravel()
    quadratic = QuadraticForm.create(np.zeros((a.size, a.size)), a, c)
    return quadratic.to_objective(name="linear")


def make_cosine(a, offset: float = 0.0) -> Objective:
    """
    f(x) = cos(aᵀx) + offset, the trigonometric test family.

    Its smoothing has the closed form cos(aᵀx)·exp(−‖Σa‖²/4) + offset and its
    gradient is ‖a‖²-Lipschitz.
    """
    a = np.asarray(a, dtype=float).ravel()

    def value_fn(points: Array) -> Array:
        return np.cos(points @ a) + offset

    def grad_fn(x: Array) -> Array:
        return -np.sin(x @ a) * a

    return Objective(a.size, value_fn, grad_fn=grad_fn, smoothness_L=float(a @ a),
                     f_star=offset - 1.0, name="cosine")
