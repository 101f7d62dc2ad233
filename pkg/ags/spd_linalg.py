"""
Dense symmetric and SPD matrix utilities.

Every smoothing matrix in the package is an SpdMatrix: a symmetrized array
together with its eigendecomposition (eigenvalues in descending order), so
square roots, inverses and norms are all read off the spectrum.
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
import numpy.typing as npt

from ags.exceptions import DimMismatch, InvalidMatrix, NotPositiveDefinite

Array = npt.NDArray[np.float64]

# Eigenvalues below EIG_FLOOR * operator norm reject SPD construction.
EIG_FLOOR = 1e-12
COMMUTE_TOL = 1e-10
PSD_TOL = 1e-10


def _frozen(values) -> Array:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SymMatrix:
    """Symmetric d×d matrix; construction symmetrizes via (M + Mᵀ)/2."""

    entries: Array

    @classmethod
    def from_array(cls, values) -> "SymMatrix":
        """
        Build a symmetric matrix from any square array-like.

        Args:
            values: Square array-like (a scalar is read as a 1×1 matrix)

        Returns:
            SymMatrix with entries (M + Mᵀ)/2
        """
        if isinstance(values, SymMatrix):
            return values
        if isinstance(values, SpdMatrix):
            return values.base
        arr = np.atleast_2d(np.asarray(values, dtype=float))
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
            raise InvalidMatrix(f"expected a square matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidMatrix("matrix has non-finite entries")
        return cls(_frozen((arr + arr.T) / 2.0))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class SpdMatrix:
    """
    Symmetric positive definite matrix with a cached eigendecomposition.

    Attributes:
        base: The symmetric entries
        eigenvalues: Descending, all above the relative eig floor
        eigenvectors: Orthonormal columns matching eigenvalues
    """

    base: SymMatrix
    eigenvalues: Array
    eigenvectors: Array

    @classmethod
    def from_array(cls, values, eig_floor: float = EIG_FLOOR) -> "SpdMatrix":
        """
        Decompose a symmetric matrix and check it is positive definite.

        Args:
            values: Square array-like, SymMatrix or SpdMatrix
            eig_floor: Relative floor on the smallest eigenvalue

        Returns:
            SpdMatrix

        Raises:
            NotPositiveDefinite: if the smallest eigenvalue is below
                eig_floor times the operator norm
        """
        if isinstance(values, SpdMatrix):
            return values
        sym = SymMatrix.from_array(values)
        eigenvalues, eigenvectors = sym_eigen(sym)
        _check_floor(eigenvalues, eig_floor)
        return cls(sym, _frozen(eigenvalues), _frozen(eigenvectors))

    @classmethod
    def from_eigen(cls, eigenvalues, eigenvectors, eig_floor: float = EIG_FLOOR) -> "SpdMatrix":
        """
        Recompose P·diag(λ)·Pᵀ from a spectrum, keeping the given eigenvectors.

        Args:
            eigenvalues: Positive eigenvalues in any order
            eigenvectors: Orthonormal columns, one per eigenvalue

        Returns:
            SpdMatrix with eigenvalues re-sorted descending
        """
        values = np.asarray(eigenvalues, dtype=float).ravel()
        vectors = np.atleast_2d(np.asarray(eigenvectors, dtype=float))
        if vectors.shape != (values.size, values.size):
            raise DimMismatch(f"{values.size} eigenvalues but eigenvectors of shape {vectors.shape}")
        order = np.argsort(-values, kind="stable")
        values, vectors = values[order], vectors[:, order]
        _check_floor(values, eig_floor)
        entries = (vectors * values) @ vectors.T
        sym = SymMatrix(_frozen((entries + entries.T) / 2.0))
        return cls(sym, _frozen(values), _frozen(vectors))

    @classmethod
    def isotropic(cls, sigma: float, dim: int) -> "SpdMatrix":
        """σ·I in dimension dim."""
        return cls.from_eigen(np.full(dim, float(sigma)), np.eye(dim))

    @classmethod
    def diagonal(cls, values) -> "SpdMatrix":
        """diag(values) with the canonical basis as eigenvectors."""
        values = np.asarray(values, dtype=float).ravel()
        return cls.from_eigen(values, np.eye(values.size))

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def matrix(self) -> Array:
        return self.base.entries

    @property
    def op_norm(self) -> float:
        """‖Σ‖, the largest eigenvalue."""
        return float(self.eigenvalues[0])

    @property
    def min_eig(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def inv_op_norm(self) -> float:
        """‖Σ⁻¹‖ = 1 / smallest eigenvalue."""
        return 1.0 / float(self.eigenvalues[-1])

    def squared(self) -> Array:
        """Σ² recomposed from the spectrum."""
        return (self.eigenvectors * self.eigenvalues ** 2) @ self.eigenvectors.T

    def inverse(self) -> Array:
        """Σ⁻¹ recomposed from the spectrum."""
        return (self.eigenvectors / self.eigenvalues) @ self.eigenvectors.T

    def scaled(self, factor: float) -> "SpdMatrix":
        """factor·Σ with the eigenvectors kept."""
        return SpdMatrix.from_eigen(self.eigenvalues * factor, self.eigenvectors)


MatrixLike = Union[SymMatrix, SpdMatrix, npt.ArrayLike]


def _check_floor(eigenvalues: Array, eig_floor: float):
    top = float(np.max(np.abs(eigenvalues)))
    lowest = float(np.min(eigenvalues))
    if top <= 0.0 or lowest <= 0.0 or lowest < eig_floor * top:
        raise NotPositiveDefinite(
            f"smallest eigenvalue {lowest:.3e} below floor {eig_floor:g} x operator norm {top:.3e}"
        )


def sym_eigen(M: MatrixLike) -> Tuple[Array, Array]:
    """
    Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Uses the symmetric solver (real spectrum, orthonormal eigenvectors).

    Args:
        M: Symmetric matrix (array-like, SymMatrix or SpdMatrix)

    Returns:
        Tuple of (eigenvalues descending, eigenvectors as columns)

    Raises:
        InvalidMatrix: if M has non-finite entries or is not square
    """
    if isinstance(M, SpdMatrix):
        return np.array(M.eigenvalues), np.array(M.eigenvectors)
    sym = SymMatrix.from_array(M)
    eigenvalues, eigenvectors = np.linalg.eigh(sym.entries)
    return eigenvalues[::-1].copy(), eigenvectors[:, ::-1].copy()


def spd_sqrt(M: MatrixLike, eig_floor: float = EIG_FLOOR) -> SpdMatrix:
    """
    Principal square root of an SPD matrix.

    Args:
        M: SPD matrix

    Returns:
        SpdMatrix R with R·R = M and the eigenvectors of M

    Raises:
        NotPositiveDefinite: if M is not positive definite
    """
    spd = SpdMatrix.from_array(M, eig_floor=eig_floor)
    return SpdMatrix.from_eigen(np.sqrt(spd.eigenvalues), spd.eigenvectors, eig_floor=0.0)


def operator_norm(M: MatrixLike) -> float:
    """Largest eigenvalue magnitude of a symmetric matrix."""
    if isinstance(M, SpdMatrix):
        return M.op_norm
    eigenvalues, _ = sym_eigen(M)
    return float(np.max(np.abs(eigenvalues)))


def min_eigenvalue(M: MatrixLike) -> float:
    eigenvalues, _ = sym_eigen(M)
    return float(eigenvalues[-1])


@dataclass(frozen=True)
class PairClass:
    """
    Which smoothing-change case applies to a pair (Σ, T).

    Attributes:
        codiagonalizable: Σ and T commute (share an eigenbasis)
        t_dominates: T² − Σ² is positive semi-definite
        s_dominates: Σ² − T² is positive semi-definite
    """

    codiagonalizable: bool
    t_dominates: bool
    s_dominates: bool


def check_same_dim(S, T):
    if S.dim != T.dim:
        raise DimMismatch(f"dimension {S.dim} vs {T.dim}")


def classify_pair(S: MatrixLike, T: MatrixLike,
                  commute_tol: float = COMMUTE_TOL, psd_tol: float = PSD_TOL) -> PairClass:
    """
    Classify a pair of SPD matrices for the smoothing-change bound dispatch.

    Args:
        S: First smoothing matrix Σ
        T: Second smoothing matrix T
        commute_tol: Relative tolerance on ‖ΣT − TΣ‖_max
        psd_tol: Relative tolerance on the smallest eigenvalue of T² − Σ²

    Returns:
        PairClass with the three independent flags

    Raises:
        DimMismatch: if the dimensions differ
    """
    S = SpdMatrix.from_array(S)
    T = SpdMatrix.from_array(T)
    check_same_dim(S, T)

    scale = max(S.op_norm, T.op_norm)
    commutator = S.matrix @ T.matrix - T.matrix @ S.matrix
    codiagonalizable = float(np.max(np.abs(commutator))) < commute_tol * scale ** 2

    difference = T.squared() - S.squared()
    tolerance = psd_tol * scale ** 2
    eigenvalues, _ = sym_eigen(difference)
    t_dominates = float(eigenvalues[-1]) >= -tolerance
    s_dominates = float(-eigenvalues[0]) >= -tolerance
    return PairClass(codiagonalizable, t_dominates, s_dominates)


def random_spd(dim: int, rng: np.random.Generator, low: float = 0.1, high: float = 2.0) -> SpdMatrix:
    """
    Random SPD matrix with eigenvalues uniform in [low, high].

    Args:
        dim: Matrix dimension
        rng: Generator supplying the draws
        low: Smallest allowed eigenvalue
        high: Largest allowed eigenvalue

    Returns:
        SpdMatrix with Haar-distributed eigenvectors
    """
    gaussian = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(gaussian)
    q = q * np.sign(np.where(np.diag(r) == 0.0, 1.0, np.diag(r)))
    return SpdMatrix.from_eigen(rng.uniform(low, high, size=dim), q)
