"""Density-matrix calculus: the rho-weighted product, Gibbs states, inverses.

The weighted product ``A_rho = int_0^1 rho^l A rho^(1-l) dl`` is evaluated in
closed form: in the eigenbasis of ``rho`` each matrix element of ``A`` is
multiplied by the logarithmic mean of the two corresponding eigenvalues.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidDensityMatrix, NonPositiveEigenvalue, NotHermitian
from .linalg import (
    Spectrum,
    as_operator,
    commutator,
    hermitian_eig,
    hermiticity_defect,
    hermitize,
    matrix_function,
)

DEFAULT_DEGENERACY_TOL = 1e-12
EPS_FLOOR_FACTOR = 1e-8
HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-9


@dataclass(frozen=True)
class PhysicalConstants:
    """Planck's reduced constant and Boltzmann's constant (reduced units by default)."""

    hbar: float = 1.0
    k_B: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and self.k_B > 0):
            raise ValueError(f"physical constants must be positive, got hbar={self.hbar}, k_B={self.k_B}")


@dataclass(frozen=True)
class DensityMatrix:
    """A validated statistical operator.

    Construction checks self-adjointness (1e-10), unit trace (1e-9) and
    eigenvalues bounded below by ``-psd_tol``.  The stored matrix is the
    symmetrized input.
    """

    op: np.ndarray
    psd_tol: float = 1e-10
    _spectrum: Spectrum | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        M = as_operator(self.op, "density matrix")
        defect = hermiticity_defect(M)
        if defect > HERMITICITY_TOL:
            raise InvalidDensityMatrix(f"not self-adjoint (defect {defect:.2e})")
        M = hermitize(M)
        tr = np.trace(M).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise InvalidDensityMatrix(f"trace {tr!r} differs from 1")
        spec = hermitian_eig(M)
        if spec.values[0] < -self.psd_tol:
            raise InvalidDensityMatrix(f"negative eigenvalue {spec.values[0]:.3e}")
        object.__setattr__(self, "op", M)
        object.__setattr__(self, "_spectrum", spec)

    @property
    def dim(self) -> int:
        return self.op.shape[0]

    @property
    def spectrum(self) -> Spectrum:
        return self._spectrum

    @classmethod
    def pure(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=np.complex128)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=np.complex128) / dim)

    def __array__(self, dtype=None, copy=None):
        return self.op if dtype is None else self.op.astype(dtype)


def _matrix(rho) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        return rho.op
    return as_operator(rho, "density matrix")


def _spectrum_of(rho) -> Spectrum:
    if isinstance(rho, DensityMatrix):
        return rho.spectrum
    return hermitian_eig(_matrix(rho))


def default_eps(rho) -> float:
    """Eigenvalue floor used when none is given: ``1e-8 * trace / dim``."""
    M = _matrix(rho)
    return EPS_FLOOR_FACTOR * np.trace(M).real / M.shape[0]


def floored_spectrum(rho, eps: float | None = None) -> Spectrum:
    """Spectrum of ``rho`` with every eigenvalue raised to at least ``eps``."""
    spec = _spectrum_of(rho)
    if eps is None:
        eps = default_eps(rho)
    return Spectrum(np.maximum(spec.values, eps), spec.vectors)


def log_mean_weights(p: np.ndarray, degeneracy_tol: float = DEFAULT_DEGENERACY_TOL) -> np.ndarray:
    """Matrix ``W[m, n]`` of logarithmic means of positive eigenvalues.

    Falls back to the arithmetic mean where ``|p_m - p_n| <= tol * max``.
    """
    p = np.asarray(p, dtype=np.float64)
    if np.any(p <= 0):
        raise NonPositiveEigenvalue(f"eigenvalues must be positive, min is {p.min():.3e}")
    pm = p[:, None]
    pn = p[None, :]
    diff = pm - pn
    close = np.abs(diff) <= degeneracy_tol * np.maximum(pm, pn)
    with np.errstate(divide="ignore", invalid="ignore"):
        # log1p keeps the denominator accurate for nearby eigenvalues
        lm = diff / np.log1p(diff / pn)
    return np.where(close, 0.5 * (pm + pn), lm)


def rho_weighted_from_spectrum(
    A: np.ndarray, spec: Spectrum, degeneracy_tol: float = DEFAULT_DEGENERACY_TOL
) -> np.ndarray:
    """``A_rho`` given an already floored spectrum of ``rho``."""
    V = spec.vectors
    At = V.conj().T @ A @ V
    return V @ (At * log_mean_weights(spec.values, degeneracy_tol)) @ V.conj().T


def rho_weighted(
    A, rho, degeneracy_tol: float = DEFAULT_DEGENERACY_TOL, eps: float | None = None
) -> np.ndarray:
    """Return ``A_rho = int_0^1 rho^l A rho^(1-l) dl``.

    Eigenvalues of ``rho`` below ``eps`` (default ``1e-8 tr(rho)/dim``) are
    raised to ``eps`` first; pass ``eps=0`` to disable the floor.
    """
    A = as_operator(A, "A")
    M = _matrix(rho)
    if A.shape != M.shape:
        raise DimensionMismatch(f"A has shape {A.shape}, rho has shape {M.shape}")
    spec = floored_spectrum(rho, eps)
    return rho_weighted_from_spectrum(A, spec, degeneracy_tol)


def check_arho_identity(
    A, rho, degeneracy_tol: float = DEFAULT_DEGENERACY_TOL, eps: float | None = None
) -> float:
    """Largest entry of ``|[A_rho, ln rho] - [A, rho]|``."""
    A = as_operator(A, "A")
    M = _matrix(rho)
    if A.shape != M.shape:
        raise DimensionMismatch(f"A has shape {A.shape}, rho has shape {M.shape}")
    spec = floored_spectrum(rho, eps)
    Arho = rho_weighted_from_spectrum(A, spec, degeneracy_tol)
    log_rho = matrix_function(None, np.log, spectrum=spec)
    return float(np.max(np.abs(commutator(Arho, log_rho) - commutator(A, M))))


def regularized_inverse(rho, eps: float | None = None) -> np.ndarray:
    """``rho^{-1}`` with eigenvalues floored at ``eps`` before inversion."""
    if eps is not None and eps <= 0:
        raise ValueError("eps must be positive")
    spec = floored_spectrum(rho, eps)
    return hermitize(spec.reconstruct(1.0 / spec.values))


def gibbs_state(H, T_e: float, consts: PhysicalConstants = PhysicalConstants()) -> DensityMatrix:
    """Normalized ``exp(-H / (k_B T_e))`` with the ground energy shifted to zero."""
    if not T_e > 0:
        raise ValueError(f"T_e must be positive, got {T_e}")
    H = as_operator(H, "H")
    if hermiticity_defect(H) > HERMITICITY_TOL:
        raise NotHermitian("Hamiltonian is not self-adjoint")
    spec = hermitian_eig(H)
    w = np.exp(-(spec.values - spec.values[0]) / (consts.k_B * T_e))
    return DensityMatrix(hermitize(spec.reconstruct(w / w.sum())))


def expectation(A, rho) -> complex:
    """``tr(rho A)``."""
    A = np.asarray(A, dtype=np.complex128)
    M = _matrix(rho)
    if A.shape != M.shape:
        raise DimensionMismatch(f"A has shape {A.shape}, rho has shape {M.shape}")
    return complex(np.einsum("ij,ji->", M, A))


def purity(rho) -> float:
    M = _matrix(rho)
    return float(np.einsum("ij,ji->", M, M).real)


def trace_distance(rho1, rho2) -> float:
    """``(1/2) tr|rho1 - rho2|``."""
    M1, M2 = _matrix(rho1), _matrix(rho2)
    if M1.shape != M2.shape:
        raise DimensionMismatch(f"shapes {M1.shape} and {M2.shape}")
    D = hermitize(M1 - M2)
    return 0.5 * float(np.sum(np.abs(hermitian_eig(D).values)))
