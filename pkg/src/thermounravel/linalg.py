"""Dense complex matrix helpers and the Hermitian eigensolver.

Every matrix function used elsewhere in the package (powers and logarithms of
density matrices, Gibbs exponentials) goes through :func:`hermitian_eig`,
a cyclic Jacobi solver compiled with numba.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np

from .errors import DimensionMismatch, DomainError, NoConvergence, NotHermitian

DEFAULT_HERMITICITY_TOL = 1e-10
MAX_SWEEPS = 80
# first component whose modulus exceeds this fixes the eigenvector phase
PHASE_TOL = 1e-12


@dataclass(frozen=True)
class Spectrum:
    """Eigen-decomposition ``A = V diag(values) V^H`` of a Hermitian matrix.

    ``values`` are ascending, ``vectors`` holds the eigenvectors as columns.
    """

    values: np.ndarray
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def reconstruct(self, values: np.ndarray | None = None) -> np.ndarray:
        """Return ``V diag(values) V^H`` (defaults to the stored eigenvalues)."""
        lam = self.values if values is None else values
        V = self.vectors
        return (V * lam) @ V.conj().T


def as_operator(A, name: str = "operator") -> np.ndarray:
    """Coerce to a finite square complex128 array."""
    M = np.asarray(A, dtype=np.complex128)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise DimensionMismatch(f"{name} must be a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    return M


def hermiticity_defect(A: np.ndarray) -> float:
    """Largest entry of ``|A - A^H|``."""
    A = np.asarray(A)
    return float(np.max(np.abs(A - A.conj().T))) if A.size else 0.0


def hermitize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.conj().T)


def dagger(A: np.ndarray) -> np.ndarray:
    return A.conj().T


def commutator(A, B) -> np.ndarray:
    """Return ``AB - BA``."""
    A = np.asarray(A, dtype=np.complex128)
    B = np.asarray(B, dtype=np.complex128)
    if A.shape != B.shape or A.ndim != 2:
        raise DimensionMismatch(f"commutator of shapes {A.shape} and {B.shape}")
    return A @ B - B @ A


@numba.njit(cache=True)
def _jacobi_sweeps(A, max_sweeps):
    """Cyclic complex Jacobi.  Returns (diag, V, sweeps); sweeps < 0 means failure."""
    n = A.shape[0]
    V = np.eye(n, dtype=np.complex128)
    fro = 0.0
    for i in range(n):
        for j in range(n):
            fro += A[i, j].real ** 2 + A[i, j].imag ** 2
    fro = np.sqrt(fro)
    target = 1e-16 * fro
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += A[p, q].real ** 2 + A[p, q].imag ** 2
        off = np.sqrt(off)
        if off <= target or off == 0.0:
            d = np.empty(n)
            for i in range(n):
                d[i] = A[i, i].real
            return d, V, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                mag = abs(apq)
                if mag == 0.0:
                    continue
                ph = apq / mag
                app = A[p, p].real
                aqq = A[q, q].real
                theta = (aqq - app) / (2.0 * mag)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # G = diag-phase * real rotation; A <- G^H A G, V <- V G
                gpp = c + 0j
                gpq = s + 0j
                gqp = -s * np.conj(ph)
                gqq = c * np.conj(ph)
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = akp * gpp + akq * gqp
                    A[k, q] = akp * gpq + akq * gqq
                for k in range(n):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = np.conj(gpp) * apk + np.conj(gqp) * aqk
                    A[q, k] = np.conj(gpq) * apk + np.conj(gqq) * aqk
                A[p, q] = 0.0
                A[q, p] = 0.0
                A[p, p] = A[p, p].real
                A[q, q] = A[q, q].real
                for k in range(n):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = vkp * gpp + vkq * gqp
                    V[k, q] = vkp * gpq + vkq * gqq
    d = np.empty(n)
    for i in range(n):
        d[i] = A[i, i].real
    return d, V, -1


def _fix_phases(V: np.ndarray) -> np.ndarray:
    V = V.copy()
    for j in range(V.shape[1]):
        col = V[:, j]
        idx = np.flatnonzero(np.abs(col) > PHASE_TOL)
        if idx.size:
            z = col[idx[0]]
            V[:, j] = col * (abs(z) / z)
            V[idx[0], j] = abs(z)
    return V


def hermitian_eig(A, hermiticity_tol: float = DEFAULT_HERMITICITY_TOL) -> Spectrum:
    """Diagonalize a Hermitian matrix by cyclic Jacobi rotations.

    The input is symmetrized before decomposition.  Eigenvalues come back in
    ascending order; every eigenvector has its first non-negligible component
    made real and positive, so identical input gives identical output.

    Raises
    ------
    NotHermitian
        If ``max |A - A^H|`` exceeds ``hermiticity_tol``.
    NoConvergence
        If the off-diagonal mass has not vanished after ``MAX_SWEEPS`` sweeps.
    """
    M = as_operator(A)
    defect = hermiticity_defect(M)
    if defect > hermiticity_tol:
        raise NotHermitian(f"hermiticity defect {defect:.3e} exceeds tolerance {hermiticity_tol:.1e}")
    work = np.ascontiguousarray(hermitize(M))
    d, V, sweeps = _jacobi_sweeps(work, MAX_SWEEPS)
    if sweeps < 0:
        raise NoConvergence(f"Jacobi did not converge in {MAX_SWEEPS} sweeps")
    order = np.argsort(d, kind="stable")
    return Spectrum(values=d[order], vectors=_fix_phases(V[:, order]))


def matrix_function(
    A,
    f: Callable[[np.ndarray], np.ndarray],
    hermiticity_tol: float = DEFAULT_HERMITICITY_TOL,
    spectrum: Spectrum | None = None,
) -> np.ndarray:
    """Apply a real scalar function to a Hermitian matrix through its spectrum.

    ``f`` receives the eigenvalue array and must return an array of the same
    shape.  A precomputed ``spectrum`` of ``A`` may be passed to skip the
    decomposition.
    """
    spec = spectrum if spectrum is not None else hermitian_eig(A, hermiticity_tol)
    with np.errstate(all="ignore"):
        fv = np.asarray(f(spec.values), dtype=np.float64)
    if fv.shape != spec.values.shape:
        raise ValueError("scalar function must map the eigenvalue array elementwise")
    if not np.all(np.isfinite(fv)):
        bad = spec.values[~np.isfinite(fv)]
        raise DomainError(f"function undefined at eigenvalue(s) {bad.tolist()}")
    return hermitize(spec.reconstruct(fv))


def spectral_norm(A: np.ndarray) -> float:
    """Largest singular value (any square matrix)."""
    A = np.asarray(A)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))
