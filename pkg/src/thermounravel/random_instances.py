"""Random operators and density matrices for property checks."""

from __future__ import annotations

import numpy as np


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    Z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    Qm, R = np.linalg.qr(Z)
    d = np.diag(R)
    return Qm * (d / np.abs(d))


def random_hermitian(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    """GUE-like sample normalized to spectral norm ``scale``."""
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    A = 0.5 * (X + X.conj().T)
    return scale * A / np.linalg.norm(A, 2)


def random_matrix(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * X / np.linalg.norm(X, 2)


def random_density(rng: np.random.Generator, n: int, min_eig: float = 1e-3) -> np.ndarray:
    """Full-rank density matrix with every eigenvalue >= ``min_eig``."""
    if n * min_eig >= 1:
        raise ValueError("min_eig too large for dimension")
    p = min_eig + (1 - n * min_eig) * rng.dirichlet(np.ones(n))
    U = random_unitary(rng, n)
    rho = (U * p) @ U.conj().T
    return 0.5 * (rho + rho.conj().T)
