"""Concrete quantum systems used for validation."""

from __future__ import annotations

import numpy as np

from .density import PhysicalConstants
from .oracle import ModelSpec

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)


def lowering_operator(dim: int) -> np.ndarray:
    """Truncated annihilation operator, ``a|n> = sqrt(n)|n-1>``."""
    return np.diag(np.sqrt(np.arange(1, dim, dtype=np.float64)), k=1).astype(np.complex128)


def harmonic_oscillator(
    dim: int, omega: float = 1.0, mass: float = 1.0, consts: PhysicalConstants = PhysicalConstants()
) -> ModelSpec:
    """Truncated oscillator with the position operator as coupling.

    ``H = hbar omega (n + 1/2)`` and ``Q = sqrt(hbar/(2 m omega)) (a + a^H)``,
    which is tridiagonal: it only connects neighbouring levels.
    """
    if dim < 2:
        raise ValueError(f"oscillator needs dim >= 2, got {dim}")
    if not (omega > 0 and mass > 0):
        raise ValueError("omega and mass must be positive")
    n = np.arange(dim, dtype=np.float64)
    H = np.diag(consts.hbar * omega * (n + 0.5)).astype(np.complex128)
    a = lowering_operator(dim)
    Q = np.sqrt(consts.hbar / (2.0 * mass * omega)) * (a + a.conj().T)
    return ModelSpec(H, Q, name="oscillator")


def two_level(omega: float = 1.0, consts: PhysicalConstants = PhysicalConstants()) -> ModelSpec:
    """``H = (hbar omega / 2) sigma_z`` coupled through ``Q = sigma_x``."""
    if not omega > 0:
        raise ValueError("omega must be positive")
    return ModelSpec(0.5 * consts.hbar * omega * SIGMA_Z, SIGMA_X.copy(), name="two-level")


CATALOG = {
    "oscillator": harmonic_oscillator,
    "two-level": two_level,
}
