"""Deterministic reference solution of the nonlinear thermodynamic master equation.

    d rho/dt = (i/hbar)[rho, H] - (c_hs/k_B)[Q, [Q, H]_rho] - c_hh [Q, [Q, rho]]

``c_hh`` and ``c_hs`` are the energy-energy and energy-entropy dissipative
brackets of the environment, supplied as plain numbers.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .density import (
    DEFAULT_DEGENERACY_TOL,
    DensityMatrix,
    PhysicalConstants,
    floored_spectrum,
    rho_weighted_from_spectrum,
)
from .errors import DimensionMismatch, NotHermitian, PositivityLost, StepTooLarge, TraceDrift
from .linalg import as_operator, commutator, hermitian_eig, hermiticity_defect, hermitize, spectral_norm

STABILITY_LIMIT = 0.1
POSITIVITY_WARN = -1e-6
EQUILIBRIUM_TOL = 1e-12


@dataclass(frozen=True)
class ModelSpec:
    """Hamiltonian ``H`` and self-adjoint coupling operator ``Q``."""

    H: np.ndarray
    Q: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        H = as_operator(self.H, "H")
        Q = as_operator(self.Q, "Q")
        if H.shape != Q.shape:
            raise DimensionMismatch(f"H has shape {H.shape}, Q has shape {Q.shape}")
        for label, M in (("H", H), ("Q", Q)):
            if hermiticity_defect(M) > 1e-10:
                raise NotHermitian(f"{label} is not self-adjoint")
        object.__setattr__(self, "H", hermitize(H))
        object.__setattr__(self, "Q", hermitize(Q))

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    def scaled_coupling(self, c: float) -> "ModelSpec":
        return ModelSpec(self.H, c * self.Q, self.name)


@dataclass(frozen=True)
class EnvironmentSpec:
    """The two bracket scalars plus the optional environment temperature.

    With ``equilibrium=True`` the condition ``T_e * c_hs == c_hh`` is checked.
    """

    c_hh: float
    c_hs: float
    T_e: float | None = None
    consts: PhysicalConstants = field(default_factory=PhysicalConstants)
    equilibrium: bool = False

    def __post_init__(self):
        if self.c_hh < 0:
            raise ValueError(f"c_hh must be non-negative, got {self.c_hh}")
        if self.T_e is not None and not self.T_e > 0:
            raise ValueError(f"T_e must be positive, got {self.T_e}")
        if self.equilibrium:
            if self.T_e is None:
                raise ValueError("equilibrium environment needs T_e")
            if abs(self.T_e * self.c_hs - self.c_hh) > EQUILIBRIUM_TOL * max(1.0, abs(self.c_hh)):
                raise ValueError(
                    f"equilibrium condition violated: T_e*c_hs={self.T_e * self.c_hs!r}, c_hh={self.c_hh!r}"
                )

    @classmethod
    def at_equilibrium(cls, c_hh: float, T_e: float, consts: PhysicalConstants = PhysicalConstants()):
        return cls(c_hh=c_hh, c_hs=c_hh / T_e, T_e=T_e, consts=consts, equilibrium=True)

    def scaled(self, factor: float) -> "EnvironmentSpec":
        """Both brackets multiplied by ``factor``."""
        return EnvironmentSpec(self.c_hh * factor, self.c_hs * factor, self.T_e, self.consts, self.equilibrium)


def _as_matrix(rho) -> np.ndarray:
    return rho.op if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=np.complex128)


def master_rhs(
    rho,
    model: ModelSpec,
    env: EnvironmentSpec,
    eps: float | None = None,
    degeneracy_tol: float = DEFAULT_DEGENERACY_TOL,
) -> np.ndarray:
    """Time derivative of ``rho`` under the thermodynamic master equation."""
    M = _as_matrix(rho)
    if M.shape != model.H.shape:
        raise DimensionMismatch(f"rho has shape {M.shape}, model has dim {model.dim}")
    H, Q = model.H, model.Q
    hbar, k_B = env.consts.hbar, env.consts.k_B
    out = (1j / hbar) * commutator(M, H)
    if env.c_hs != 0.0:
        spec = floored_spectrum(hermitize(M), eps)
        QH_rho = rho_weighted_from_spectrum(commutator(Q, H), spec, degeneracy_tol)
        out -= (env.c_hs / k_B) * commutator(Q, QH_rho)
    if env.c_hh != 0.0:
        out -= env.c_hh * commutator(Q, commutator(Q, M))
    return out


def stability_number(model: ModelSpec, env: EnvironmentSpec, dt: float) -> float:
    """``dt * (|H|/hbar + c_hh |Q|^2)``, required to stay below ``STABILITY_LIMIT``."""
    return dt * (spectral_norm(model.H) / env.consts.hbar + env.c_hh * spectral_norm(model.Q) ** 2)


def rk4_step(rho: np.ndarray, model, env, dt, eps=None, degeneracy_tol=DEFAULT_DEGENERACY_TOL) -> np.ndarray:
    f = lambda r: master_rhs(r, model, env, eps, degeneracy_tol)  # noqa: E731
    k1 = f(rho)
    k2 = f(rho + 0.5 * dt * k1)
    k3 = f(rho + 0.5 * dt * k2)
    k4 = f(rho + dt * k3)
    return hermitize(rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def step_schedule(dt: float, t_end: float) -> list[float]:
    """Step sizes covering ``[0, t_end]``; the last one may be shorter."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t_end < 0:
        raise ValueError(f"t_end must be non-negative, got {t_end}")
    n_full = math.floor(t_end / dt + 1e-9)
    steps = [dt] * n_full
    rest = t_end - n_full * dt
    if rest > 1e-9 * dt:
        steps.append(rest)
    return steps


def integrate_oracle(
    rho0,
    model: ModelSpec,
    env: EnvironmentSpec,
    dt: float,
    t_end: float,
    record_every: int = 1,
    eps: float | None = None,
    degeneracy_tol: float = DEFAULT_DEGENERACY_TOL,
) -> list[tuple[float, np.ndarray]]:
    """Integrate the master equation with classical RK4.

    Returns ``(time, rho)`` pairs at ``t = 0``, every ``record_every`` steps,
    and at ``t_end``.  Density matrices are re-symmetrized after every step;
    negative eigenvalues below ``-1e-6`` and trace drift beyond 1e-9 are
    reported as warnings, never corrected.
    """
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    steps = step_schedule(dt, t_end)
    s = stability_number(model, env, dt)
    if s > STABILITY_LIMIT:
        raise StepTooLarge(f"dt*(|H|/hbar + c_hh|Q|^2) = {s:.3g} exceeds {STABILITY_LIMIT}")
    rho = hermitize(_as_matrix(rho0).copy())
    t = 0.0
    out = [(0.0, rho.copy())]
    positivity_flagged = False
    for k, h in enumerate(steps, start=1):
        rho = rk4_step(rho, model, env, h, eps, degeneracy_tol)
        t = k * dt if h == dt else t_end
        if k % record_every == 0 or k == len(steps):
            lam_min = hermitian_eig(rho).values[0]
            if lam_min < POSITIVITY_WARN and not positivity_flagged:
                warnings.warn(f"min eigenvalue {lam_min:.3e} at t={t:.6g}", PositivityLost, stacklevel=2)
                positivity_flagged = True
            drift = abs(np.trace(rho).real - 1.0)
            if drift > 1e-9:
                warnings.warn(f"trace drift {drift:.3e} at t={t:.6g}", TraceDrift, stacklevel=2)
            out.append((t, rho.copy()))
    return out
