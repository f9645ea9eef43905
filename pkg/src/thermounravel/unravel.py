"""Piecewise deterministic jump process whose second moment solves the master equation.

Each member ``psi`` of an ensemble either jumps, ``psi -> Qt psi`` with rate
``gamma``, or follows the modified Schroedinger equation
``dpsi/dt = -(i/hbar) H psi + Lam psi``.  The jump operator

    Qt  = alpha (Q + beta K),          K = [Q, H]_rho rho^{-1}

and the friction operator

    Lam = (gamma/2) (1 - alpha^2 Q^2 + alpha^2 beta^2 K^2)

depend on the current density matrix, which is taken from the ensemble
itself (one mean-field average per time step).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .density import (
    DEFAULT_DEGENERACY_TOL,
    DensityMatrix,
    PhysicalConstants,
    floored_spectrum,
    rho_weighted_from_spectrum,
)
from .errors import (
    DegenerateCoupling,
    DimensionMismatch,
    EnsembleCollapse,
    StepTooLarge,
    ZeroBracket,
)
from .linalg import commutator, hermitian_eig, hermitize, spectral_norm
from .oracle import EnvironmentSpec, ModelSpec, step_schedule

JUMP_RESOLUTION_LIMIT = 0.1
PROPAGATOR_LIMIT = 1.0
DEGENERATE_BRACKET = 1e-14
COLLAPSE_WINDOW = (0.1, 10.0)

# Philox counter word 3 separates the independent random streams of a run
_STREAM_JUMPS = 0
_STREAM_INIT = 1


@dataclass(frozen=True)
class AlphaPolicy:
    """How the jump amplitude ``alpha`` is chosen.

    ``exact`` solves the full normalization condition, ``approximate`` uses
    ``alpha^2 tr(Q rho Q) = 1`` and ``fixed`` returns ``value``.
    """

    kind: str = "exact"
    value: float | None = None

    def __post_init__(self):
        if self.kind not in ("exact", "approximate", "fixed"):
            raise ValueError(f"unknown alpha policy {self.kind!r}")
        if self.kind == "fixed" and not (self.value is not None and self.value > 0):
            raise ValueError("fixed alpha policy needs a positive value")

    @classmethod
    def parse(cls, obj) -> "AlphaPolicy":
        if isinstance(obj, AlphaPolicy):
            return obj
        if obj in ("exact",):
            return cls("exact")
        if obj in ("approximate", "approximate-trQrhoQ"):
            return cls("approximate")
        if isinstance(obj, dict) and set(obj) == {"fixed"}:
            return cls("fixed", float(obj["fixed"]))
        if isinstance(obj, (int, float)) and not isinstance(obj, bool):
            return cls("fixed", float(obj))
        raise ValueError(f"cannot interpret alpha policy {obj!r}")

    def to_json(self):
        if self.kind == "fixed":
            return {"fixed": self.value}
        return "exact" if self.kind == "exact" else "approximate-trQrhoQ"


@dataclass(frozen=True)
class JumpParameters:
    alpha: float
    beta: float
    gamma: float
    gamma_alpha_sq: float
    alpha_policy: AlphaPolicy = field(default_factory=AlphaPolicy)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.gamma < 0 or self.gamma_alpha_sq < 0:
            raise ValueError("gamma and gamma*alpha^2 must be non-negative")
        if abs(self.gamma * self.alpha**2 - self.gamma_alpha_sq) > 1e-12 * max(1.0, self.gamma_alpha_sq):
            raise ValueError("gamma * alpha^2 inconsistent with gamma_alpha_sq")

    @classmethod
    def from_values(cls, alpha: float, beta: float, gamma: float) -> "JumpParameters":
        """Arbitrary parameter triple, not tied to any environment."""
        return cls(alpha, beta, gamma, gamma * alpha**2, AlphaPolicy("fixed", alpha))


@dataclass(frozen=True)
class CouplingTerms:
    """Density-dependent building blocks shared by the jump and friction operators."""

    rho: np.ndarray  # floored density matrix
    rho_inv: np.ndarray
    QH_rho: np.ndarray  # [Q, H]_rho, anti-self-adjoint
    K: np.ndarray  # [Q, H]_rho rho^{-1}


def coupling_terms(
    rho, model: ModelSpec, eps: float | None = None, degeneracy_tol: float = DEFAULT_DEGENERACY_TOL
) -> CouplingTerms:
    M = rho.op if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=np.complex128)
    if M.shape != model.H.shape:
        raise DimensionMismatch(f"rho has shape {M.shape}, model has dim {model.dim}")
    spec = floored_spectrum(rho if isinstance(rho, DensityMatrix) else hermitize(M), eps)
    rho_f = hermitize(spec.reconstruct())
    rho_inv = hermitize(spec.reconstruct(1.0 / spec.values))
    B = rho_weighted_from_spectrum(commutator(model.Q, model.H), spec, degeneracy_tol)
    return CouplingTerms(rho_f, rho_inv, B, B @ rho_inv)


def compute_beta(env: EnvironmentSpec) -> float:
    """``beta = c_hs / (2 k_B c_hh)``."""
    if env.c_hh == 0:
        raise ZeroBracket("beta is undefined for c_hh = 0")
    return env.c_hs / (2.0 * env.consts.k_B * env.c_hh)


def compute_gamma_alpha_sq(env: EnvironmentSpec) -> float:
    """``gamma alpha^2 = 2 c_hh``."""
    return 2.0 * env.c_hh


def normalization_bracket(terms: CouplingTerms, beta: float, model: ModelSpec) -> float:
    """``tr(Q rho Q) - beta^2 tr([Q,H]_rho rho^{-1} [Q,H]_rho)``."""
    Q = model.Q
    tr_qrq = np.einsum("ij,jk,ki->", Q, terms.rho, Q).real
    tr_brb = np.einsum("ij,ji->", terms.K, terms.QH_rho).real
    return float(tr_qrq - beta**2 * tr_brb)


def solve_alpha(
    rho,
    beta: float,
    model: ModelSpec,
    policy: AlphaPolicy = AlphaPolicy(),
    eps: float | None = None,
    degeneracy_tol: float = DEFAULT_DEGENERACY_TOL,
    terms: CouplingTerms | None = None,
) -> float:
    """Positive ``alpha`` according to ``policy``."""
    policy = AlphaPolicy.parse(policy)
    if policy.kind == "fixed":
        return policy.value
    if terms is None:
        terms = coupling_terms(rho, model, eps, degeneracy_tol)
    b = normalization_bracket(terms, beta if policy.kind == "exact" else 0.0, model)
    if b <= DEGENERATE_BRACKET:
        raise DegenerateCoupling(f"normalization bracket {b:.3e} is not positive")
    return 1.0 / math.sqrt(b)


def resolve_parameters(
    rho,
    model: ModelSpec,
    env: EnvironmentSpec,
    policy: AlphaPolicy = AlphaPolicy(),
    eps: float | None = None,
    degeneracy_tol: float = DEFAULT_DEGENERACY_TOL,
    terms: CouplingTerms | None = None,
) -> JumpParameters:
    """Full parameter set: beta and gamma*alpha^2 from the environment, alpha per policy."""
    policy = AlphaPolicy.parse(policy)
    if env.c_hh == 0:
        if env.c_hs != 0:
            raise ZeroBracket("c_hh = 0 with c_hs != 0 cannot be unraveled")
        beta = 0.0
    else:
        beta = compute_beta(env)
    if terms is None:
        terms = coupling_terms(rho, model, eps, degeneracy_tol)
    alpha = solve_alpha(rho, beta, model, policy, terms=terms)
    ga2 = compute_gamma_alpha_sq(env)
    return JumpParameters(alpha, beta, ga2 / alpha**2, ga2, policy)


def _terms(rho, model, eps, degeneracy_tol, terms):
    return terms if terms is not None else coupling_terms(rho, model, eps, degeneracy_tol)


def jump_operator(
    rho,
    params: JumpParameters,
    model: ModelSpec,
    eps: float | None = None,
    degeneracy_tol: float = DEFAULT_DEGENERACY_TOL,
    terms: CouplingTerms | None = None,
) -> np.ndarray:
    """``Qt = alpha (Q + beta [Q,H]_rho rho^{-1})`` (not self-adjoint in general)."""
    t = _terms(rho, model, eps, degeneracy_tol, terms)
    return params.alpha * (model.Q + params.beta * t.K)


def friction_operator(
    rho,
    params: JumpParameters,
    model: ModelSpec,
    eps: float | None = None,
    degeneracy_tol: float = DEFAULT_DEGENERACY_TOL,
    terms: CouplingTerms | None = None,
) -> np.ndarray:
    """``Lam = (gamma/2) [1 - alpha^2 Q^2 + alpha^2 beta^2 K^2]``."""
    t = _terms(rho, model, eps, degeneracy_tol, terms)
    a2 = params.alpha**2
    eye = np.eye(model.dim, dtype=np.complex128)
    Q = model.Q
    return 0.5 * params.gamma * (eye - a2 * (Q @ Q) + a2 * params.beta**2 * (t.K @ t.K))


def second_moment_identity_residual(
    rho,
    params: JumpParameters,
    model: ModelSpec,
    eps: float | None = None,
    degeneracy_tol: float = DEFAULT_DEGENERACY_TOL,
) -> float:
    """Largest entry of the mismatch between the jump-process second-moment
    generator and the dissipative part of the master equation.

    Compares ``Lam rho + rho Lam^H + gamma (Qt rho Qt^H - rho)`` with
    ``-gamma alpha^2 beta [Q,[Q,H]_rho] - (gamma alpha^2 / 2) [Q,[Q,rho]]``.
    Holds for any alpha, beta, gamma.
    """
    t = coupling_terms(rho, model, eps, degeneracy_tol)
    Qt = jump_operator(rho, params, model, terms=t)
    Lam = friction_operator(rho, params, model, terms=t)
    r, Q, g = t.rho, model.Q, params.gamma
    lhs = Lam @ r + r @ Lam.conj().T + g * (Qt @ r @ Qt.conj().T - r)
    ga2 = g * params.alpha**2
    rhs = -ga2 * params.beta * commutator(Q, t.QH_rho) - 0.5 * ga2 * commutator(Q, commutator(Q, r))
    return float(np.max(np.abs(lhs - rhs)))


# --- trajectories -----------------------------------------------------------


def apply_operator(M: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Return ``M psi`` for a single vector or for each row of a batch.

    The sum over components is accumulated in a fixed order so each row's
    result does not depend on how a batch is split.
    """
    M = np.asarray(M, dtype=np.complex128)
    psi = np.asarray(psi, dtype=np.complex128)
    if psi.shape[-1] != M.shape[1]:
        raise DimensionMismatch(f"operator dim {M.shape[1]} vs state dim {psi.shape[-1]}")
    out = np.zeros(psi.shape[:-1] + (M.shape[0],), dtype=np.complex128)
    for i in range(M.shape[0]):
        acc = out[..., i]
        for k in range(M.shape[1]):
            if M[i, k] != 0:
                acc += M[i, k] * psi[..., k]
    return out


def jump_step(psi: np.ndarray, Qtilde: np.ndarray) -> np.ndarray:
    """``psi -> Qt psi`` without renormalization."""
    return apply_operator(Qtilde, psi)


def rk4_propagator(H: np.ndarray, Lam: np.ndarray, dt: float, consts: PhysicalConstants = PhysicalConstants()):
    """One classical RK4 step of ``dpsi/dt = G psi`` as a matrix, ``G = -(i/hbar)H + Lam``.

    For a constant linear generator RK4 is the degree-4 Taylor polynomial of
    ``exp(dt G)``.
    """
    G = -1j / consts.hbar * np.asarray(H, dtype=np.complex128) + np.asarray(Lam, dtype=np.complex128)
    z = dt * spectral_norm(G)
    if z > PROPAGATOR_LIMIT:
        raise StepTooLarge(f"dt*|G| = {z:.3g} exceeds {PROPAGATOR_LIMIT}")
    X = dt * G
    eye = np.eye(G.shape[0], dtype=np.complex128)
    # Horner: I + X(I + X/2(I + X/3(I + X/4)))
    P = eye + X / 4.0
    P = eye + (X @ P) / 3.0
    P = eye + (X @ P) / 2.0
    return eye + X @ P


def deterministic_step(
    psi: np.ndarray,
    H: np.ndarray,
    Lambda: np.ndarray,
    dt: float,
    consts: PhysicalConstants = PhysicalConstants(),
) -> np.ndarray:
    """Advance ``dpsi/dt = -(i/hbar) H psi + Lam psi`` by one RK4 step."""
    return apply_operator(rk4_propagator(H, Lambda, dt, consts), psi)


def member_uniforms(seed: int, step: int, n: int, stream: int = _STREAM_JUMPS) -> np.ndarray:
    """Uniform draws for step ``step``; entry ``i`` belongs to member ``i``.

    Counter-based (Philox keyed by the run seed), so any member's draw at any
    step is fixed regardless of how members are scheduled.
    """
    bg = np.random.Philox(key=int(seed), counter=[0, 0, int(step), stream])
    return np.random.Generator(bg).random(n)


@dataclass
class Ensemble:
    """State vectors (one row per member) with a run seed.

    Members are not normalized individually; only the mean squared norm is
    expected to stay near one.
    """

    psi: np.ndarray
    seed: int = 0
    time: float = 0.0

    def __post_init__(self):
        self.psi = np.array(self.psi, dtype=np.complex128)
        if self.psi.ndim != 2 or self.psi.shape[0] < 1 or self.psi.shape[1] < 1:
            raise ValueError(f"ensemble array must be (N, dim), got {self.psi.shape}")
        if not np.all(np.isfinite(self.psi)):
            raise ValueError("ensemble contains non-finite amplitudes")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def size(self) -> int:
        return self.psi.shape[0]

    @property
    def dim(self) -> int:
        return self.psi.shape[1]

    def mean_squared_norm(self) -> float:
        return float(np.mean(np.sum(np.abs(self.psi) ** 2, axis=1)))

    @classmethod
    def from_pure(cls, psi, size: int, seed: int = 0) -> "Ensemble":
        """Every member equal to the normalized ``psi``."""
        psi = np.asarray(psi, dtype=np.complex128)
        psi = psi / np.linalg.norm(psi)
        return cls(np.tile(psi, (size, 1)), seed)

    @classmethod
    def from_density(cls, rho, size: int, seed: int = 0) -> "Ensemble":
        """Members drawn from the eigenstates of ``rho`` with its eigenvalues as weights."""
        M = rho.op if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=np.complex128)
        spec = hermitian_eig(M)
        p = np.clip(spec.values, 0.0, None)
        p = p / p.sum()
        bg = np.random.Philox(key=int(seed), counter=[0, 0, 0, _STREAM_INIT])
        idx = np.random.Generator(bg).choice(len(p), size=size, p=p)
        return cls(spec.vectors[:, idx].T.copy(), seed)


def second_moment(psi: np.ndarray) -> np.ndarray:
    """``(1/N) sum_i |psi_i><psi_i|`` without renormalization."""
    return np.einsum("ni,nj->ij", psi, psi.conj()) / psi.shape[0]


def ensemble_density(ens: Ensemble) -> DensityMatrix:
    """Empirical density matrix, symmetrized and renormalized to unit trace.

    The raw trace is ``ens.mean_squared_norm()``.
    """
    raw = second_moment(ens.psi)
    tr = np.trace(raw).real
    if not tr > 0:
        raise EnsembleCollapse("ensemble has zero norm")
    return DensityMatrix(hermitize(raw / tr))


@dataclass(frozen=True)
class UnravelConfig:
    dt: float
    t_end: float
    record_every: int = 1
    alpha_policy: AlphaPolicy = field(default_factory=AlphaPolicy)
    eps_floor: float | None = None
    degeneracy_tol: float = DEFAULT_DEGENERACY_TOL
    workers: int = 1
    collapse_window: tuple[float, float] = COLLAPSE_WINDOW

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if self.record_every < 1 or self.workers < 1:
            raise ValueError("record_every and workers must be >= 1")
        object.__setattr__(self, "alpha_policy", AlphaPolicy.parse(self.alpha_policy))


@dataclass(frozen=True)
class UnravelRecord:
    time: float
    rho: np.ndarray
    trace_raw: float
    jumps_total: int


@dataclass(frozen=True)
class StepDiagnostics:
    time: float
    trace_raw: float
    jumps: int
    alpha: float
    beta: float
    gamma: float


@dataclass
class UnravelResult:
    records: list[UnravelRecord]
    diagnostics: list[StepDiagnostics]
    final: Ensemble


def _chunks(n: int, workers: int) -> list[slice]:
    bounds = np.linspace(0, n, min(workers, n) + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _advance(psi, jumped_mask, propagator, Qt, out, sl):
    block = psi[sl]
    drift = apply_operator(propagator, block)
    hop = apply_operator(Qt, block)
    out[sl] = np.where(jumped_mask[sl, None], hop, drift)


def run_unraveling(
    ens0: Ensemble, model: ModelSpec, env: EnvironmentSpec, config: UnravelConfig
) -> UnravelResult:
    """Propagate the ensemble with mean-field operators refreshed every step.

    Per step: empirical rho (renormalized) -> operators and parameters -> each
    member jumps with probability ``1 - exp(-gamma dt)``, otherwise takes one
    RK4 step of the modified Schroedinger equation.
    """
    if ens0.dim != model.dim:
        raise DimensionMismatch(f"ensemble dim {ens0.dim} vs model dim {model.dim}")
    if ens0.size < 2:
        raise ValueError("unraveling needs at least two members")
    psi = ens0.psi.copy()
    n = ens0.size
    steps = step_schedule(config.dt, config.t_end)
    lo, hi = config.collapse_window
    records: list[UnravelRecord] = []
    diags: list[StepDiagnostics] = []
    jumps_total = 0
    t = ens0.time
    pool = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    slices = _chunks(n, config.workers)
    try:
        for k in range(len(steps) + 1):
            raw = second_moment(psi)
            tr = float(np.trace(raw).real)
            if not lo <= tr <= hi:
                raise EnsembleCollapse(f"mean squared norm {tr:.4g} left [{lo}, {hi}] at t={t:.6g}")
            rho = hermitize(raw / tr)
            if k % config.record_every == 0 or k == len(steps):
                records.append(UnravelRecord(t, rho, tr, jumps_total))
            if k == len(steps):
                break
            h = steps[k]
            terms = coupling_terms(rho, model, config.eps_floor, config.degeneracy_tol)
            params = resolve_parameters(rho, model, env, config.alpha_policy, terms=terms)
            if params.gamma * h > JUMP_RESOLUTION_LIMIT:
                raise StepTooLarge(
                    f"gamma*dt = {params.gamma * h:.3g} exceeds {JUMP_RESOLUTION_LIMIT} at t={t:.6g}"
                )
            Qt = jump_operator(rho, params, model, terms=terms)
            Lam = friction_operator(rho, params, model, terms=terms)
            prop = rk4_propagator(model.H, Lam, h, env.consts)
            mask = member_uniforms(ens0.seed, k, n) < -math.expm1(-params.gamma * h)
            new = np.empty_like(psi)
            if pool is None:
                _advance(psi, mask, prop, Qt, new, slice(0, n))
            else:
                list(pool.map(lambda sl: _advance(psi, mask, prop, Qt, new, sl), slices))
            psi = new
            njump = int(mask.sum())
            jumps_total += njump
            diags.append(StepDiagnostics(t, tr, njump, params.alpha, params.beta, params.gamma))
            t = ens0.time + (k + 1) * config.dt if h == config.dt else ens0.time + config.t_end
    finally:
        if pool is not None:
            pool.shutdown()
    return UnravelResult(records, diags, Ensemble(psi, ens0.seed, t))
