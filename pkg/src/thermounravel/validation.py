"""Named invariant checks run by ``thermounravel validate``.

Each check returns ``(passed, detail)``.  Random instances come from a fixed
seed so the report is reproducible.
"""

from __future__ import annotations

import math
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .config import SimConfig
from .density import (
    check_arho_identity,
    gibbs_state,
    regularized_inverse,
    rho_weighted,
    trace_distance,
)
from .linalg import commutator, hermitian_eig, hermiticity_defect, matrix_function
from .models import harmonic_oscillator, two_level
from .oracle import EnvironmentSpec, ModelSpec, integrate_oracle, master_rhs
from .random_instances import random_density, random_hermitian, random_matrix
from .unravel import (
    AlphaPolicy,
    Ensemble,
    JumpParameters,
    UnravelConfig,
    friction_operator,
    jump_operator,
    resolve_parameters,
    run_unraveling,
    second_moment_identity_residual,
)

SEED = 20240601


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


CHECKS: list[tuple[str, Callable]] = []


def check(name: str):
    def deco(fn):
        CHECKS.append((name, fn))
        return fn

    return deco


def _rng(offset: int = 0) -> np.random.Generator:
    return np.random.default_rng(SEED + offset)


# --- linalg_core ------------------------------------------------------------


@check("linalg.eig_reconstruction_and_unitarity")
def _eig_recon(cfg):
    rng = _rng(1)
    worst_rec = worst_uni = 0.0
    for n in range(1, 33):
        A = random_hermitian(rng, n, scale=float(rng.uniform(0.1, 10)))
        s = hermitian_eig(A)
        worst_rec = max(worst_rec, np.max(np.abs(s.reconstruct() - A)) / np.linalg.norm(A, 2))
        worst_uni = max(worst_uni, np.max(np.abs(s.vectors.conj().T @ s.vectors - np.eye(n))))
    return worst_rec <= 1e-10 and worst_uni <= 1e-12, f"reconstruction {worst_rec:.2e}, unitarity {worst_uni:.2e}"


@check("linalg.function_composition")
def _composition(cfg):
    rng = _rng(2)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 9))
        A = random_hermitian(rng, n, 2.0)
        direct = matrix_function(A, lambda x: np.exp(x / 2))
        composed = matrix_function(matrix_function(A, np.exp), np.sqrt)
        worst = max(worst, np.max(np.abs(direct - composed)))
        roundtrip = matrix_function(matrix_function(A, np.exp), np.log)
        worst = max(worst, np.max(np.abs(roundtrip - A)))
    return worst <= 1e-8, f"max deviation {worst:.2e}"


@check("linalg.commutator_antisymmetry_and_trace")
def _commutator(cfg):
    rng = _rng(3)
    antisym_ok, worst_tr = True, 0.0
    for _ in range(50):
        n = int(rng.integers(1, 9))
        A, B = random_matrix(rng, n), random_matrix(rng, n)
        antisym_ok &= bool(np.array_equal(commutator(A, B), -commutator(B, A)))
        worst_tr = max(worst_tr, abs(np.trace(commutator(A, B))))
    return antisym_ok and worst_tr <= 1e-12, f"exact antisymmetry {antisym_ok}, max |tr| {worst_tr:.2e}"


# --- density_ops ------------------------------------------------------------


@check("density.rho_weighted_linearity")
def _linearity(cfg):
    rng = _rng(4)
    worst = 0.0
    for _ in range(30):
        n = int(rng.integers(2, 7))
        rho = random_density(rng, n)
        A, B = random_matrix(rng, n), random_matrix(rng, n)
        a, b = complex(*rng.normal(size=2)), complex(*rng.normal(size=2))
        lhs = rho_weighted(a * A + b * B, rho)
        rhs = a * rho_weighted(A, rho) + b * rho_weighted(B, rho)
        worst = max(worst, np.max(np.abs(lhs - rhs)))
    return worst <= 1e-12, f"max deviation {worst:.2e}"


@check("density.commuting_reduction")
def _commuting(cfg):
    rng = _rng(5)
    worst = 0.0
    for _ in range(30):
        n = int(rng.integers(2, 7))
        rho = random_density(rng, n)
        s = hermitian_eig(rho)
        A = s.reconstruct(rng.normal(size=n))  # shares rho's eigenbasis
        Ar = rho_weighted(A, rho)
        worst = max(worst, np.max(np.abs(Ar - A @ rho)), np.max(np.abs(Ar - rho @ A)))
    return worst <= 1e-10, f"max deviation {worst:.2e}"


@check("density.hermiticity_transfer")
def _transfer(cfg):
    rng = _rng(6)
    worst = 0.0
    for _ in range(30):
        n = int(rng.integers(2, 7))
        rho = random_density(rng, n)
        A = random_matrix(rng, n)
        worst = max(worst, np.max(np.abs(rho_weighted(A, rho).conj().T - rho_weighted(A.conj().T, rho))))
    return worst <= 1e-12, f"max deviation {worst:.2e}"


@check("density.arho_log_identity")
def _arho_identity(cfg):
    rng = _rng(7)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 9))
        worst = max(worst, check_arho_identity(random_matrix(rng, n), random_density(rng, n, 1e-3)))
    return worst <= 1e-10, f"max residual {worst:.2e} over 100 pairs"


@check("density.gibbs_trace_and_order")
def _gibbs(cfg):
    ok, worst = True, 0.0
    for model in (two_level(), harmonic_oscillator(8), cfg.build_model()):
        for T in (0.3, 1.0, 5.0):
            rho = gibbs_state(model.H, T)
            worst = max(worst, abs(np.trace(rho.op).real - 1))
            E = hermitian_eig(model.H)
            pops = np.einsum("ij,jk,ki->i", E.vectors.conj().T, rho.op, E.vectors).real
            ok &= bool(np.all(np.diff(pops) <= 1e-15))
    return ok and worst <= 1e-12, f"trace error {worst:.2e}, populations non-increasing with energy: {ok}"


# --- oracle_integrator ------------------------------------------------------


def _pure(dim: int, level: int) -> np.ndarray:
    rho = np.zeros((dim, dim), dtype=np.complex128)
    rho[level, level] = 1.0
    return rho


@check("oracle.trace_and_hermiticity_10k_steps")
def _trace(cfg):
    model = two_level()
    env = EnvironmentSpec.at_equilibrium(0.25, 1.0)
    rho0 = random_density(_rng(8), 2, 0.05)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = integrate_oracle(rho0, model, env, 1e-3, 10.0, record_every=100)
    drift = max(abs(np.trace(r).real - 1) for _, r in out)
    herm = max(hermiticity_defect(r) for _, r in out)
    return drift <= 1e-9 and herm <= 1e-10, f"trace drift {drift:.2e}, hermiticity defect {herm:.2e}"


@check("oracle.gibbs_stationarity")
def _stationary(cfg):
    worst = 0.0
    for model in (harmonic_oscillator(8), two_level()):
        for T in (0.5, 1.0, 2.0):
            env = EnvironmentSpec.at_equilibrium(0.25, T)
            worst = max(worst, np.max(np.abs(master_rhs(gibbs_state(model.H, T), model, env))))
    return worst <= 1e-10, f"max |rhs| {worst:.2e}"


@check("oracle.monotone_relaxation")
def _relaxation(cfg):
    model = harmonic_oscillator(10)
    env = EnvironmentSpec.at_equilibrium(0.25, 1.0)
    g = gibbs_state(model.H, 1.0)
    out = integrate_oracle(_pure(10, 1), model, env, 0.008, 40.0, record_every=125)
    d = np.array([trace_distance(r, g) for _, r in out])
    increases = np.diff(d)
    ok = bool(np.all(increases <= 1e-12))
    return ok, f"trace distance to Gibbs {d[0]:.3f} -> {d[-1]:.2e}, largest increase {increases.max():.2e}"


# --- unraveling_engine --------------------------------------------------------


@check("unravel.second_moment_identity")
def _second_moment(cfg):
    rng = _rng(9)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 7))
        rho = random_density(rng, n, 1e-3)
        model = ModelSpec(random_hermitian(rng, n), random_hermitian(rng, n))
        p = JumpParameters.from_values(10 ** rng.uniform(-1, 1), rng.uniform(-2, 2), 10 ** rng.uniform(-1, 1))
        worst = max(worst, second_moment_identity_residual(rho, p, model))
    return worst <= 1e-10, f"max residual {worst:.2e} over 100 instances"


@check("unravel.normalization_pair")
def _normalization(cfg):
    rng = _rng(10)
    worst_jump = worst_fric = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 7))
        rho = random_density(rng, n, 1e-2)
        model = ModelSpec(random_hermitian(rng, n), random_hermitian(rng, n))
        beta = rng.uniform(-2, 2)
        env = EnvironmentSpec(c_hh=0.5, c_hs=2 * beta * 0.5)
        p = resolve_parameters(rho, model, env, AlphaPolicy("exact"))
        Qt = jump_operator(rho, p, model)
        Lam = friction_operator(rho, p, model)
        worst_jump = max(worst_jump, abs(np.trace(Qt @ rho @ Qt.conj().T).real - 1))
        worst_fric = max(worst_fric, abs(np.trace(Lam @ rho)))
    ok = worst_jump <= 1e-10 and worst_fric <= 1e-10
    return ok, f"|tr(Qt rho Qt^H) - 1| {worst_jump:.2e}, |tr(Lam rho)| {worst_fric:.2e}"


@check("unravel.coupling_scaling_invariance")
def _scaling(cfg):
    rng = _rng(11)
    worst = 0.0
    for model in (two_level(), harmonic_oscillator(6), cfg.build_model()):
        rho = random_density(rng, model.dim, 1e-2)
        env = EnvironmentSpec(0.3, 0.2)
        for c in (3.0, 0.5):
            a = master_rhs(rho, model, env)
            b = master_rhs(rho, model.scaled_coupling(c), env.scaled(1 / c**2))
            worst = max(worst, np.max(np.abs(a - b)))
    return worst <= 1e-10, f"max deviation {worst:.2e}"


@check("unravel.equilibrium_specialization")
def _equilibrium(cfg):
    worst = 0.0
    for model in (harmonic_oscillator(10), two_level()):
        T = 1.0
        env = EnvironmentSpec.at_equilibrium(0.25, T)
        rho = gibbs_state(model.H, T)
        p = resolve_parameters(rho, model, env)
        Qt = jump_operator(rho, p, model)
        Lam = friction_operator(rho, p, model)
        r, ri, Q = rho.op, regularized_inverse(rho), model.Q
        simple = 0.5 * p.alpha * (Q + r @ Q @ ri)
        lam_eq = 0.5 * p.gamma * (
            np.eye(model.dim) - 0.25 * p.alpha**2 * (3 * Q @ Q - r @ Q @ Q @ ri + Q @ r @ Q @ ri + r @ Q @ ri @ Q)
        )
        E = np.diag(model.H).real
        kT = env.consts.k_B * T
        elem = 0.5 * p.alpha * (1 + np.exp((E[None, :] - E[:, None]) / kT)) * Q
        worst = max(worst, np.max(np.abs(Qt - simple)), np.max(np.abs(Qt - elem)), np.max(np.abs(Lam - lam_eq)))
    return worst <= 1e-10, f"max deviation {worst:.2e}"


@check("unravel.detailed_balance_ratio")
def _detailed(cfg):
    model = harmonic_oscillator(10)
    env = EnvironmentSpec.at_equilibrium(0.25, 1.0)
    rho = gibbs_state(model.H, 1.0)
    p = resolve_parameters(rho, model, env)
    Qt, Q = jump_operator(rho, p, model), model.Q
    worst = 0.0
    for n in range(1, model.dim):
        ratio = abs(Qt[n - 1, n]) / abs(Qt[n, n - 1]) * abs(Q[n, n - 1]) / abs(Q[n - 1, n])
        worst = max(worst, abs(ratio - math.e))
    return worst <= 1e-10, f"max |ratio - e| {worst:.2e}"


@check("unravel.reproducibility")
def _repro(cfg):
    model = two_level()
    env = EnvironmentSpec.at_equilibrium(0.25, 1.0)
    runs = []
    for workers in (1, 3, 1):
        ens = Ensemble.from_pure([1, 0], 500, seed=99)
        res = run_unraveling(ens, model, env, UnravelConfig(1e-3, 0.2, 20, eps_floor=1e-2, workers=workers))
        runs.append(np.stack([r.rho for r in res.records]).tobytes() + res.final.psi.tobytes())
    ok = runs[0] == runs[1] == runs[2]
    return ok, "identical output for repeated runs and 1 vs 3 workers" if ok else "outputs differ"


# --- model_catalog ----------------------------------------------------------


@check("models.spec_invariants")
def _models(cfg):
    worst = 0.0
    for model in (two_level(), harmonic_oscillator(2), harmonic_oscillator(10), cfg.build_model()):
        worst = max(worst, hermiticity_defect(model.H), hermiticity_defect(model.Q))
    osc = harmonic_oscillator(12)
    off = np.abs(np.subtract.outer(np.arange(12), np.arange(12))) != 1
    tri = float(np.max(np.abs(osc.Q[off])))
    spacing = float(np.max(np.abs(np.diff(np.diag(osc.H).real) - 1.0)))
    ok = worst <= 1e-12 and tri == 0.0 and spacing <= 1e-12
    return ok, f"hermiticity {worst:.1e}, off-tridiagonal {tri:.1e}, spacing error {spacing:.1e}"


@check("models.truncation_diagnostic")
def _truncation(cfg):
    worst = 0.0
    for dim in (10, 12, 16):
        model = harmonic_oscillator(dim)
        for kT in (0.25, 0.5, 1.0):
            worst = max(worst, gibbs_state(model.H, kT).op[-1, -1].real)
    return worst < 1e-4, f"max top-level population {worst:.2e}"


# --- sim_cli ----------------------------------------------------------------


@check("cli.config_roundtrip")
def _roundtrip(cfg):
    again = SimConfig.from_dict(cfg.to_dict())
    twice = SimConfig.from_dict(again.to_dict())
    ok = again.to_dict() == cfg.to_dict() == twice.to_dict()
    return ok, "load -> serialize -> load is stable" if ok else "round-trip changed the configuration"


@check("cli.byte_identical_output")
def _bytes(cfg):
    from .experiments import unravel_series
    from .io import write_timeseries

    small = SimConfig.from_dict(cfg.to_dict())
    small.run.ensemble_size = min(small.run.ensemble_size, 300)
    small.run.t_end = min(small.run.t_end, 0.1)
    small.run.record_every = 10
    blobs = []
    with tempfile.TemporaryDirectory() as tmp:
        for i, workers in enumerate((1, 2, 1)):
            small.run.workers = workers
            out = unravel_series(small)
            path = Path(tmp) / f"run{i}.csv"
            write_timeseries(out.series, "csv", path, out.columns)
            blobs.append(path.read_bytes())
    ok = blobs[0] == blobs[1] == blobs[2]
    return ok, "byte-identical across repeats and worker counts" if ok else "files differ"


def run_validation(cfg: SimConfig, only: str | None = None) -> list[CheckResult]:
    results = []
    for name, fn in CHECKS:
        if only and only not in name:
            continue
        try:
            passed, detail = fn(cfg)
        except Exception as exc:  # a crashing check is a failed check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(passed), detail))
    return results

